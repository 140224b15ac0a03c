#pragma once

#include <string>
#include <vector>

#include "ncodec/discriminator.hpp"
#include "ncodec/mel.hpp"

namespace ncodec {

struct LossWeights {
    double lambda_fm = 2.0;
    double lambda_mel = 45.0;
    double lambda_vq = 1.0;

    void validate() const;
};

enum class GanFlavor { hinge, least_squares };

std::string to_string(GanFlavor f);
GanFlavor parse_gan_flavor(const std::string& name);

// Mean absolute difference of log-mel matrices.
ag::Var mel_loss(const MelExtractor& mel, const ag::Var& x, const ag::Var& x_hat);
double mel_loss(const Waveform& x, const Waveform& x_hat, const MelConfig& cfg);

// Single-discriminator losses over logit tensors; expectations are means over
// every logit element.
ag::Var hinge_d_loss(const ag::Var& real, const ag::Var& fake);
ag::Var hinge_g_loss(const ag::Var& fake);
ag::Var lsgan_d_loss(const ag::Var& real, const ag::Var& fake);
ag::Var lsgan_g_loss(const ag::Var& fake);

// Ensemble forms: per-discriminator losses summed across discriminators.
ag::Var discriminator_loss(GanFlavor flavor, const std::vector<DiscriminatorOutput>& real,
                           const std::vector<DiscriminatorOutput>& fake);
ag::Var adversarial_g_loss(GanFlavor flavor, const std::vector<DiscriminatorOutput>& fake);

// Mean over all (discriminator, layer) pairs of the mean absolute difference
// between feature maps. Real maps act as constants.
ag::Var feature_matching_loss(const std::vector<std::vector<ag::Var>>& real_maps,
                              const std::vector<std::vector<ag::Var>>& fake_maps);
ag::Var feature_matching_loss(const std::vector<DiscriminatorOutput>& real, const std::vector<DiscriminatorOutput>& fake);

// Parts left null are treated as zero.
struct GeneratorLossParts {
    ag::Var adv, fm, mel, vq;
};

// L_adv + lambda_fm * L_fm + lambda_mel * L_mel + lambda_vq * L_vq.
ag::Var generator_total_loss(const GeneratorLossParts& parts, const LossWeights& w);

}  // namespace ncodec
