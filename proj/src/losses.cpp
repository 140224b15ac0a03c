#include "ncodec/losses.hpp"

#include <cmath>

#include "ncodec/error.hpp"

namespace ncodec {

void LossWeights::validate() const {
    for (double v : {lambda_fm, lambda_mel, lambda_vq})
        if (!(std::isfinite(v) && v >= 0.0)) throw Error(ErrorKind::config, "loss weights must be finite and >= 0");
}

std::string to_string(GanFlavor f) { return f == GanFlavor::hinge ? "hinge" : "least_squares"; }

GanFlavor parse_gan_flavor(const std::string& name) {
    if (name == "hinge") return GanFlavor::hinge;
    if (name == "least_squares") return GanFlavor::least_squares;
    throw Error(ErrorKind::config, "unknown GAN flavor '" + name + "' (expected hinge or least_squares)");
}

ag::Var mel_loss(const MelExtractor& mel, const ag::Var& x, const ag::Var& x_hat) {
    if (x->shape() != x_hat->shape())
        throw Error(ErrorKind::shape, "mel_loss: shape mismatch " + shape_str(x->shape()) + " vs " +
                                          shape_str(x_hat->shape()));
    return ag::l1_mean(mel.forward(x), mel.forward(x_hat));
}

double mel_loss(const Waveform& x, const Waveform& x_hat, const MelConfig& cfg) {
    if (x.length() != x_hat.length() || x.sample_rate != x_hat.sample_rate)
        throw Error(ErrorKind::shape, "mel_loss: waveforms differ in length or rate");
    const Matrix a = mel_spectrogram(x, cfg), b = mel_spectrogram(x_hat, cfg);
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(double(a.data[i]) - b.data[i]);
    return s / a.data.size();
}

ag::Var hinge_d_loss(const ag::Var& real, const ag::Var& fake) {
    return ag::add(ag::mean(ag::relu(ag::add_scalar(ag::neg(real), 1.0f))),
                   ag::mean(ag::relu(ag::add_scalar(fake, 1.0f))));
}

ag::Var hinge_g_loss(const ag::Var& fake) { return ag::mean(ag::relu(ag::add_scalar(ag::neg(fake), 1.0f))); }

ag::Var lsgan_d_loss(const ag::Var& real, const ag::Var& fake) {
    return ag::add(ag::mean(ag::square(ag::add_scalar(ag::neg(real), 1.0f))), ag::mean(ag::square(fake)));
}

ag::Var lsgan_g_loss(const ag::Var& fake) { return ag::mean(ag::square(ag::add_scalar(ag::neg(fake), 1.0f))); }

ag::Var discriminator_loss(GanFlavor flavor, const std::vector<DiscriminatorOutput>& real,
                           const std::vector<DiscriminatorOutput>& fake) {
    if (real.size() != fake.size()) throw Error(ErrorKind::shape, "discriminator_loss: ensemble size mismatch");
    std::vector<ag::Var> terms;
    for (size_t i = 0; i < real.size(); ++i)
        terms.push_back(flavor == GanFlavor::hinge ? hinge_d_loss(real[i].logits, fake[i].logits)
                                                   : lsgan_d_loss(real[i].logits, fake[i].logits));
    return ag::sum(terms);
}

ag::Var adversarial_g_loss(GanFlavor flavor, const std::vector<DiscriminatorOutput>& fake) {
    std::vector<ag::Var> terms;
    for (const auto& f : fake)
        terms.push_back(flavor == GanFlavor::hinge ? hinge_g_loss(f.logits) : lsgan_g_loss(f.logits));
    return ag::sum(terms);
}

ag::Var feature_matching_loss(const std::vector<std::vector<ag::Var>>& real_maps,
                              const std::vector<std::vector<ag::Var>>& fake_maps) {
    if (real_maps.size() != fake_maps.size())
        throw Error(ErrorKind::shape, "feature_matching_loss: discriminator count mismatch");
    std::vector<ag::Var> terms;
    for (size_t d = 0; d < real_maps.size(); ++d) {
        if (real_maps[d].size() != fake_maps[d].size())
            throw Error(ErrorKind::shape, "feature_matching_loss: layer count mismatch");
        for (size_t l = 0; l < real_maps[d].size(); ++l) {
            if (real_maps[d][l]->shape() != fake_maps[d][l]->shape())
                throw Error(ErrorKind::shape, "feature_matching_loss: map shape mismatch " +
                                                  shape_str(real_maps[d][l]->shape()) + " vs " +
                                                  shape_str(fake_maps[d][l]->shape()));
            terms.push_back(ag::l1_mean(ag::detach(real_maps[d][l]), fake_maps[d][l]));
        }
    }
    if (terms.empty()) return ag::constant(Tensor::scalar(0.0f));
    return ag::scale(ag::sum(terms), 1.0f / static_cast<float>(terms.size()));
}

ag::Var feature_matching_loss(const std::vector<DiscriminatorOutput>& real, const std::vector<DiscriminatorOutput>& fake) {
    std::vector<std::vector<ag::Var>> r, f;
    for (const auto& o : real) r.push_back(o.feature_maps);
    for (const auto& o : fake) f.push_back(o.feature_maps);
    return feature_matching_loss(r, f);
}

ag::Var generator_total_loss(const GeneratorLossParts& parts, const LossWeights& w) {
    std::vector<ag::Var> terms;
    if (parts.adv) terms.push_back(parts.adv);
    if (parts.fm) terms.push_back(ag::scale(parts.fm, static_cast<float>(w.lambda_fm)));
    if (parts.mel) terms.push_back(ag::scale(parts.mel, static_cast<float>(w.lambda_mel)));
    if (parts.vq) terms.push_back(ag::scale(parts.vq, static_cast<float>(w.lambda_vq)));
    if (terms.empty()) return ag::constant(Tensor::scalar(0.0f));
    return ag::sum(terms);
}

}  // namespace ncodec
