#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "ncodec/nn.hpp"

namespace ncodec {

struct DiscriminatorOutput {
    ag::Var logits;
    std::vector<ag::Var> feature_maps;  // one per hidden layer, fixed order
};

// One conv layer of a scale discriminator: output channels, kernel, stride, groups.
struct ScaleLayer {
    int channels = 16;
    int kernel = 15;
    int stride = 1;
    int groups = 1;
};

struct DiscriminatorConfig {
    std::vector<std::string> kinds{"mpd", "msd"};  // any of mpd, msd, stftd

    std::vector<int> periods{2, 3, 5, 7, 11};
    std::vector<int> mpd_channels{32, 128, 512, 1024};
    int mpd_kernel = 5;
    int mpd_stride = 3;

    int msd_scales = 3;
    std::vector<ScaleLayer> msd_layers{{128, 15, 1, 1},   {128, 41, 2, 4},   {256, 41, 2, 16}, {512, 41, 4, 16},
                                       {1024, 41, 4, 16}, {1024, 41, 1, 16}, {1024, 5, 1, 1}};
    bool spectral_first_scale = true;

    int stft_fft = 1024;
    int stft_hop = 256;
    std::vector<int> stft_channels{32, 32, 32};

    float slope = 0.2f;

    bool has(const std::string& kind) const;
    void validate() const;
};

// Period discriminator: the waveform is right-padded to a multiple of p and
// folded into p interleaved columns of length T/p, each processed by the same
// stack of strided 1-D convolutions along the column.
class PeriodDiscriminator {
public:
    PeriodDiscriminator(ParamStore& ps, const std::string& name, int period, const DiscriminatorConfig& cfg,
                        Initializer& init);
    DiscriminatorOutput forward(const ag::Var& wave) const;
    int period() const { return period_; }

private:
    int period_;
    float slope_;
    std::vector<Conv1d> convs_;
    Conv1d post_;
};

class ScaleDiscriminator {
public:
    ScaleDiscriminator(ParamStore& ps, const std::string& name, const DiscriminatorConfig& cfg, WeightNorm norm,
                       Initializer& init);
    DiscriminatorOutput forward(const ag::Var& wave) const;

private:
    float slope_;
    std::vector<Conv1d> convs_;
    Conv1d post_;
};

// Complex-spectrogram discriminator: a fixed windowed-DFT analysis produces
// real and imaginary parts as channels, followed by learned convolutions
// over frames.
class StftDiscriminator {
public:
    StftDiscriminator(ParamStore& ps, const std::string& name, const DiscriminatorConfig& cfg, Initializer& init);
    DiscriminatorOutput forward(const ag::Var& wave) const;
    // Real/imaginary analysis of a [B, 1, T] batch -> [B, 2*bins, frames].
    ag::Var analysis(const ag::Var& wave) const;

private:
    int fft_, hop_;
    float slope_;
    ag::Var basis_;
    std::vector<Conv1d> convs_;
    Conv1d post_;
};

std::vector<DiscriminatorOutput> mpd_forward(const std::vector<PeriodDiscriminator>& ds, const ag::Var& wave);
// Scale k sees the input average-pooled by two, k times.
std::vector<DiscriminatorOutput> msd_forward(const std::vector<ScaleDiscriminator>& ds, const ag::Var& wave);
DiscriminatorOutput stftd_forward(const StftDiscriminator& d, const ag::Var& wave);

// Number of STFT discriminator passes in this process.
int64_t stftd_invocations();

// The configured ensemble, in the order MPD periods, MSD scales, STFTD.
class DiscriminatorSet {
public:
    DiscriminatorSet(ParamStore& ps, const std::string& prefix, const DiscriminatorConfig& cfg, Initializer& init);
    std::vector<DiscriminatorOutput> forward(const ag::Var& wave) const;
    const DiscriminatorConfig& config() const { return cfg_; }
    size_t size() const { return mpd_.size() + msd_.size() + stft_.size(); }

private:
    DiscriminatorConfig cfg_;
    std::vector<PeriodDiscriminator> mpd_;
    std::vector<ScaleDiscriminator> msd_;
    std::vector<StftDiscriminator> stft_;
};

}  // namespace ncodec
