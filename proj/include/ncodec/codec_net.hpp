#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ncodec/nn.hpp"

namespace ncodec {

struct EncoderConfig {
    std::vector<int> downsample_factors{2, 2, 3, 5, 5};
    int base_channels = 16;
    int max_channels = 0;  // 0 = no cap on the per-stage doubling
    int code_dim = 64;
    int num_blocks_per_stage = 3;
    int kernel_size = 7;
    std::vector<int> dilations{1, 3, 9};
    Activation activation{ActKind::leaky_relu, 0.2f};

    int hop() const;
    // Channel width entering each stage plus the final width (size stages+1).
    std::vector<int> stage_channels() const;
    void validate() const;
};

enum class VariantId { sym = 0, v0 = 1, v1 = 2, v2 = 3 };

std::string to_string(VariantId v);
VariantId parse_variant(const std::string& name);

struct GeneratorConfig {
    VariantId variant = VariantId::sym;
    // HiFi-GAN style generators (v0/v1/v2).
    int upsample_initial_channels = 512;
    int min_channels = 1;
    std::vector<int> branch_kernels{3, 7, 11};  // v0
    int group_kernel = 0;                       // 0 = variant default (v1 11, v2 3)
    int num_groups = 3;
    std::vector<int> mrf_dilations{1, 3, 5};
    int kernel_size = 7;
    Activation activation{ActKind::elu, 1.0f};

    int grouped_kernel() const { return group_kernel > 0 ? group_kernel : variant == VariantId::v2 ? 3 : 11; }
    void validate() const;
};

// Residual unit x + conv1x1(act(conv_k,d(act(x)))).
class ResidualUnit {
public:
    ResidualUnit() = default;
    ResidualUnit(ParamStore& ps, const std::string& name, int channels, int kernel, int dilation, Activation act,
                 Initializer& init);
    ag::Var forward(const ag::Var& x, StreamContext* ctx) const;
    // Samples of left context the unit reads.
    int64_t receptive_history() const { return conv_.history() + proj_.history(); }

private:
    Conv1d conv_, proj_;
    Activation act_;
};

// Causal convolutional encoder: waveform [B, 1, T] -> features [B, C, T/hop].
class Encoder {
public:
    Encoder() = default;
    Encoder(ParamStore& ps, const std::string& prefix, const EncoderConfig& cfg, Initializer& init);

    ag::Var forward(const ag::Var& wave, StreamContext* ctx = nullptr) const;
    int out_channels() const { return out_channels_; }
    const EncoderConfig& config() const { return cfg_; }

private:
    struct Stage {
        std::vector<ResidualUnit> units;
        Conv1d down;
    };
    EncoderConfig cfg_;
    Conv1d in_conv_;
    std::vector<Stage> stages_;
    int out_channels_ = 0;
};

// Decoders map latent frames [B, D, F] to waveform [B, 1, F*hop]. The upsample
// factors are the encoder's downsample factors in reverse order.
class Generator {
public:
    virtual ~Generator() = default;
    virtual ag::Var forward(const ag::Var& latents, StreamContext* ctx = nullptr) const = 0;
    // Number of past latent frames that can influence the current frame's
    // samples (beyond the frame itself).
    virtual int64_t lookback_frames() const = 0;
    virtual VariantId variant() const = 0;
};

// Mirror of the encoder with transposed-conv upsampling and tanh output.
class SymDecoder : public Generator {
public:
    SymDecoder(ParamStore& ps, const std::string& prefix, const EncoderConfig& enc, const GeneratorConfig& cfg,
               Initializer& init);
    ag::Var forward(const ag::Var& latents, StreamContext* ctx = nullptr) const override;
    int64_t lookback_frames() const override;
    VariantId variant() const override { return VariantId::sym; }

private:
    struct Stage {
        ConvTranspose1d up;
        std::vector<ResidualUnit> units;
    };
    EncoderConfig enc_;
    Activation act_;
    Conv1d in_conv_, out_conv_;
    std::vector<Stage> stages_;
};

// Multi-receptive-field fusion block. v0 runs one residual stack per branch
// kernel; v1/v2 replicate the input num_groups times along channels and run a
// single grouped convolution stack with a shared kernel. Branch outputs are
// averaged in both cases.
class Mrf {
public:
    Mrf() = default;
    Mrf(ParamStore& ps, const std::string& name, int channels, const GeneratorConfig& cfg, Initializer& init);
    ag::Var forward(const ag::Var& x, StreamContext* ctx) const;
    int64_t receptive_history() const;
    int branches() const { return branches_; }
    bool grouped() const { return grouped_; }

private:
    struct Layer {
        Conv1d dilated, plain;
    };
    using Stack = std::vector<Layer>;
    ag::Var run_stack(const Stack& s, ag::Var x, StreamContext* ctx) const;

    Activation act_;
    bool grouped_ = false;
    int branches_ = 0;
    std::vector<Stack> stacks_;  // one per branch (v0) or a single grouped stack
};

class HifiGanGenerator : public Generator {
public:
    HifiGanGenerator(ParamStore& ps, const std::string& prefix, int code_dim, const EncoderConfig& enc,
                     const GeneratorConfig& cfg, Initializer& init);
    ag::Var forward(const ag::Var& latents, StreamContext* ctx = nullptr) const override;
    int64_t lookback_frames() const override;
    VariantId variant() const override { return cfg_.variant; }

private:
    struct Stage {
        ConvTranspose1d up;
        Mrf mrf;
    };
    GeneratorConfig cfg_;
    EncoderConfig enc_;
    Conv1d in_conv_, out_conv_;
    std::vector<Stage> stages_;
};

std::unique_ptr<Generator> make_generator(ParamStore& ps, const std::string& prefix, int code_dim,
                                          const EncoderConfig& enc, const GeneratorConfig& cfg, Initializer& init);

}  // namespace ncodec
