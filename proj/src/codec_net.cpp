#include "ncodec/codec_net.hpp"

#include <algorithm>

#include "ncodec/error.hpp"

namespace ncodec {

namespace {

ConvSpec causal(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1, int64_t dilation = 1, int64_t groups = 1) {
    ConvSpec s;
    s.in_ch = in;
    s.out_ch = out;
    s.kernel = kernel;
    s.stride = stride;
    s.dilation = dilation;
    s.groups = groups;
    s.padding = Padding::causal;
    return s;
}

// Left context in input frames of a causal upsampler whose output needs
// `samples` of history.
int64_t upsampler_lookback(int64_t samples, const ConvTranspose1d& up) {
    return (samples + up.kernel() - 1 + up.stride() - 1) / up.stride();
}

}  // namespace

int EncoderConfig::hop() const {
    int h = 1;
    for (int f : downsample_factors) h *= f;
    return h;
}

std::vector<int> EncoderConfig::stage_channels() const {
    std::vector<int> c{base_channels};
    for (size_t i = 0; i < downsample_factors.size(); ++i) {
        int next = c.back() * 2;
        if (max_channels > 0) next = std::min(next, max_channels);
        c.push_back(next);
    }
    return c;
}

void EncoderConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::config, "encoder config: " + m); };
    if (downsample_factors.empty()) fail("downsample_factors must not be empty");
    for (int f : downsample_factors)
        if (f < 1) fail("downsample factors must be >= 1");
    if (base_channels < 1 || code_dim < 1) fail("base_channels and code_dim must be positive");
    if (max_channels < 0) fail("max_channels must be >= 0");
    if (num_blocks_per_stage < 0) fail("num_blocks_per_stage must be >= 0");
    if (kernel_size < 1) fail("kernel_size must be >= 1");
    if (dilations.empty()) fail("dilations must not be empty");
    for (int d : dilations)
        if (d < 1) fail("dilations must be >= 1");
}

std::string to_string(VariantId v) {
    switch (v) {
    case VariantId::sym: return "sym";
    case VariantId::v0: return "v0";
    case VariantId::v1: return "v1";
    case VariantId::v2: return "v2";
    }
    return "sym";
}

VariantId parse_variant(const std::string& name) {
    if (name == "sym") return VariantId::sym;
    if (name == "v0") return VariantId::v0;
    if (name == "v1") return VariantId::v1;
    if (name == "v2") return VariantId::v2;
    throw Error(ErrorKind::config, "unknown generator variant '" + name + "' (expected sym, v0, v1 or v2)");
}

void GeneratorConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::config, "generator config: " + m); };
    if (variant == VariantId::sym) return;
    if (upsample_initial_channels < 1 || min_channels < 1) fail("channel counts must be positive");
    if (kernel_size < 1) fail("kernel_size must be >= 1");
    if (mrf_dilations.empty()) fail("mrf_dilations must not be empty");
    if (variant == VariantId::v0) {
        if (branch_kernels.empty()) fail("v0 needs at least one branch kernel");
        auto k = branch_kernels;
        std::sort(k.begin(), k.end());
        if (std::adjacent_find(k.begin(), k.end()) != k.end()) fail("v0 branch kernels must be distinct");
        for (int x : k)
            if (x < 1) fail("branch kernels must be >= 1");
    } else {
        if (num_groups < 1) fail("num_groups must be >= 1");
        if (group_kernel < 0) fail("group_kernel must be >= 0");
    }
}

ResidualUnit::ResidualUnit(ParamStore& ps, const std::string& name, int channels, int kernel, int dilation,
                           Activation act, Initializer& init)
    : conv_(ps, name + ".conv", causal(channels, channels, kernel, 1, dilation), init),
      proj_(ps, name + ".proj", causal(channels, channels, 1), init),
      act_(act) {}

ag::Var ResidualUnit::forward(const ag::Var& x, StreamContext* ctx) const {
    ag::Var h = conv_(act_(x), ctx);
    h = proj_(act_(h), ctx);
    return ag::add(x, h);
}

Encoder::Encoder(ParamStore& ps, const std::string& prefix, const EncoderConfig& cfg, Initializer& init) : cfg_(cfg) {
    cfg_.validate();
    const auto ch = cfg_.stage_channels();
    in_conv_ = Conv1d(ps, prefix + ".in", causal(1, ch[0], cfg_.kernel_size), init);
    for (size_t i = 0; i < cfg_.downsample_factors.size(); ++i) {
        Stage st;
        const std::string sp = prefix + ".stage" + std::to_string(i);
        for (int b = 0; b < cfg_.num_blocks_per_stage; ++b) {
            const int d = cfg_.dilations[b % cfg_.dilations.size()];
            st.units.emplace_back(ps, sp + ".res" + std::to_string(b), ch[i], cfg_.kernel_size, d, cfg_.activation,
                                  init);
        }
        const int s = cfg_.downsample_factors[i];
        st.down = Conv1d(ps, sp + ".down", causal(ch[i], ch[i + 1], 2 * s, s), init);
        stages_.push_back(std::move(st));
    }
    out_channels_ = ch.back();
}

ag::Var Encoder::forward(const ag::Var& wave, StreamContext* ctx) const {
    const auto& s = wave->shape();
    if (s.size() != 3 || s[1] != 1) throw Error(ErrorKind::shape, "encoder expects [B, 1, T], got " + shape_str(s));
    ag::Var h = in_conv_(wave, ctx);
    for (const auto& st : stages_) {
        for (const auto& u : st.units) h = u.forward(h, ctx);
        h = st.down(cfg_.activation(h), ctx);
    }
    return cfg_.activation(h);
}

SymDecoder::SymDecoder(ParamStore& ps, const std::string& prefix, const EncoderConfig& enc, const GeneratorConfig& cfg,
                       Initializer& init)
    : enc_(enc), act_(cfg.activation) {
    enc_.validate();
    const auto ch = enc_.stage_channels();
    const int S = static_cast<int>(enc_.downsample_factors.size());
    in_conv_ = Conv1d(ps, prefix + ".in", causal(enc_.code_dim, ch[S], enc_.kernel_size), init);
    for (int i = S - 1; i >= 0; --i) {
        const std::string sp = prefix + ".stage" + std::to_string(S - 1 - i);
        const int s = enc_.downsample_factors[i];
        Stage st{ConvTranspose1d(ps, sp + ".up", ch[i + 1], ch[i], 2 * s, s, init), {}};
        for (int b = 0; b < enc_.num_blocks_per_stage; ++b) {
            const int d = enc_.dilations[b % enc_.dilations.size()];
            st.units.emplace_back(ps, sp + ".res" + std::to_string(b), ch[i], enc_.kernel_size, d, act_, init);
        }
        stages_.push_back(std::move(st));
    }
    out_conv_ = Conv1d(ps, prefix + ".out", causal(ch[0], 1, enc_.kernel_size), init);
}

ag::Var SymDecoder::forward(const ag::Var& latents, StreamContext* ctx) const {
    ag::Var h = in_conv_(latents, ctx);
    for (const auto& st : stages_) {
        h = st.up(act_(h), ctx);
        for (const auto& u : st.units) h = u.forward(h, ctx);
    }
    return ag::tanh(out_conv_(act_(h), ctx));
}

int64_t SymDecoder::lookback_frames() const {
    int64_t L = out_conv_.history();
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
        for (const auto& u : it->units) L += u.receptive_history();
        L = upsampler_lookback(L, it->up);
    }
    return L + in_conv_.history();
}

Mrf::Mrf(ParamStore& ps, const std::string& name, int channels, const GeneratorConfig& cfg, Initializer& init)
    : act_(cfg.activation) {
    auto build = [&](const std::string& sp, int64_t ch, int kernel, int groups) {
        Stack s;
        for (size_t l = 0; l < cfg.mrf_dilations.size(); ++l) {
            const std::string lp = sp + ".l" + std::to_string(l);
            s.push_back({Conv1d(ps, lp + ".dilated", causal(ch, ch, kernel, 1, cfg.mrf_dilations[l], groups), init),
                         Conv1d(ps, lp + ".plain", causal(ch, ch, kernel, 1, 1, groups), init)});
        }
        return s;
    };
    if (cfg.variant == VariantId::v0) {
        branches_ = static_cast<int>(cfg.branch_kernels.size());
        for (int b = 0; b < branches_; ++b)
            stacks_.push_back(build(name + ".b" + std::to_string(b), channels, cfg.branch_kernels[b], 1));
    } else if (cfg.variant == VariantId::v1 || cfg.variant == VariantId::v2) {
        grouped_ = true;
        branches_ = cfg.num_groups;
        stacks_.push_back(build(name + ".grouped", int64_t(channels) * cfg.num_groups, cfg.grouped_kernel(), cfg.num_groups));
    } else {
        throw Error(ErrorKind::config, "MRF requires variant v0, v1 or v2");
    }
}

ag::Var Mrf::run_stack(const Stack& s, ag::Var x, StreamContext* ctx) const {
    for (const auto& l : s) {
        ag::Var h = l.dilated(act_(x), ctx);
        h = l.plain(act_(h), ctx);
        x = ag::add(x, h);
    }
    return x;
}

ag::Var Mrf::forward(const ag::Var& x, StreamContext* ctx) const {
    if (grouped_) return ag::group_mean(run_stack(stacks_[0], ag::repeat_channels(x, branches_), ctx), branches_);
    ag::Var acc;
    for (const auto& s : stacks_) {
        ag::Var y = run_stack(s, x, ctx);
        acc = acc ? ag::add(acc, y) : y;
    }
    return ag::scale(acc, 1.0f / static_cast<float>(branches_));
}

int64_t Mrf::receptive_history() const {
    int64_t best = 0;
    for (const auto& s : stacks_) {
        int64_t L = 0;
        for (const auto& l : s) L += l.dilated.history() + l.plain.history();
        best = std::max(best, L);
    }
    return best;
}

HifiGanGenerator::HifiGanGenerator(ParamStore& ps, const std::string& prefix, int code_dim, const EncoderConfig& enc,
                                   const GeneratorConfig& cfg, Initializer& init)
    : cfg_(cfg), enc_(enc) {
    cfg_.validate();
    enc_.validate();
    if (cfg_.variant == VariantId::sym) throw Error(ErrorKind::config, "HiFi-GAN generator needs variant v0, v1 or v2");
    int ch = cfg_.upsample_initial_channels;
    in_conv_ = Conv1d(ps, prefix + ".in", causal(code_dim, ch, cfg_.kernel_size), init);
    const auto& f = enc_.downsample_factors;
    for (size_t i = 0; i < f.size(); ++i) {
        const int s = f[f.size() - 1 - i];
        const int next = std::max(ch / 2, cfg_.min_channels);
        const std::string sp = prefix + ".stage" + std::to_string(i);
        Stage st{ConvTranspose1d(ps, sp + ".up", ch, next, 2 * s, s, init), Mrf(ps, sp + ".mrf", next, cfg_, init)};
        stages_.push_back(std::move(st));
        ch = next;
    }
    out_conv_ = Conv1d(ps, prefix + ".out", causal(ch, 1, cfg_.kernel_size), init);
}

ag::Var HifiGanGenerator::forward(const ag::Var& latents, StreamContext* ctx) const {
    ag::Var h = in_conv_(latents, ctx);
    for (const auto& st : stages_) {
        h = st.up(cfg_.activation(h), ctx);
        h = st.mrf.forward(h, ctx);
    }
    return ag::tanh(out_conv_(cfg_.activation(h), ctx));
}

int64_t HifiGanGenerator::lookback_frames() const {
    int64_t L = out_conv_.history();
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
        L += it->mrf.receptive_history();
        L = upsampler_lookback(L, it->up);
    }
    return L + in_conv_.history();
}

std::unique_ptr<Generator> make_generator(ParamStore& ps, const std::string& prefix, int code_dim,
                                          const EncoderConfig& enc, const GeneratorConfig& cfg, Initializer& init) {
    if (cfg.variant == VariantId::sym) {
        if (code_dim != enc.code_dim)
            throw Error(ErrorKind::config, "symmetric decoder code_dim must match the encoder");
        return std::make_unique<SymDecoder>(ps, prefix, enc, cfg, init);
    }
    return std::make_unique<HifiGanGenerator>(ps, prefix, code_dim, enc, cfg, init);
}

}  // namespace ncodec
