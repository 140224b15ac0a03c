#include "ncodec/discriminator.hpp"

#include <algorithm>
#include <cmath>

#include "ncodec/error.hpp"

namespace ncodec {

namespace {

std::atomic<int64_t> g_stftd_calls{0};

ConvSpec centered(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t groups, WeightNorm norm) {
    ConvSpec s;
    s.in_ch = in;
    s.out_ch = out;
    s.kernel = kernel;
    s.stride = stride;
    s.groups = groups;
    s.padding = Padding::centered;
    s.norm = norm;
    return s;
}

}  // namespace

bool DiscriminatorConfig::has(const std::string& kind) const {
    return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
}

void DiscriminatorConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::config, "discriminator config: " + m); };
    for (const auto& k : kinds)
        if (k != "mpd" && k != "msd" && k != "stftd") fail("unknown discriminator kind '" + k + "'");
    if (has("mpd")) {
        if (periods.empty() || mpd_channels.empty()) fail("mpd needs periods and channels");
        for (int p : periods)
            if (p < 1) fail("periods must be >= 1");
        if (mpd_kernel < 1 || mpd_stride < 1) fail("mpd kernel and stride must be >= 1");
    }
    if (has("msd")) {
        if (msd_scales < 1 || msd_layers.empty()) fail("msd needs scales and layers");
        int in = 1;
        for (const auto& l : msd_layers) {
            if (l.channels < 1 || l.kernel < 1 || l.stride < 1 || l.groups < 1) fail("msd layer sizes must be >= 1");
            if (in % l.groups || l.channels % l.groups) fail("msd layer channels not divisible by groups");
            in = l.channels;
        }
    }
    if (has("stftd") && (stft_fft < 2 || stft_hop < 1 || stft_channels.empty())) fail("invalid stftd geometry");
}

PeriodDiscriminator::PeriodDiscriminator(ParamStore& ps, const std::string& name, int period,
                                         const DiscriminatorConfig& cfg, Initializer& init)
    : period_(period), slope_(cfg.slope) {
    int in = 1;
    for (size_t i = 0; i < cfg.mpd_channels.size(); ++i) {
        convs_.emplace_back(ps, name + ".conv" + std::to_string(i),
                            centered(in, cfg.mpd_channels[i], cfg.mpd_kernel, cfg.mpd_stride, 1, WeightNorm::weight),
                            init);
        in = cfg.mpd_channels[i];
    }
    convs_.emplace_back(ps, name + ".conv" + std::to_string(cfg.mpd_channels.size()),
                        centered(in, in, cfg.mpd_kernel, 1, 1, WeightNorm::weight), init);
    post_ = Conv1d(ps, name + ".post", centered(in, 1, 3, 1, 1, WeightNorm::weight), init);
}

DiscriminatorOutput PeriodDiscriminator::forward(const ag::Var& wave) const {
    DiscriminatorOutput out;
    ag::Var h = ag::period_fold(wave, period_);
    for (const auto& c : convs_) {
        h = ag::leaky_relu(c(h), slope_);
        out.feature_maps.push_back(h);
    }
    out.logits = post_(h);
    return out;
}

ScaleDiscriminator::ScaleDiscriminator(ParamStore& ps, const std::string& name, const DiscriminatorConfig& cfg,
                                       WeightNorm norm, Initializer& init)
    : slope_(cfg.slope) {
    int in = 1;
    for (size_t i = 0; i < cfg.msd_layers.size(); ++i) {
        const auto& l = cfg.msd_layers[i];
        convs_.emplace_back(ps, name + ".conv" + std::to_string(i),
                            centered(in, l.channels, l.kernel, l.stride, l.groups, norm), init);
        in = l.channels;
    }
    post_ = Conv1d(ps, name + ".post", centered(in, 1, 3, 1, 1, norm), init);
}

DiscriminatorOutput ScaleDiscriminator::forward(const ag::Var& wave) const {
    DiscriminatorOutput out;
    ag::Var h = wave;
    for (const auto& c : convs_) {
        h = ag::leaky_relu(c(h), slope_);
        out.feature_maps.push_back(h);
    }
    out.logits = post_(h);
    return out;
}

StftDiscriminator::StftDiscriminator(ParamStore& ps, const std::string& name, const DiscriminatorConfig& cfg,
                                     Initializer& init)
    : fft_(cfg.stft_fft), hop_(cfg.stft_hop), slope_(cfg.slope) {
    const int nb = fft_ / 2 + 1;
    Tensor basis({2 * nb, 1, fft_});
    for (int f = 0; f < nb; ++f)
        for (int k = 0; k < fft_; ++k) {
            const int n = fft_ - 1 - k;  // lag order: tap k reads sample n of the frame
            const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / fft_);
            const double ph = 2.0 * M_PI * double(f) * n / fft_;
            basis.at(f, 0, k) = static_cast<float>(win * std::cos(ph));
            basis.at(nb + f, 0, k) = static_cast<float>(-win * std::sin(ph));
        }
    basis_ = ag::constant(std::move(basis));
    int in = 2 * nb;
    for (size_t i = 0; i < cfg.stft_channels.size(); ++i) {
        convs_.emplace_back(ps, name + ".conv" + std::to_string(i),
                            centered(in, cfg.stft_channels[i], 3, 1, 1, WeightNorm::weight), init);
        in = cfg.stft_channels[i];
    }
    post_ = Conv1d(ps, name + ".post", centered(in, 1, 3, 1, 1, WeightNorm::weight), init);
}

ag::Var StftDiscriminator::analysis(const ag::Var& wave) const {
    const int64_t T = wave->value.dim(2);
    if (T < fft_)
        throw Error(ErrorKind::shape, "STFT discriminator needs at least " + std::to_string(fft_) + " samples, got " +
                                          std::to_string(T));
    ConvGeometry g;
    g.stride = hop_;
    g.offset = fft_ - 1;
    g.out_len = (T - fft_) / hop_ + 1;
    return ag::conv1d(wave, basis_, nullptr, g);
}

DiscriminatorOutput StftDiscriminator::forward(const ag::Var& wave) const {
    ++g_stftd_calls;
    DiscriminatorOutput out;
    ag::Var h = analysis(wave);
    for (const auto& c : convs_) {
        h = ag::leaky_relu(c(h), slope_);
        out.feature_maps.push_back(h);
    }
    out.logits = post_(h);
    return out;
}

std::vector<DiscriminatorOutput> mpd_forward(const std::vector<PeriodDiscriminator>& ds, const ag::Var& wave) {
    std::vector<DiscriminatorOutput> out;
    for (const auto& d : ds) out.push_back(d.forward(wave));
    return out;
}

std::vector<DiscriminatorOutput> msd_forward(const std::vector<ScaleDiscriminator>& ds, const ag::Var& wave) {
    std::vector<DiscriminatorOutput> out;
    ag::Var x = wave;
    for (size_t k = 0; k < ds.size(); ++k) {
        if (k > 0) {
            if (x->value.dim(2) < 2)
                throw Error(ErrorKind::shape, "input too short for " + std::to_string(ds.size()) + " MSD scales");
            x = ag::avg_pool2(x);
        }
        out.push_back(ds[k].forward(x));
    }
    return out;
}

DiscriminatorOutput stftd_forward(const StftDiscriminator& d, const ag::Var& wave) { return d.forward(wave); }

int64_t stftd_invocations() { return g_stftd_calls.load(); }

DiscriminatorSet::DiscriminatorSet(ParamStore& ps, const std::string& prefix, const DiscriminatorConfig& cfg,
                                   Initializer& init)
    : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.has("mpd"))
        for (int p : cfg_.periods) mpd_.emplace_back(ps, prefix + ".mpd.p" + std::to_string(p), p, cfg_, init);
    if (cfg_.has("msd"))
        for (int k = 0; k < cfg_.msd_scales; ++k)
            msd_.emplace_back(ps, prefix + ".msd.s" + std::to_string(k), cfg_,
                              k == 0 && cfg_.spectral_first_scale ? WeightNorm::spectral : WeightNorm::weight, init);
    if (cfg_.has("stftd")) stft_.emplace_back(ps, prefix + ".stftd", cfg_, init);
}

std::vector<DiscriminatorOutput> DiscriminatorSet::forward(const ag::Var& wave) const {
    auto out = mpd_forward(mpd_, wave);
    auto ms = msd_forward(msd_, wave);
    out.insert(out.end(), ms.begin(), ms.end());
    for (const auto& s : stft_) out.push_back(stftd_forward(s, wave));
    return out;
}

}  // namespace ncodec
