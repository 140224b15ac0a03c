#include "ncodec/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "ncodec/error.hpp"

namespace ncodec {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int64_t reflect_index(int64_t s, int64_t length) {
    if (length == 1) return 0;
    const int64_t period = 2 * (length - 1);
    s %= period;
    if (s < 0) s += period;
    return s < length ? s : period - s;
}

}  // namespace

void MelConfig::validate(int sample_rate) const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::config, "mel config: " + m); };
    if (sample_rate <= 0) fail("sample rate must be positive");
    if (fft_size < 2 || hop_length < 1 || win_length < 1) fail("fft_size, hop_length and win_length must be positive");
    if (win_length > fft_size) fail("win_length exceeds fft_size");
    if (num_mels < 1) fail("num_mels must be >= 1");
    if (!(fmin >= 0.0 && fmin < fmax)) fail("require 0 <= fmin < fmax");
    if (fmax > sample_rate / 2.0 + 1e-9)
        fail("fmax " + std::to_string(fmax) + " exceeds Nyquist for rate " + std::to_string(sample_rate));
    if (!(log_floor > 0.0)) fail("log_floor must be positive");
}

MelConfig default_mel_config(int sample_rate) {
    MelConfig c;
    c.hop_length = 300;
    c.win_length = static_cast<int>(std::lround(sample_rate * 0.025));
    int n = 1;
    while (n < c.win_length) n <<= 1;
    c.fft_size = std::max(n, sample_rate >= 44100 ? 2048 : n);
    c.num_mels = 80;
    c.fmin = 0.0;
    c.fmax = sample_rate / 2.0;
    c.log_floor = 1e-5;
    return c;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
    const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
    std::vector<double> c(cfg.num_mels);
    for (int m = 0; m < cfg.num_mels; ++m) c[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg.num_mels + 1));
    return c;
}

SpectralAnalyzer::SpectralAnalyzer(int fft_size, int win_length, int hop_length)
    : fft_size_(fft_size), win_length_(win_length), hop_(hop_length), window_(fft_size, 0.0f) {
    if (win_length > fft_size || hop_length < 1) throw Error(ErrorKind::config, "invalid STFT geometry");
    win_begin_ = (fft_size - win_length) / 2;
    for (int n = 0; n < win_length; ++n)
        window_[win_begin_ + n] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * M_PI * n / win_length));
    std::lock_guard<std::mutex> lock(planner_mutex());
    float* in = fftwf_alloc_real(fft_size);
    fftwf_complex* out = fftwf_alloc_complex(fft_size / 2 + 1);
    plan_r2c_ = fftwf_plan_dft_r2c_1d(fft_size, in, out, FFTW_ESTIMATE);
    plan_c2r_ = fftwf_plan_dft_c2r_1d(fft_size, out, in, FFTW_ESTIMATE);
    fftwf_free(in);
    fftwf_free(out);
}

SpectralAnalyzer::~SpectralAnalyzer() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftwf_destroy_plan(static_cast<fftwf_plan>(plan_r2c_));
    fftwf_destroy_plan(static_cast<fftwf_plan>(plan_c2r_));
}

int64_t SpectralAnalyzer::source_index(int64_t frame, int64_t n, int64_t length) const {
    const int64_t s = frame * hop_ + hop_ / 2 - fft_size_ / 2 + n;
    return reflect_index(s, length);
}

void SpectralAnalyzer::spectrum(const float* x, int64_t length, int64_t frame, float* out) const {
    float* buf = fftwf_alloc_real(fft_size_);
    fftwf_complex* spec = fftwf_alloc_complex(num_bins());
    std::fill(buf, buf + fft_size_, 0.0f);
    for (int64_t n = win_begin_; n < win_begin_ + win_length_; ++n)
        buf[n] = window_[n] * x[source_index(frame, n, length)];
    fftwf_execute_dft_r2c(static_cast<fftwf_plan>(plan_r2c_), buf, spec);
    std::copy_n(&spec[0][0], 2 * num_bins(), out);
    fftwf_free(buf);
    fftwf_free(spec);
}

Matrix SpectralAnalyzer::power(const float* x, int64_t length) const {
    Matrix p{num_frames(length), num_bins(), {}};
    p.data.resize(p.rows * p.cols);
    std::vector<float> spec(2 * num_bins());
    for (int64_t i = 0; i < p.rows; ++i) {
        spectrum(x, length, i, spec.data());
        for (int64_t f = 0; f < p.cols; ++f) p(i, f) = spec[2 * f] * spec[2 * f] + spec[2 * f + 1] * spec[2 * f + 1];
    }
    return p;
}

void SpectralAnalyzer::spectrum_adjoint(const float* grad_spec, int64_t length, int64_t frame, float* gx) const {
    const int nb = num_bins();
    fftwf_complex* spec = fftwf_alloc_complex(nb);
    float* buf = fftwf_alloc_real(fft_size_);
    for (int f = 0; f < nb; ++f) {
        const bool edge = f == 0 || (fft_size_ % 2 == 0 && f == nb - 1);
        spec[f][0] = edge ? grad_spec[2 * f] : 0.5f * grad_spec[2 * f];
        spec[f][1] = edge ? 0.0f : 0.5f * grad_spec[2 * f + 1];
    }
    fftwf_execute_dft_c2r(static_cast<fftwf_plan>(plan_c2r_), spec, buf);
    for (int64_t n = win_begin_; n < win_begin_ + win_length_; ++n)
        gx[source_index(frame, n, length)] += window_[n] * buf[n];
    fftwf_free(spec);
    fftwf_free(buf);
}

MelExtractor::MelExtractor(const MelConfig& cfg, int sample_rate)
    : cfg_(cfg),
      sample_rate_(sample_rate),
      analyzer_(std::make_shared<SpectralAnalyzer>(cfg.fft_size, cfg.win_length, cfg.hop_length)) {
    cfg.validate(sample_rate);
    const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges(cfg.num_mels + 2);
    for (int m = 0; m < cfg.num_mels + 2; ++m) edges[m] = mel_to_hz(lo + (hi - lo) * m / (cfg.num_mels + 1));
    const int nb = cfg.fft_size / 2 + 1;
    auto fb = std::make_shared<Filterbank>();
    fb->start.resize(cfg.num_mels);
    fb->weights.resize(cfg.num_mels);
    for (int m = 0; m < cfg.num_mels; ++m) {
        const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
        int first = -1;
        std::vector<float> w;
        for (int f = 0; f < nb; ++f) {
            const double hz = double(f) * sample_rate / cfg.fft_size;
            const double v = std::max(0.0, std::min((hz - l) / (c - l), (r - hz) / (r - c)));
            if (v > 0.0) {
                if (first < 0) first = f;
                w.resize(f - first + 1, 0.0f);
                w[f - first] = static_cast<float>(v);
            }
        }
        fb->start[m] = std::max(first, 0);
        fb->weights[m] = std::move(w);
    }
    fb_ = std::move(fb);
}

Matrix MelExtractor::log_mel(const float* x, int64_t length) const {
    if (length < 1) throw Error(ErrorKind::shape, "log_mel: empty input");
    const Matrix p = analyzer_->power(x, length);
    Matrix out{p.rows, cfg_.num_mels, std::vector<float>(p.rows * cfg_.num_mels)};
    const float floor = static_cast<float>(cfg_.log_floor);
    for (int64_t i = 0; i < p.rows; ++i)
        for (int m = 0; m < cfg_.num_mels; ++m) {
            double e = 0.0;
            const auto& w = fb_->weights[m];
            for (size_t j = 0; j < w.size(); ++j) e += double(w[j]) * p(i, fb_->start[m] + j);
            out(i, m) = std::log(std::max(static_cast<float>(e), floor));
        }
    return out;
}

ag::Var MelExtractor::forward(const ag::Var& wave) const {
    const auto& s = wave->shape();
    if (s.size() != 3 || s[1] != 1) throw Error(ErrorKind::shape, "log-mel expects [B, 1, T], got " + shape_str(s));
    const int64_t B = s[0], T = s[2], F = analyzer_->num_frames(T), M = cfg_.num_mels, nb = analyzer_->num_bins();
    Tensor out({B, F, M});
    // Spectra and energies are kept for the backward pass.
    auto spectra = std::make_shared<std::vector<float>>(B * F * 2 * nb);
    auto energy = std::make_shared<std::vector<float>>(B * F * M);
    const float floor = static_cast<float>(cfg_.log_floor);
    for (int64_t b = 0; b < B; ++b) {
        const float* x = wave->value.data() + b * T;
        for (int64_t i = 0; i < F; ++i) {
            float* sp = spectra->data() + (b * F + i) * 2 * nb;
            analyzer_->spectrum(x, T, i, sp);
            for (int64_t m = 0; m < M; ++m) {
                double e = 0.0;
                const auto& w = fb_->weights[m];
                for (size_t j = 0; j < w.size(); ++j) {
                    const int64_t f = fb_->start[m] + j;
                    e += double(w[j]) * (sp[2 * f] * sp[2 * f] + sp[2 * f + 1] * sp[2 * f + 1]);
                }
                const float ef = static_cast<float>(e);
                (*energy)[(b * F + i) * M + m] = ef;
                out.at(b, i, m) = std::log(std::max(ef, floor));
            }
        }
    }
    return ag::make_op(std::move(out), {wave}, [an = analyzer_, fb = fb_, wave, spectra, energy, B, T, F, M, nb, floor](ag::Node& self) {
        if (!wave->requires_grad) return;
        float* gx_all = wave->ensure_grad().data();
        std::vector<float> gp(nb), gspec(2 * nb);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < F; ++i) {
                std::fill(gp.begin(), gp.end(), 0.0f);
                bool any = false;
                for (int64_t m = 0; m < M; ++m) {
                    const float e = (*energy)[(b * F + i) * M + m];
                    const float g = self.grad.at(b, i, m);
                    if (!(e > floor) || g == 0.0f) continue;
                    any = true;
                    const float ge = g / e;
                    const auto& w = fb->weights[m];
                    for (size_t j = 0; j < w.size(); ++j) gp[fb->start[m] + j] += w[j] * ge;
                }
                if (!any) continue;
                const float* sp = spectra->data() + (b * F + i) * 2 * nb;
                for (int64_t f = 0; f < nb; ++f) {
                    gspec[2 * f] = 2.0f * sp[2 * f] * gp[f];
                    gspec[2 * f + 1] = 2.0f * sp[2 * f + 1] * gp[f];
                }
                an->spectrum_adjoint(gspec.data(), T, i, gx_all + b * T);
            }
    });
}

Matrix mel_spectrogram(const Waveform& wave, const MelConfig& cfg) {
    cfg.validate(wave.sample_rate);
    if (wave.length() < cfg.hop_length)
        throw Error(ErrorKind::shape, "waveform shorter than one hop (" + std::to_string(wave.length()) + " samples)");
    MelExtractor mel(cfg, wave.sample_rate);
    return mel.log_mel(wave.samples.data(), wave.length());
}

}  // namespace ncodec
