#pragma once

#include <memory>
#include <vector>

#include "ncodec/autograd.hpp"
#include "ncodec/wav.hpp"

namespace ncodec {

struct MelConfig {
    int fft_size = 2048;
    int hop_length = 300;
    int win_length = 1200;
    int num_mels = 80;
    double fmin = 0.0;
    double fmax = 24000.0;
    double log_floor = 1e-5;

    // Throws Error(config) when the fields are inconsistent with sample_rate.
    void validate(int sample_rate) const;
};

// Defaults scaled to the sample rate (hop 300, 25 ms window).
MelConfig default_mel_config(int sample_rate);

// Row-major [rows x cols] float matrix.
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data;

    float& operator()(int64_t r, int64_t c) { return data[r * cols + c]; }
    float operator()(int64_t r, int64_t c) const { return data[r * cols + c]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Peak frequencies of the num_mels triangular filters.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

// Short-time analysis with frames centred on hop blocks: frame i is centred on
// sample i*hop + hop/2 and out-of-range indices reflect at the signal edges.
// num_frames = ceil(length / hop).
class SpectralAnalyzer {
public:
    SpectralAnalyzer(int fft_size, int win_length, int hop_length);
    ~SpectralAnalyzer();
    SpectralAnalyzer(const SpectralAnalyzer&) = delete;
    SpectralAnalyzer& operator=(const SpectralAnalyzer&) = delete;

    int fft_size() const { return fft_size_; }
    int num_bins() const { return fft_size_ / 2 + 1; }
    int hop() const { return hop_; }
    int64_t num_frames(int64_t length) const { return (length + hop_ - 1) / hop_; }

    // Sample index read by window position n of frame i.
    int64_t source_index(int64_t frame, int64_t n, int64_t length) const;
    const std::vector<float>& window() const { return window_; }

    // Complex spectrum of frame i (interleaved re/im, num_bins pairs).
    void spectrum(const float* x, int64_t length, int64_t frame, float* out) const;
    // |X|^2 per bin.
    Matrix power(const float* x, int64_t length) const;
    // Adjoint of spectrum(): accumulates d(loss)/dx given d(loss)/d(re, im).
    void spectrum_adjoint(const float* grad_spec, int64_t length, int64_t frame, float* gx) const;

private:
    int fft_size_, win_length_, hop_;
    std::vector<float> window_;  // fft_size long, zero outside the centred window
    int64_t win_begin_;
    void* plan_r2c_ = nullptr;
    void* plan_c2r_ = nullptr;
};

class MelExtractor {
public:
    MelExtractor(const MelConfig& cfg, int sample_rate);

    const MelConfig& config() const { return cfg_; }
    int sample_rate() const { return sample_rate_; }
    const SpectralAnalyzer& analyzer() const { return *analyzer_; }

    // [num_frames x num_mels] log-mel energies log(max(e, log_floor)).
    Matrix log_mel(const float* x, int64_t length) const;

    // Differentiable log-mel of a [B, 1, T] batch -> [B, frames, mels].
    ag::Var forward(const ag::Var& wave) const;

private:
    MelConfig cfg_;
    int sample_rate_;
    std::shared_ptr<SpectralAnalyzer> analyzer_;
    // Sparse triangular filters: first bin and weights per mel band.
    struct Filterbank {
        std::vector<int> start;
        std::vector<std::vector<float>> weights;
    };
    std::shared_ptr<const Filterbank> fb_;
};

// Convenience wrapper; validates the config against the waveform rate.
Matrix mel_spectrogram(const Waveform& wave, const MelConfig& cfg);

}  // namespace ncodec
