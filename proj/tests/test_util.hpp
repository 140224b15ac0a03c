#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ncodec/autograd.hpp"
#include "ncodec/config.hpp"
#include "ncodec/model.hpp"
#include "ncodec/tensor.hpp"

namespace ncodec::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float scale = 1.0f) {
    Tensor t(std::move(shape));
    std::normal_distribution<float> N(0.0f, scale);
    for (float& v : t.storage()) v = N(rng);
    return t;
}

inline Waveform random_wave(std::mt19937_64& rng, int64_t n, int rate, float scale = 0.3f) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(n);
    std::normal_distribution<float> N(0.0f, scale);
    for (float& v : w.samples) v = std::clamp(N(rng), -1.0f, 1.0f);
    return w;
}

inline Waveform tone(double hz, double seconds, int rate, double amp = 0.5) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(static_cast<size_t>(std::llround(seconds * rate)));
    for (size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * double(i) / rate));
    return w;
}

// Direct convolution sum: y[co][t] = b[co] + sum_{ci,k} w[co][ci][k] x[ci][t*s + off - k*d],
// reading zero outside the input.
inline std::vector<double> naive_conv(const std::vector<float>& x, int64_t cin, int64_t T, const std::vector<float>& w,
                                      int64_t cout, int64_t K, const std::vector<float>& b, int64_t s, int64_t d,
                                      int64_t off, int64_t out_len, int64_t groups = 1) {
    std::vector<double> y(cout * out_len, 0.0);
    const int64_t cin_g = cin / groups, cout_g = cout / groups;
    for (int64_t co = 0; co < cout; ++co) {
        const int64_t g = co / cout_g;
        for (int64_t t = 0; t < out_len; ++t) {
            double acc = b.empty() ? 0.0 : b[co];
            for (int64_t ci = 0; ci < cin_g; ++ci)
                for (int64_t k = 0; k < K; ++k) {
                    const int64_t idx = t * s + off - k * d;
                    if (idx >= 0 && idx < T) acc += double(w[(co * cin_g + ci) * K + k]) * x[(g * cin_g + ci) * T + idx];
                }
            y[co * out_len + t] = acc;
        }
    }
    return y;
}

// Central finite difference of a scalar function of one tensor element.
inline double finite_diff(const std::function<double()>& f, float& slot, double h) {
    const float keep = slot;
    slot = static_cast<float>(keep + h);
    const double up = f();
    slot = static_cast<float>(keep - h);
    const double down = f();
    slot = keep;
    return (up - down) / (2.0 * h);
}

// Small codec used by unit tests: hop 6, narrow channels.
inline CodecSpec tiny_spec(VariantId variant = VariantId::sym, int books = 2, int book_size = 8) {
    CodecSpec s;
    s.sample_rate = 8000;
    s.encoder.downsample_factors = {2, 3};
    s.encoder.base_channels = 4;
    s.encoder.max_channels = 8;
    s.encoder.code_dim = 4;
    s.encoder.num_blocks_per_stage = 1;
    s.encoder.kernel_size = 3;
    s.encoder.dilations = {1};
    s.quantizer.num_books = books;
    s.quantizer.book_size = book_size;
    s.decoder.variant = variant;
    s.decoder.upsample_initial_channels = 8;
    s.decoder.min_channels = 2;
    s.init.scheme = "fan_in";
    return s;
}

// Desk architecture at 24 kHz with hop 300 (the shipped desk preset's shape).
inline ExperimentConfig desk_config() { return load_config(NCODEC_SOURCE_DIR "/configs/desk_24k.yaml"); }

}  // namespace ncodec::test
