#include "ncodec/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "ncodec/error.hpp"

namespace ncodec {

namespace fs = std::filesystem;

Corpus Corpus::load(const fs::path& dir, int sample_rate, size_t max_utts) {
    auto paths = list_wavs(dir);
    if (paths.empty()) throw Error(ErrorKind::io, "no WAV files found under " + dir.string());
    if (max_utts > 0 && paths.size() > max_utts) paths.resize(max_utts);
    std::vector<Utterance> utts;
    for (const auto& p : paths) utts.push_back({p.stem().string(), load_wav(p, sample_rate)});
    return Corpus(std::move(utts));
}

double Corpus::total_seconds() const {
    double s = 0.0;
    for (const auto& u : utts_) s += u.wave.duration();
    return s;
}

Tensor Corpus::sample_batch(std::mt19937_64& rng, int batch, int64_t segment, int hop) const {
    if (utts_.empty()) throw Error(ErrorKind::io, "cannot sample from an empty corpus");
    Tensor out({batch, 1, segment});
    std::uniform_int_distribution<size_t> pick(0, utts_.size() - 1);
    for (int b = 0; b < batch; ++b) {
        const auto& w = utts_[pick(rng)].wave.samples;
        const int64_t len = static_cast<int64_t>(w.size());
        int64_t start = 0;
        if (len > segment) {
            std::uniform_int_distribution<int64_t> off(0, (len - segment) / hop);
            start = off(rng) * hop;
        }
        const int64_t n = std::min(segment, len - start);
        std::copy_n(w.begin() + start, n, out.row(b, 0));
    }
    return out;
}

namespace {

// Two-pole resonator with unity gain at DC.
struct Resonator {
    double y1 = 0.0, y2 = 0.0, a0 = 1.0, b1 = 0.0, b2 = 0.0;

    void tune(double freq, double bw, double fs) {
        const double r = std::exp(-M_PI * bw / fs);
        b1 = 2.0 * r * std::cos(2.0 * M_PI * freq / fs);
        b2 = -r * r;
        a0 = 1.0 - b1 - b2;
    }
    double operator()(double x) {
        const double y = a0 * x + b1 * y1 + b2 * y2;
        y2 = y1;
        y1 = y;
        return y;
    }
};

struct Vowel {
    double f1, f2, f3;
};

constexpr std::array<Vowel, 8> kVowels{{{730, 1090, 2440},
                                        {270, 2290, 3010},
                                        {300, 870, 2240},
                                        {530, 1840, 2480},
                                        {570, 840, 2410},
                                        {660, 1720, 2410},
                                        {440, 1020, 2240},
                                        {490, 1350, 1690}}};

enum class Seg { vowel, fricative, burst, pause };

}  // namespace

Waveform synth_speech(std::mt19937_64& rng, double seconds, int sample_rate) {
    const int64_t total = static_cast<int64_t>(std::llround(seconds * sample_rate));
    const double fs = sample_rate;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> N(0.0, 1.0);

    const double f0_base = 90.0 + 130.0 * U(rng);
    const double tract = 0.9 + 0.25 * U(rng);
    const double breath = 0.01 + 0.03 * U(rng);

    std::vector<float> out(total, 0.0f);
    std::array<Resonator, 4> voc;
    Resonator fric;
    double phase = 0.0;
    double drift = 0.0;
    Vowel cur = kVowels[0];
    int64_t t = 0;
    while (t < total) {
        const double r = U(rng);
        Seg kind = r < 0.55 ? Seg::vowel : r < 0.75 ? Seg::fricative : r < 0.85 ? Seg::burst : Seg::pause;
        double dur = kind == Seg::vowel       ? 0.08 + 0.22 * U(rng)
                     : kind == Seg::fricative ? 0.05 + 0.10 * U(rng)
                     : kind == Seg::burst     ? 0.015 + 0.02 * U(rng)
                                              : 0.05 + 0.25 * U(rng);
        const int64_t len = std::min<int64_t>(total - t, std::max<int64_t>(1, std::llround(dur * fs)));
        const Vowel target = kVowels[std::uniform_int_distribution<size_t>(0, kVowels.size() - 1)(rng)];
        const double fric_freq = std::min(0.42 * fs, 2500.0 + 3500.0 * U(rng));
        fric.tune(fric_freq, 0.35 * fric_freq, fs);
        const double level = 0.5 + 0.5 * U(rng);
        const int64_t ramp = std::max<int64_t>(1, std::min<int64_t>(len / 4, int64_t(0.015 * fs)));
        const Vowel from = cur;
        for (int64_t i = 0; i < len; ++i, ++t) {
            double env = 1.0;
            if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
            if (len - 1 - i < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * (len - 1 - i) / ramp));
            double s = 0.0;
            if (kind == Seg::vowel) {
                if (i % 32 == 0) {
                    const double a = std::min(1.0, double(i) / (0.4 * len));
                    const double w = a * a * (3.0 - 2.0 * a);
                    const double f[4] = {tract * (from.f1 + w * (target.f1 - from.f1)),
                                         tract * (from.f2 + w * (target.f2 - from.f2)),
                                         tract * (from.f3 + w * (target.f3 - from.f3)), tract * 3500.0};
                    const double bw[4] = {60.0, 90.0, 120.0, 180.0};
                    for (int k = 0; k < 4; ++k) voc[k].tune(std::min(f[k], 0.45 * fs), bw[k], fs);
                    drift = 0.995 * drift + 0.6 * N(rng);
                }
                const double decl = 1.0 - 0.15 * double(t) / total;
                const double f0 = std::max(60.0, f0_base * decl * (1.0 + 0.02 * drift) *
                                                     (1.0 + 0.03 * std::sin(2.0 * M_PI * 5.0 * t / fs)));
                phase += f0 / fs;
                if (phase >= 1.0) phase -= 1.0;
                // Derivative of a Rosenberg glottal pulse (open 40%, closing 16%).
                double g;
                if (phase < 0.4)
                    g = 0.5 * M_PI / 0.4 * std::sin(M_PI * phase / 0.4);
                else if (phase < 0.56)
                    g = -M_PI / (2.0 * 0.16) * std::sin(M_PI * (phase - 0.4) / (2.0 * 0.16));
                else
                    g = 0.0;
                s = 0.05 * g + breath * N(rng);
                for (auto& v : voc) s = v(s);
                s *= 0.6 * level;
            } else if (kind == Seg::fricative || kind == Seg::burst) {
                s = fric(N(rng)) * (kind == Seg::burst ? 0.5 : 0.25) * level;
                for (auto& v : voc) v(0.0);
            } else {
                for (auto& v : voc) v(0.0);
            }
            out[t] = static_cast<float>(env * s + 1e-4 * N(rng));
        }
        if (kind == Seg::vowel) cur = target;
    }
    float peak = 0.0f;
    for (float v : out) peak = std::max(peak, std::fabs(v));
    if (peak > 0.0f)
        for (float& v : out) v *= 0.6f / peak;
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples = std::move(out);
    return w;
}

std::vector<fs::path> write_synthetic_corpus(const fs::path& dir, int count, double seconds, int sample_rate,
                                             uint64_t seed) {
    if (count < 1 || seconds <= 0.0) throw Error(ErrorKind::config, "synthetic corpus needs count >= 1 and seconds > 0");
    fs::create_directories(dir);
    std::vector<fs::path> paths;
    for (int i = 0; i < count; ++i) {
        std::mt19937_64 rng(seed * 1000003ull + static_cast<uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "utt%04d.wav", i);
        const fs::path p = dir / name;
        save_wav(synth_speech(rng, seconds, sample_rate), p, 16);
        paths.push_back(p);
    }
    return paths;
}

}  // namespace ncodec
