#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ncodec/error.hpp"
#include "ncodec/mel.hpp"
#include "ncodec/wav.hpp"
#include "test_util.hpp"

using namespace ncodec;
namespace fs = std::filesystem;

namespace {

fs::path tmp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ncodec_test_signal";
    fs::create_directories(dir);
    return dir / name;
}

// Hand-assembled 16-bit PCM WAV with interleaved channels.
void write_raw_wav(const fs::path& p, int rate, int channels, const std::vector<int16_t>& interleaved) {
    std::ofstream f(p, std::ios::binary);
    auto u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    const uint32_t data_bytes = uint32_t(interleaved.size() * 2);
    f.write("RIFF", 4);
    u32(36 + data_bytes);
    f.write("WAVEfmt ", 8);
    u32(16);
    u16(1);
    u16(uint16_t(channels));
    u32(uint32_t(rate));
    u32(uint32_t(rate * channels * 2));
    u16(uint16_t(channels * 2));
    u16(16);
    f.write("data", 4);
    u32(data_bytes);
    f.write(reinterpret_cast<const char*>(interleaved.data()), data_bytes);
}

}  // namespace

TEST_CASE("wav round trip stays within one quantization step") {
    std::mt19937_64 rng(1);
    const Waveform w = test::random_wave(rng, 4800, 48000);
    for (int depth : {16, 24}) {
        const auto p = tmp_path("rt" + std::to_string(depth) + ".wav");
        save_wav(w, p, depth);
        const Waveform r = load_wav(p);
        CHECK(r.sample_rate == 48000);
        REQUIRE(r.length() == w.length());
        double worst = 0.0;
        for (int64_t i = 0; i < w.length(); ++i) worst = std::max(worst, double(std::fabs(r.samples[i] - w.samples[i])));
        CHECK(worst <= std::ldexp(1.0, -(depth - 1)));
    }
}

TEST_CASE("wav save clips out-of-range samples and keeps silence silent") {
    Waveform w;
    w.sample_rate = 16000;
    w.samples = {1.5f, -2.0f, 0.0f, 0.25f};
    const auto p = tmp_path("clip.wav");
    save_wav(w, p);
    const Waveform r = load_wav(p);
    CHECK(r.samples[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.samples[1] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(r.samples[2] == 0.0f);

    Waveform z;
    z.sample_rate = 8000;
    z.samples.assign(100, 0.0f);
    save_wav(z, tmp_path("zero.wav"));
    for (float v : load_wav(tmp_path("zero.wav")).samples) CHECK(v == 0.0f);
}

TEST_CASE("stereo with equal channels loads as either channel") {
    std::vector<int16_t> mono{0, 1000, -2000, 32767, -32768, 5};
    std::vector<int16_t> stereo;
    for (int16_t v : mono) {
        stereo.push_back(v);
        stereo.push_back(v);
    }
    write_raw_wav(tmp_path("st.wav"), 22050, 2, stereo);
    write_raw_wav(tmp_path("mo.wav"), 22050, 1, mono);
    const Waveform a = load_wav(tmp_path("st.wav")), b = load_wav(tmp_path("mo.wav"));
    REQUIRE(a.length() == b.length());
    for (int64_t i = 0; i < a.length(); ++i) CHECK(a.samples[i] == b.samples[i]);
}

TEST_CASE("load_wav errors") {
    CHECK_THROWS_AS(load_wav(tmp_path("missing.wav")), Error);
    std::ofstream(tmp_path("junk.wav")) << "this is not a wav file at all";
    CHECK_THROWS_AS(load_wav(tmp_path("junk.wav")), Error);
    write_raw_wav(tmp_path("empty.wav"), 8000, 1, {});
    CHECK_THROWS_AS(load_wav(tmp_path("empty.wav")), Error);
}

TEST_CASE("resampling keeps duration and tone frequency") {
    const Waveform w = test::tone(1000.0, 1.0, 48000);
    save_wav(w, tmp_path("t48.wav"));
    const Waveform same = load_wav(tmp_path("t48.wav"));
    CHECK(same.length() == 48000);
    const Waveform r = load_wav(tmp_path("t48.wav"), 24000);
    CHECK(r.sample_rate == 24000);
    CHECK(r.length() == 24000);
    // Frequency oracle: correlate against the expected tone in the interior.
    double num = 0.0, den_a = 0.0, den_b = 0.0;
    for (int64_t i = 1000; i < 23000; ++i) {
        const double ref = std::sin(2.0 * M_PI * 1000.0 * i / 24000.0);
        num += ref * r.samples[i];
        den_a += ref * ref;
        den_b += double(r.samples[i]) * r.samples[i];
    }
    CHECK(num / std::sqrt(den_a * den_b) > 0.999);
}

TEST_CASE("mel of silence is the log floor everywhere") {
    MelConfig cfg = default_mel_config(48000);
    Waveform w;
    w.sample_rate = 48000;
    w.samples.assign(3000, 0.0f);
    const Matrix m = mel_spectrogram(w, cfg);
    CHECK(m.rows == 10);
    CHECK(m.cols == 80);
    for (float v : m.data) CHECK(v == doctest::Approx(std::log(1e-5)).epsilon(1e-6));
}

TEST_CASE("frame count is ceil(length / hop)") {
    MelConfig cfg = default_mel_config(24000);
    std::mt19937_64 rng(2);
    for (int64_t n : {300, 301, 599, 600, 4321}) {
        const Matrix m = mel_spectrogram(test::random_wave(rng, n, 24000), cfg);
        CHECK(m.rows == (n + 299) / 300);
    }
    CHECK_THROWS_AS(mel_spectrogram(test::random_wave(rng, 299, 24000), cfg), Error);
    Waveform wrong = test::random_wave(rng, 1000, 16000);
    CHECK_THROWS_AS(mel_spectrogram(wrong, cfg), Error);  // fmax above Nyquist
}

TEST_CASE("a 440 Hz tone peaks in the mel band centred nearest 440 Hz") {
    MelConfig cfg = default_mel_config(48000);
    const Matrix m = mel_spectrogram(test::tone(440.0, 0.5, 48000), cfg);
    const auto centers = mel_center_frequencies(cfg);
    int nearest = 0;
    for (int k = 1; k < cfg.num_mels; ++k)
        if (std::fabs(centers[k] - 440.0) < std::fabs(centers[nearest] - 440.0)) nearest = k;
    for (int64_t i = 3; i < m.rows - 3; ++i) {
        int arg = 0;
        for (int k = 1; k < m.cols; ++k)
            if (m(i, k) > m(i, arg)) arg = k;
        CHECK(arg == nearest);
    }
}

TEST_CASE("mel power matches a direct DFT of the windowed frame") {
    std::mt19937_64 rng(3);
    const int fft = 256, win = 200, hop = 50;
    SpectralAnalyzer an(fft, win, hop);
    const Waveform w = test::random_wave(rng, 1000, 8000);
    const Matrix p = an.power(w.samples.data(), w.length());
    for (int64_t frame : {0, 7, 19}) {
        for (int f : {0, 5, 64, 128}) {
            double re = 0.0, im = 0.0;
            for (int n = 0; n < fft; ++n) {
                const double x = double(an.window()[n]) * w.samples[an.source_index(frame, n, w.length())];
                re += x * std::cos(2.0 * M_PI * f * n / fft);
                im -= x * std::sin(2.0 * M_PI * f * n / fft);
            }
            CHECK(p(frame, f) == doctest::Approx(re * re + im * im).epsilon(1e-4));
        }
    }
}

TEST_CASE("mel is local: concatenation matches parts away from the seam") {
    MelConfig cfg = default_mel_config(24000);
    std::mt19937_64 rng(4);
    const Waveform a = test::random_wave(rng, 3000, 24000), b = test::random_wave(rng, 3000, 24000);
    Waveform ab = a;
    ab.samples.insert(ab.samples.end(), b.samples.begin(), b.samples.end());
    const Matrix ma = mel_spectrogram(a, cfg), mb = mel_spectrogram(b, cfg), mab = mel_spectrogram(ab, cfg);
    REQUIRE(mab.rows == ma.rows + mb.rows);
    // A 600-sample window around a 300-sample hop reaches one frame across.
    for (int64_t i = 0; i < ma.rows - 1; ++i)
        for (int k = 0; k < cfg.num_mels; ++k) CHECK(mab(i, k) == ma(i, k));
    for (int64_t i = 1; i < mb.rows; ++i)
        for (int k = 0; k < cfg.num_mels; ++k) CHECK(mab(ma.rows + i, k) == mb(i, k));
}

TEST_CASE("scaling by alpha shifts log-mel by 2 log alpha; output is deterministic and finite") {
    MelConfig cfg = default_mel_config(24000);
    std::mt19937_64 rng(5);
    Waveform w = test::random_wave(rng, 2400, 24000, 0.1f);
    const Matrix m1 = mel_spectrogram(w, cfg), m1b = mel_spectrogram(w, cfg);
    CHECK(m1.data == m1b.data);
    const float alpha = 0.5f;
    Waveform s = w;
    for (float& v : s.samples) v *= alpha;
    const Matrix m2 = mel_spectrogram(s, cfg);
    for (size_t i = 0; i < m1.data.size(); ++i) {
        CHECK(std::isfinite(m1.data[i]));
        if (m2.data[i] > std::log(1e-5) + 1.0f) CHECK(m2.data[i] - m1.data[i] == doctest::Approx(2.0 * std::log(alpha)).epsilon(1e-4));
    }
}

TEST_CASE("mel config validation") {
    MelConfig c = default_mel_config(48000);
    CHECK_NOTHROW(c.validate(48000));
    c.win_length = 4096;
    CHECK_THROWS_AS(c.validate(48000), Error);
    c = default_mel_config(48000);
    c.log_floor = 0.0;
    CHECK_THROWS_AS(c.validate(48000), Error);
    c = default_mel_config(48000);
    c.fmin = 30000;
    CHECK_THROWS_AS(c.validate(48000), Error);
    c = default_mel_config(48000);
    CHECK(c.fft_size == 2048);
    CHECK(c.win_length == 1200);
    CHECK(c.hop_length == 300);
    CHECK(c.num_mels == 80);
}
