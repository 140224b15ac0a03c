#include "ncodec/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ncodec/error.hpp"

namespace ncodec {

namespace fs = std::filesystem;

namespace {

uint32_t rd_u32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24); }
uint16_t rd_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

void wr_u32(std::ostream& os, uint32_t v) {
    const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    os.write(b, 4);
}
void wr_u16(std::ostream& os, uint16_t v) {
    const char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    os.write(b, 2);
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

Waveform load_wav(const fs::path& path, std::optional<int> target_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open WAV file: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw Error(ErrorKind::format, "not a RIFF/WAVE file: " + path.string());

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const unsigned char* data = nullptr;
    size_t data_size = 0;
    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const unsigned char* ck = buf.data() + pos;
        const size_t size = rd_u32(ck + 4);
        const size_t avail = std::min(size, buf.size() - pos - 8);
        if (std::memcmp(ck, "fmt ", 4) == 0 && avail >= 16) {
            format = rd_u16(ck + 8);
            channels = rd_u16(ck + 10);
            rate = rd_u32(ck + 12);
            bits = rd_u16(ck + 22);
            if (format == kFormatExtensible && avail >= 26) format = rd_u16(ck + 8 + 24);
        } else if (std::memcmp(ck, "data", 4) == 0) {
            data = ck + 8;
            data_size = avail;
        }
        pos += 8 + size + (size & 1);
    }
    if (!format || !data) throw Error(ErrorKind::format, "WAV file lacks fmt or data chunk: " + path.string());
    if (channels == 0 || rate == 0) throw Error(ErrorKind::format, "WAV header has zero channels or rate");
    const bool is_float = format == kFormatFloat;
    if (!(format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) && !(is_float && bits == 32))
        throw Error(ErrorKind::format, "unsupported WAV encoding (format " + std::to_string(format) + ", " +
                                           std::to_string(bits) + " bits): " + path.string());
    const size_t bytes = bits / 8;
    const size_t frames = data_size / (bytes * channels);
    if (frames == 0) throw Error(ErrorKind::format, "WAV file has no audio samples: " + path.string());

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + (i * channels + c) * bytes;
            double v = 0.0;
            if (is_float) {
                float f;
                uint32_t u = rd_u32(p);
                std::memcpy(&f, &u, 4);
                v = f;
            } else if (bits == 8) {
                v = (int(p[0]) - 128) / 128.0;
            } else if (bits == 16) {
                v = int16_t(rd_u16(p)) / 32768.0;
            } else if (bits == 24) {
                int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                if (s & 0x800000) s -= 0x1000000;
                v = s / 8388608.0;
            } else {
                v = int32_t(rd_u32(p)) / 2147483648.0;
            }
            acc += v;
        }
        float s = static_cast<float>(acc / channels);
        if (!std::isfinite(s)) s = 0.0f;
        w.samples[i] = std::clamp(s, -1.0f, 1.0f);
    }
    if (target_rate && *target_rate != w.sample_rate) return resample(w, *target_rate);
    return w;
}

void save_wav(const Waveform& wave, const fs::path& path, int bit_depth) {
    if (bit_depth != 16 && bit_depth != 24) throw Error(ErrorKind::format, "bit depth must be 16 or 24");
    if (wave.samples.empty()) throw Error(ErrorKind::format, "refusing to write an empty waveform");
    if (wave.sample_rate <= 0) throw Error(ErrorKind::format, "waveform has no sample rate");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::io, "cannot write WAV file: " + path.string());
    const uint32_t bytes = bit_depth / 8;
    const uint32_t data_size = static_cast<uint32_t>(wave.samples.size() * bytes);
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_size);
    os.write("WAVEfmt ", 8);
    wr_u32(os, 16);
    wr_u16(os, kFormatPcm);
    wr_u16(os, 1);
    wr_u32(os, static_cast<uint32_t>(wave.sample_rate));
    wr_u32(os, static_cast<uint32_t>(wave.sample_rate) * bytes);
    wr_u16(os, static_cast<uint16_t>(bytes));
    wr_u16(os, static_cast<uint16_t>(bit_depth));
    os.write("data", 4);
    wr_u32(os, data_size);
    const double full = bit_depth == 16 ? 32768.0 : 8388608.0;
    std::vector<char> out(data_size);
    for (size_t i = 0; i < wave.samples.size(); ++i) {
        float s = wave.samples[i];
        if (!std::isfinite(s)) s = 0.0f;
        s = std::clamp(s, -1.0f, 1.0f);
        const int64_t q = std::clamp<int64_t>(std::llround(s * full), int64_t(-full), int64_t(full) - 1);
        for (uint32_t b = 0; b < bytes; ++b) out[i * bytes + b] = char((q >> (8 * b)) & 0xff);
    }
    os.write(out.data(), out.size());
    if (!os) throw Error(ErrorKind::io, "failed writing WAV file: " + path.string());
}

Waveform resample(const Waveform& wave, int target_rate) {
    if (target_rate <= 0 || wave.sample_rate <= 0) throw Error(ErrorKind::format, "resample: rates must be positive");
    if (target_rate == wave.sample_rate) return wave;
    const int64_t g = std::gcd<int64_t>(wave.sample_rate, target_rate);
    const int64_t up = target_rate / g, down = wave.sample_rate / g;
    const double cutoff = 0.97 * std::min(1.0, double(target_rate) / wave.sample_rate);
    constexpr int kZeroCrossings = 24;
    constexpr double kBeta = 8.6;
    const int half = static_cast<int>(std::ceil(kZeroCrossings / cutoff));
    const double i0b = std::cyl_bessel_i(0.0, kBeta);

    // taps[phase][j] weights x[i0 - half + 1 + j] for output phase/up offset.
    std::vector<std::vector<float>> taps(up, std::vector<float>(2 * half));
    for (int64_t ph = 0; ph < up; ++ph) {
        const double frac = double(ph) / up;
        for (int j = 0; j < 2 * half; ++j) {
            const double tau = frac - (j - half + 1);
            const double r = tau / half;
            if (std::fabs(r) >= 1.0) {
                taps[ph][j] = 0.0f;
                continue;
            }
            const double arg = M_PI * cutoff * tau;
            const double sinc = std::fabs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
            const double win = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / i0b;
            taps[ph][j] = static_cast<float>(cutoff * sinc * win);
        }
    }
    const int64_t n_in = wave.length();
    const int64_t n_out = (n_in * up + down - 1) / down;
    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    for (int64_t n = 0; n < n_out; ++n) {
        const int64_t num = n * down;
        const int64_t i0 = num / up;
        const auto& h = taps[num % up];
        double acc = 0.0;
        for (int j = 0; j < 2 * half; ++j) {
            const int64_t k = i0 - half + 1 + j;
            if (k < 0 || k >= n_in) continue;
            acc += double(h[j]) * wave.samples[k];
        }
        out.samples[n] = static_cast<float>(acc);
    }
    return out;
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::exists(dir)) throw Error(ErrorKind::io, "corpus directory does not exist: " + dir.string());
    if (fs::is_regular_file(dir)) return {dir};
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".wav") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace ncodec
