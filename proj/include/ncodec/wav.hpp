#pragma once

#include <filesystem>
#include <optional>
#include <vector>

namespace ncodec {

// Mono PCM audio.
struct Waveform {
    std::vector<float> samples;
    int sample_rate = 0;

    int64_t length() const { return static_cast<int64_t>(samples.size()); }
    double duration() const { return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0; }
};

// Reads 8/16/24/32-bit integer or 32-bit float PCM WAV. Multichannel input is
// averaged to mono; samples are clipped to [-1, 1]. If target_rate is set the
// result is resampled to it.
Waveform load_wav(const std::filesystem::path& path, std::optional<int> target_rate = std::nullopt);

// Writes 16- or 24-bit PCM, clipping to [-1, 1].
void save_wav(const Waveform& wave, const std::filesystem::path& path, int bit_depth = 16);

// Band-limited polyphase resampling with a Kaiser-windowed sinc.
// Output length is ceil(len * target / source).
Waveform resample(const Waveform& wave, int target_rate);

// All *.wav files under dir, sorted by path.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

}  // namespace ncodec
