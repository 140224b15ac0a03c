#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ncodec/tensor.hpp"
#include "ncodec/wav.hpp"

namespace ncodec {

struct Utterance {
    std::string name;
    Waveform wave;
};

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Utterance> utts) : utts_(std::move(utts)) {}

    // Loads every WAV under dir (sorted), resampled to sample_rate. Throws
    // Error(io) for an empty corpus. max_utts = 0 loads all.
    static Corpus load(const std::filesystem::path& dir, int sample_rate, size_t max_utts = 0);

    const std::vector<Utterance>& utterances() const { return utts_; }
    size_t size() const { return utts_.size(); }
    bool empty() const { return utts_.empty(); }
    double total_seconds() const;

    // [batch, 1, segment] random crops starting on multiples of hop.
    // Utterances shorter than the segment are zero-padded on the right.
    Tensor sample_batch(std::mt19937_64& rng, int batch, int64_t segment, int hop) const;

private:
    std::vector<Utterance> utts_;
};

// Formant-synthesized speech-like audio: glottal pulse trains with drifting
// pitch through moving vocal-tract resonances, fricative noise bursts and
// pauses. Used as a stand-in corpus when no recordings are available.
Waveform synth_speech(std::mt19937_64& rng, double seconds, int sample_rate);

// Writes `count` utterances of `seconds` each as 16-bit WAV files named
// utt0000.wav, ... and returns their paths.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir, int count, double seconds,
                                                          int sample_rate, uint64_t seed);

}  // namespace ncodec
