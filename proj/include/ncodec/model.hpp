#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ncodec/codec_net.hpp"
#include "ncodec/container.hpp"
#include "ncodec/rvq.hpp"
#include "ncodec/wav.hpp"

namespace ncodec {

// Everything needed to rebuild a codec network.
struct CodecSpec {
    int sample_rate = 48000;
    EncoderConfig encoder;
    QuantizerConfig quantizer;
    GeneratorConfig decoder;
    // Decoder input is the quantized latent normalized by corpus statistics
    // (vocoder mode).
    bool normalized_input = false;
    InitConfig init;

    int hop() const { return encoder.hop(); }
    void validate() const;
};

// Encoder + projector + residual quantizer + decoder. Parameter names are
// prefixed "enc.", "proj.", "dec.".
class CodecModel {
public:
    CodecModel(const CodecSpec& spec, uint64_t seed);
    CodecModel(const CodecModel&) = delete;
    CodecModel& operator=(const CodecModel&) = delete;

    const CodecSpec& spec() const { return spec_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Encoder& encoder() const { return encoder_; }
    const Conv1d& projector() const { return projector_; }
    const Generator& decoder() const { return *decoder_; }
    ResidualCodebook& codebook() { return codebook_; }
    const ResidualCodebook& codebook() const { return codebook_; }
    NormStats& norm_stats() { return norm_; }
    const NormStats& norm_stats() const { return norm_; }

    int hop() const { return spec_.hop(); }
    int sample_rate() const { return spec_.sample_rate; }
    double frame_rate() const { return double(spec_.sample_rate) / hop(); }

    // Encoder and projector: [B, 1, T] -> [B, code_dim, T/hop].
    ag::Var latents(const ag::Var& wave, StreamContext* ctx = nullptr) const;
    // Generator on quantized latents [B, code_dim, F], normalizing first when
    // the model decodes normalized codes.
    ag::Var synthesize(const ag::Var& quantized, StreamContext* ctx = nullptr) const;

    // Batch inference. Input is right-padded with zeros to a hop multiple.
    LatentSequence encode(const Waveform& wave) const;
    std::vector<CodeFrame> encode_codes(const Waveform& wave) const;
    Waveform decode(const std::vector<CodeFrame>& codes) const;
    // Encode then decode, trimmed to the input length.
    Waveform reconstruct(const Waveform& wave) const;

    // Parameters, codebook and normalization statistics.
    void save_state(Container& c) const;
    // Loads arrays whose names start with one of the prefixes ("enc.", "dec.",
    // "vq.", ...); an empty list loads everything the model owns.
    void load_state(const Container& c, const std::vector<std::string>& prefixes = {});

private:
    CodecSpec spec_;
    ParamStore params_;
    Encoder encoder_;
    Conv1d projector_;
    std::unique_ptr<Generator> decoder_;
    ResidualCodebook codebook_;
    NormStats norm_;
};

// Deployable checkpoint: model state plus metadata (kind "codec").
struct CheckpointInfo {
    std::string kind;   // "codec" or "training"
    std::string stage;  // "init", "stage1", "stage2", "vocoder", ...
    std::string mode;
    int64_t iteration = 0;
    uint64_t config_hash = 0;
    nlohmann::json config;  // experiment config echo
};

void save_codec(const std::filesystem::path& path, const CodecModel& model, const CheckpointInfo& info);
// Rebuilds the model from the checkpoint's spec echo.
std::unique_ptr<CodecModel> load_codec(const std::filesystem::path& path, CheckpointInfo* info = nullptr);
std::unique_ptr<CodecModel> codec_from_container(const Container& c, CheckpointInfo* info = nullptr);
Container codec_container(const CodecModel& model, const CheckpointInfo& info);

std::string hash_hex(uint64_t h);
uint64_t parse_hash_hex(const std::string& s);

}  // namespace ncodec
