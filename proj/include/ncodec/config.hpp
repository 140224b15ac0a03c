#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "ncodec/discriminator.hpp"
#include "ncodec/losses.hpp"
#include "ncodec/mel.hpp"
#include "ncodec/model.hpp"

namespace ncodec {

constexpr int kSchemaVersion = 1;

enum class TrainMode { symAD, symAD_star, asymAD, vocoder, soundstream_baseline };

std::string to_string(TrainMode m);
TrainMode parse_mode(const std::string& s);

struct OptimizerConfig {
    double lr_g = 1e-4;
    double lr_d = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
    double decay_gamma = 0.5;
    int64_t decay_every = 0;  // iterations between decays; 0 = half of each stage
    double grad_clip = 0.0;
};

struct ScheduleConfig {
    int64_t stage1_iters = 200000;
    int64_t stage2_iters = 500000;
    int64_t vocoder_iters = 500000;
    int batch_size = 16;
    int64_t segment_length = 48000;
    int64_t log_every = 1;
    int64_t checkpoint_every = 10000;
};

struct DataConfig {
    std::string train_dir = "data/train";
    std::string valid_dir = "data/valid";
    int64_t max_utterances = 0;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name = "experiment";
    uint64_t seed = 1;
    TrainMode mode = TrainMode::symAD;
    int sample_rate = 48000;
    EncoderConfig encoder;
    GeneratorConfig decoder;
    GeneratorConfig vocoder{.variant = VariantId::v2};
    QuantizerConfig quantizer;
    MelConfig mel;
    DiscriminatorConfig discriminator;
    LossWeights losses;
    GanFlavor gan = GanFlavor::least_squares;
    OptimizerConfig optimizer;
    ScheduleConfig schedule;
    InitConfig init;
    DataConfig data;
    std::string output_dir = "runs/experiment";

    void validate() const;
    // Model spec of the codec trained in stages 1-2.
    CodecSpec codec_spec() const;
    // Model spec of the vocoder-mode decoder (normalized-code input).
    CodecSpec vocoder_spec() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Strict: unknown keys raise Error(config); missing keys take defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CodecSpec& s);
CodecSpec codec_spec_from_json(const nlohmann::json& j);

// YAML (or JSON, a YAML subset) document -> JSON value.
nlohmann::json yaml_to_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a 64 of the canonical JSON form.
uint64_t config_hash(const ExperimentConfig& c);

// Output root: $NCODEC_OUTPUT_ROOT/<output_dir> for relative output dirs when
// the variable is set, otherwise output_dir as given.
std::filesystem::path resolve_output_dir(const ExperimentConfig& c);

}  // namespace ncodec
