#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncodec/config.hpp"
#include "ncodec/corpus.hpp"
#include "ncodec/model.hpp"

namespace ncodec {

struct TrainRecord {
    std::string stage;
    int64_t iteration = 0;  // 1-based count of completed iterations
    double wall_seconds = 0.0;
    double its_per_sec = 0.0;
    std::map<std::string, double> losses;
    double mel_smoothed = 0.0;  // trailing mean of the mel loss
    double lr_g = 0.0;
    double lr_d = 0.0;
    double perplexity = 0.0;    // mean over books
};

nlohmann::json to_json(const TrainRecord& r);

struct StageReport {
    std::string stage;
    int64_t start_iteration = 0;  // > 0 when resumed
    int64_t iterations = 0;       // completed at the end of the run
    double its_per_sec = 0.0;
    std::vector<double> perplexity;
    std::vector<TrainRecord> records;
    double initial_mel_smoothed = 0.0;  // mean mel loss of the first window
    double final_mel_smoothed = 0.0;
    bool stopped_early = false;
    std::filesystem::path checkpoint;
    std::filesystem::path state;
};

struct TrainOptions {
    // Logs, checkpoints and resumable state go here; empty writes nothing.
    std::filesystem::path out_dir;
    bool resume = true;
    // Overrides the configured iteration count when >= 0.
    int64_t iterations = -1;
    int smoothing_window = 50;
    // Called after every iteration; returning false ends the stage early.
    std::function<bool(const TrainRecord&)> on_record;
};

// Mel reconstruction plus commitment loss over encoder, projector and decoder;
// the codebook follows EMA updates. No discriminator is built.
StageReport train_stage1(CodecModel& model, const Corpus& data, const ExperimentConfig& cfg,
                         const TrainOptions& opt = {});

// Adversarial stage. symAD and asymAD freeze encoder, projector and codebook
// and train only the decoder; symAD_star trains everything.
StageReport train_stage2(CodecModel& model, const Corpus& data, const ExperimentConfig& cfg,
                         const TrainOptions& opt = {});

// Quantized latents of every utterance from a frozen-codebook codec, with
// corpus statistics for global normalization.
struct CodeDataset {
    std::vector<std::string> names;
    std::vector<LatentSequence> latents;  // quantized, not normalized
    std::vector<std::vector<CodeFrame>> codes;
    NormStats stats;
    int hop = 0;
    int sample_rate = 0;
};

CodeDataset extract_normalized_codes(const CodecModel& codec, const Corpus& data);
void save_code_dataset(const std::filesystem::path& path, const CodeDataset& d, uint64_t config_hash);
CodeDataset load_code_dataset(const std::filesystem::path& path);

// Vocoder model: the codec's encoder, projector and codebook (frozen) with a
// fresh HiFi-GAN style decoder fed globally normalized codes.
std::unique_ptr<CodecModel> make_vocoder_model(const CodecModel& codec, const ExperimentConfig& cfg,
                                               const NormStats& stats);

StageReport train_vocoder(CodecModel& vocoder, const CodeDataset& codes, const Corpus& data,
                          const ExperimentConfig& cfg, const TrainOptions& opt = {});

// Single-stage joint adversarial training from scratch (hinge losses, scale
// and STFT discriminators by default) for stage1_iters + stage2_iters.
StageReport train_baseline(CodecModel& model, const Corpus& data, const ExperimentConfig& cfg,
                           const TrainOptions& opt = {});

// Learning rate after `iteration` completed steps: base * gamma^(iteration /
// period), period = decay_every or half the stage.
double scheduled_lr(double base, const OptimizerConfig& o, int64_t stage_iters, int64_t iteration);

}  // namespace ncodec
