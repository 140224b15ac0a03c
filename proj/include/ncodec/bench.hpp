#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "ncodec/model.hpp"

namespace ncodec {

struct LatencyRecord {
    double window_ms = 0.0;
    std::string role;  // "encoder" or "decoder"
    std::string name;  // column label
    std::string backend;
    double mean_ms = 0.0;  // per-window processing time
    double std_ms = 0.0;   // across utterances
    int64_t utterances = 0;
};

struct BenchOptions {
    std::vector<double> windows_ms{12.5, 25.0, 50.0, 100.0};
    int warmup = 5;
    int min_utterances = 50;
};

struct BenchSubject {
    std::string name;
    const CodecModel* model = nullptr;
};

struct BenchReport {
    std::vector<double> windows_ms;
    std::string backend;
    int64_t utterances = 0;
    std::vector<LatencyRecord> records;
    std::vector<std::string> warnings;

    const LatencyRecord& find(double window_ms, const std::string& role, const std::string& name) const;
    std::vector<std::string> decoder_names() const;
    // max(encoder, decoder) per-window time below the window length.
    bool streamable(double window_ms, const std::string& decoder) const;
};

bool streamable(double encoder_ms, double decoder_ms, double window_ms);

// Description of the timing host: architecture, threads, compiler.
std::string backend_descriptor();

// Times chunked encoding with the first subject's encoder and chunked decoding
// with every subject's decoder, one fresh session per utterance. Each
// utterance contributes its mean per-window time; records hold the mean and
// sample standard deviation of those over utterances.
BenchReport bench_latency(const std::vector<BenchSubject>& subjects, const std::vector<Waveform>& utterances,
                          const BenchOptions& opt = {});

nlohmann::json to_json(const BenchReport& r);
std::string format_bench(const BenchReport& r);

}  // namespace ncodec
