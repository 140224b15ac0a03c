#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncodec/mel.hpp"
#include "ncodec/wav.hpp"

namespace ncodec {

// Analysis settings shared by all objective metrics. Frames are 25 ms long
// with a 5 ms hop and the signal is zero-extended at both ends, so appending
// silence only adds frames.
struct EvalConfig {
    double frame_ms = 25.0;
    double hop_ms = 5.0;
    double f0_min = 60.0;
    double f0_max = 500.0;
    double voicing_threshold = 0.3;  // normalized autocorrelation peak
    double silence_rms = 3e-4;       // frames quieter than this are unvoiced
    int num_mels = 80;
    int mcd_order = 24;              // cepstral coefficients 1..order
    double mel_floor = 1e-10;
    double power_floor = 1e-10;
};

struct F0Track {
    std::vector<double> f0;  // Hz, 0 when unvoiced
    std::vector<uint8_t> voiced;
    double hop_seconds = 0.0;

    size_t size() const { return f0.size(); }
};

// Normalized cross-correlation pitch tracker.
F0Track track_f0(const Waveform& wave, const EvalConfig& cfg = {});

struct F0Metrics {
    double f0_rmse = 0.0;   // Hz, over frames voiced in both tracks
    double uv_error = 0.0;  // percent of frames whose voicing flags disagree
    int64_t voiced_both = 0;
    int64_t frames = 0;
};

F0Metrics f0_metrics(const F0Track& ref, const F0Track& test);
F0Metrics f0_metrics(const Waveform& ref, const Waveform& test, const EvalConfig& cfg = {});

// [frames x (order + 1)] cepstra: orthonormal DCT-II of the log-mel amplitude
// spectrum (half the natural log of mel power).
Matrix mel_cepstrum(const Waveform& wave, const EvalConfig& cfg = {});
// Mean over frames of (10/ln 10) * sqrt(2) * ||a[1..order] - b[1..order]||.
double mcd_from_cepstra(const Matrix& a, const Matrix& b, int order);
double mcd(const Waveform& ref, const Waveform& test, const EvalConfig& cfg = {});

// [frames x bins] STFT power of the zero-extended signal.
Matrix eval_power_spectrum(const Waveform& wave, const EvalConfig& cfg = {});
// Mean over frames of sqrt(mean over bins of (log10 Pa - log10 Pb)^2).
double lsd_from_power(const Matrix& a, const Matrix& b, double floor);
double lsd(const Waveform& ref, const Waveform& test, const EvalConfig& cfg = {});

struct UtteranceMetrics {
    std::string name;
    double f0_rmse = 0.0;
    double uv_error = 0.0;
    double mcd = 0.0;
    double lsd = 0.0;
};

struct MetricReport {
    std::vector<UtteranceMetrics> utterances;
    UtteranceMetrics mean;  // name "mean"
    std::optional<double> dnsmos;  // externally computed, never filled here
    std::string checkpoint;
    uint64_t config_hash = 0;
};

UtteranceMetrics evaluate_pair(const std::string& name, const Waveform& ref, const Waveform& test,
                               const EvalConfig& cfg = {});
MetricReport summarize(std::vector<UtteranceMetrics> rows);

nlohmann::json to_json(const MetricReport& r);
// One row per utterance plus the mean row.
std::string format_report(const MetricReport& r);

}  // namespace ncodec
