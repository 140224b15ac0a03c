#include "ncodec/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ncodec/error.hpp"
#include "ncodec/model.hpp"

namespace ncodec {

namespace {

struct Geometry {
    int win, hop, fft;
};

Geometry geometry(int sample_rate, const EvalConfig& cfg) {
    Geometry g;
    g.win = static_cast<int>(std::lround(cfg.frame_ms * sample_rate / 1000.0));
    g.hop = static_cast<int>(std::lround(cfg.hop_ms * sample_rate / 1000.0));
    if (g.win < 2 || g.hop < 1) throw Error(ErrorKind::config, "evaluation frame too short for the sample rate");
    g.fft = 1;
    while (g.fft < g.win) g.fft <<= 1;
    return g;
}

void require_rate(const Waveform& w) {
    if (w.sample_rate <= 0) throw Error(ErrorKind::format, "waveform has no sample rate");
}

// Zero-extends the signal so analysis frames never read past either end and
// returns the index of the first frame belonging to the original signal.
std::vector<float> zero_extend(const Waveform& w, const Geometry& g, int64_t& first_frame) {
    const int64_t pad = (g.fft / 2 + g.hop - 1) / g.hop * g.hop + g.hop;
    std::vector<float> x(w.samples.size() + 2 * pad, 0.0f);
    std::copy(w.samples.begin(), w.samples.end(), x.begin() + pad);
    first_frame = pad / g.hop;
    return x;
}

int64_t frame_count(int64_t length, int hop) { return (length + hop - 1) / hop; }

Matrix take_rows(const Matrix& m, int64_t first, int64_t count) {
    Matrix out{count, m.cols, {}};
    out.data.assign(m.data.begin() + first * m.cols, m.data.begin() + (first + count) * m.cols);
    return out;
}

int64_t aligned_frames(int64_t a, int64_t b, const char* what) {
    if (std::llabs(a - b) > 1)
        throw Error(ErrorKind::shape, std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                                          std::to_string(b) + " frames)");
    return std::min(a, b);
}

void same_rate(const Waveform& a, const Waveform& b) {
    require_rate(a);
    require_rate(b);
    if (a.sample_rate != b.sample_rate)
        throw Error(ErrorKind::compatibility, "sample rates differ: " + std::to_string(a.sample_rate) + " vs " +
                                                  std::to_string(b.sample_rate));
}

}  // namespace

F0Track track_f0(const Waveform& wave, const EvalConfig& cfg) {
    require_rate(wave);
    const Geometry g = geometry(wave.sample_rate, cfg);
    if (wave.length() < g.win)
        throw Error(ErrorKind::shape, "utterance shorter than one analysis frame (" + std::to_string(wave.length()) +
                                          " < " + std::to_string(g.win) + " samples)");
    const double fs = wave.sample_rate;
    const int min_lag = std::max(2, static_cast<int>(std::floor(fs / cfg.f0_max)));
    const int max_lag = static_cast<int>(std::ceil(fs / cfg.f0_min));
    const int64_t L = wave.length();
    const int64_t n = frame_count(L, g.hop);
    const int span = g.win + max_lag + 1;

    F0Track tr;
    tr.hop_seconds = g.hop / fs;
    tr.f0.assign(n, 0.0);
    tr.voiced.assign(n, 0);
    std::vector<double> seg(span), r(max_lag + 2, 0.0), energy(span + 1);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t start = i * g.hop + g.hop / 2 - g.win / 2;
        double mean = 0.0;
        for (int k = 0; k < span; ++k) {
            const int64_t s = start + k;
            seg[k] = (s >= 0 && s < L) ? wave.samples[s] : 0.0;
            mean += seg[k];
        }
        mean /= span;
        for (auto& v : seg) v -= mean;
        energy[0] = 0.0;
        for (int k = 0; k < span; ++k) energy[k + 1] = energy[k] + seg[k] * seg[k];
        const double e0 = energy[g.win];
        if (std::sqrt(e0 / g.win) < cfg.silence_rms) continue;
        double best = -1.0;
        for (int lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
            double acc = 0.0;
            for (int k = 0; k < g.win; ++k) acc += seg[k] * seg[k + lag];
            const double el = energy[lag + g.win] - energy[lag];
            r[lag - (min_lag - 1)] = (e0 > 0.0 && el > 0.0) ? acc / std::sqrt(e0 * el) : 0.0;
        }
        auto R = [&](int lag) { return r[lag - (min_lag - 1)]; };
        int arg = min_lag;
        for (int lag = min_lag; lag <= max_lag; ++lag)
            if (R(lag) > best) {
                best = R(lag);
                arg = lag;
            }
        if (best < cfg.voicing_threshold) continue;
        // Shortest lag whose local peak is close to the global one; avoids
        // locking onto multiples of the period.
        int pick = arg;
        for (int lag = min_lag; lag <= max_lag; ++lag)
            if (R(lag) >= 0.9 * best && R(lag) >= R(lag - 1) && R(lag) >= R(lag + 1)) {
                pick = lag;
                break;
            }
        const double a = R(pick - 1), b = R(pick), c = R(pick + 1);
        const double den = a - 2.0 * b + c;
        const double delta = den < 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
        tr.f0[i] = fs / (pick + delta);
        tr.voiced[i] = 1;
    }
    return tr;
}

F0Metrics f0_metrics(const F0Track& ref, const F0Track& test) {
    const int64_t n = aligned_frames(int64_t(ref.size()), int64_t(test.size()), "f0_metrics");
    F0Metrics m;
    m.frames = n;
    double se = 0.0;
    int64_t disagree = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (ref.voiced[i] != test.voiced[i]) ++disagree;
        if (ref.voiced[i] && test.voiced[i]) {
            const double d = ref.f0[i] - test.f0[i];
            se += d * d;
            ++m.voiced_both;
        }
    }
    m.f0_rmse = m.voiced_both > 0 ? std::sqrt(se / m.voiced_both) : 0.0;
    m.uv_error = n > 0 ? 100.0 * double(disagree) / n : 0.0;
    return m;
}

F0Metrics f0_metrics(const Waveform& ref, const Waveform& test, const EvalConfig& cfg) {
    same_rate(ref, test);
    return f0_metrics(track_f0(ref, cfg), track_f0(test, cfg));
}

Matrix mel_cepstrum(const Waveform& wave, const EvalConfig& cfg) {
    require_rate(wave);
    if (wave.length() < 1) throw Error(ErrorKind::shape, "mel_cepstrum: empty waveform");
    const Geometry g = geometry(wave.sample_rate, cfg);
    MelConfig mc;
    mc.fft_size = g.fft;
    mc.win_length = g.win;
    mc.hop_length = g.hop;
    mc.num_mels = cfg.num_mels;
    mc.fmin = 0.0;
    mc.fmax = wave.sample_rate / 2.0;
    mc.log_floor = cfg.mel_floor;
    if (cfg.mcd_order < 1 || cfg.mcd_order >= cfg.num_mels)
        throw Error(ErrorKind::config, "mcd_order must be in [1, num_mels)");
    MelExtractor mel(mc, wave.sample_rate);
    int64_t first = 0;
    const auto x = zero_extend(wave, g, first);
    const Matrix lm = take_rows(mel.log_mel(x.data(), int64_t(x.size())), first, frame_count(wave.length(), g.hop));
    const int M = cfg.num_mels, K = cfg.mcd_order + 1;
    std::vector<double> basis(size_t(K) * M);
    for (int k = 0; k < K; ++k)
        for (int m = 0; m < M; ++m)
            basis[k * M + m] = std::sqrt((k == 0 ? 1.0 : 2.0) / M) * std::cos(M_PI * k * (m + 0.5) / M);
    Matrix c{lm.rows, K, std::vector<float>(lm.rows * K)};
    for (int64_t i = 0; i < lm.rows; ++i)
        for (int k = 0; k < K; ++k) {
            double acc = 0.0;
            for (int m = 0; m < M; ++m) acc += basis[k * M + m] * 0.5 * lm(i, m);
            c(i, k) = static_cast<float>(acc);
        }
    return c;
}

double mcd_from_cepstra(const Matrix& a, const Matrix& b, int order) {
    const int64_t n = aligned_frames(a.rows, b.rows, "mcd");
    if (a.cols <= order || b.cols <= order) throw Error(ErrorKind::shape, "mcd: cepstra have too few coefficients");
    if (n == 0) throw Error(ErrorKind::shape, "mcd: no frames");
    const double k = 10.0 / std::log(10.0) * std::sqrt(2.0);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 1; j <= order; ++j) {
            const double d = double(a(i, j)) - double(b(i, j));
            s += d * d;
        }
        total += k * std::sqrt(s);
    }
    return total / n;
}

double mcd(const Waveform& ref, const Waveform& test, const EvalConfig& cfg) {
    same_rate(ref, test);
    return mcd_from_cepstra(mel_cepstrum(ref, cfg), mel_cepstrum(test, cfg), cfg.mcd_order);
}

Matrix eval_power_spectrum(const Waveform& wave, const EvalConfig& cfg) {
    require_rate(wave);
    if (wave.length() < 1) throw Error(ErrorKind::shape, "eval_power_spectrum: empty waveform");
    const Geometry g = geometry(wave.sample_rate, cfg);
    SpectralAnalyzer an(g.fft, g.win, g.hop);
    int64_t first = 0;
    const auto x = zero_extend(wave, g, first);
    return take_rows(an.power(x.data(), int64_t(x.size())), first, frame_count(wave.length(), g.hop));
}

double lsd_from_power(const Matrix& a, const Matrix& b, double floor) {
    const int64_t n = aligned_frames(a.rows, b.rows, "lsd");
    if (a.cols != b.cols) throw Error(ErrorKind::shape, "lsd: spectra have different bin counts");
    if (n == 0) throw Error(ErrorKind::shape, "lsd: no frames");
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t f = 0; f < a.cols; ++f) {
            const double d = std::log10(std::max(double(a(i, f)), floor)) - std::log10(std::max(double(b(i, f)), floor));
            s += d * d;
        }
        total += std::sqrt(s / a.cols);
    }
    return total / n;
}

double lsd(const Waveform& ref, const Waveform& test, const EvalConfig& cfg) {
    same_rate(ref, test);
    return lsd_from_power(eval_power_spectrum(ref, cfg), eval_power_spectrum(test, cfg), cfg.power_floor);
}

UtteranceMetrics evaluate_pair(const std::string& name, const Waveform& ref, const Waveform& test,
                               const EvalConfig& cfg) {
    UtteranceMetrics u;
    u.name = name;
    const F0Metrics f = f0_metrics(ref, test, cfg);
    u.f0_rmse = f.f0_rmse;
    u.uv_error = f.uv_error;
    u.mcd = mcd(ref, test, cfg);
    u.lsd = lsd(ref, test, cfg);
    return u;
}

MetricReport summarize(std::vector<UtteranceMetrics> rows) {
    if (rows.empty()) throw Error(ErrorKind::prerequisite, "no utterances to summarize");
    MetricReport r;
    r.utterances = std::move(rows);
    r.mean.name = "mean";
    for (const auto& u : r.utterances) {
        r.mean.f0_rmse += u.f0_rmse;
        r.mean.uv_error += u.uv_error;
        r.mean.mcd += u.mcd;
        r.mean.lsd += u.lsd;
    }
    const double n = double(r.utterances.size());
    r.mean.f0_rmse /= n;
    r.mean.uv_error /= n;
    r.mean.mcd /= n;
    r.mean.lsd /= n;
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    auto row = [](const UtteranceMetrics& u) {
        return nlohmann::json{{"name", u.name}, {"f0_rmse", u.f0_rmse}, {"uv_error", u.uv_error},
                              {"mcd", u.mcd},   {"lsd", u.lsd}};
    };
    nlohmann::json j;
    j["f0_rmse"] = r.mean.f0_rmse;
    j["uv_error"] = r.mean.uv_error;
    j["mcd"] = r.mean.mcd;
    j["lsd"] = r.mean.lsd;
    j["utterances"] = r.utterances.size();
    j["dnsmos"] = r.dnsmos ? nlohmann::json(*r.dnsmos) : nlohmann::json(nullptr);
    j["checkpoint"] = r.checkpoint;
    j["config_hash"] = hash_hex(r.config_hash);
    j["per_utterance"] = nlohmann::json::array();
    for (const auto& u : r.utterances) j["per_utterance"].push_back(row(u));
    return j;
}

std::string format_report(const MetricReport& r) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %12s %12s %10s %10s\n", "utterance", "F0RMSE(Hz)", "U/V(%)", "MCD(dB)",
                  "LSD(dB)");
    os << line;
    auto emit = [&](const UtteranceMetrics& u) {
        std::snprintf(line, sizeof(line), "%-24s %12.3f %12.3f %10.3f %10.3f\n", u.name.c_str(), u.f0_rmse,
                      u.uv_error, u.mcd, u.lsd);
        os << line;
    };
    for (const auto& u : r.utterances) emit(u);
    emit(r.mean);
    return os.str();
}

}  // namespace ncodec
