#include "ncodec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ncodec/error.hpp"
#include "ncodec/stream.hpp"

namespace ncodec {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int64_t window_samples(double window_ms, int sample_rate) {
    const int64_t n = std::llround(window_ms * sample_rate / 1000.0);
    if (n < 1) throw Error(ErrorKind::config, "bench window shorter than one sample");
    return n;
}

// Mean per-window encoder time for one utterance.
double time_encoder(const CodecModel& m, const Waveform& w, int64_t win) {
    StreamEncoder enc(m);
    double total = 0.0;
    int64_t windows = 0;
    for (int64_t s = 0; s < w.length(); s += win, ++windows) {
        const int64_t n = std::min(win, w.length() - s);
        const auto t0 = Clock::now();
        enc.push(w.samples.data() + s, size_t(n));
        total += ms_since(t0);
    }
    return windows ? total / windows : 0.0;
}

// Mean per-window decoder time; window k covers the frames whose audio ends
// inside it.
double time_decoder(const CodecModel& m, const std::vector<CodeFrame>& codes, int64_t win) {
    StreamDecoder dec(m);
    const int64_t hop = m.hop();
    const int64_t total_samples = int64_t(codes.size()) * hop;
    double total = 0.0;
    int64_t windows = 0;
    size_t done = 0;
    for (int64_t end = win; end - win < total_samples; end += win, ++windows) {
        const size_t upto = std::min(codes.size(), size_t(std::min(end, total_samples) / hop));
        std::vector<CodeFrame> chunk(codes.begin() + done, codes.begin() + upto);
        done = upto;
        const auto t0 = Clock::now();
        dec.push(chunk);
        total += ms_since(t0);
    }
    return windows ? total / windows : 0.0;
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
}

std::string fmt_window(double w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", w);
    return buf;
}

}  // namespace

bool streamable(double encoder_ms, double decoder_ms, double window_ms) {
    return std::max(encoder_ms, decoder_ms) < window_ms;
}

std::string backend_descriptor() {
    std::string arch =
#if defined(__x86_64__)
        "x86_64";
#elif defined(__aarch64__)
        "aarch64";
#else
        "unknown-arch";
#endif
#if defined(__AVX512F__)
    arch += "+avx512";
#elif defined(__AVX2__)
    arch += "+avx2";
#endif
    return "cpu " + arch + ", single thread, " + std::string("compiler ") + __VERSION__;
}

const LatencyRecord& BenchReport::find(double window_ms, const std::string& role, const std::string& name) const {
    for (const auto& r : records)
        if (r.window_ms == window_ms && r.role == role && r.name == name) return r;
    throw Error(ErrorKind::state, "no latency record for " + role + " '" + name + "' at " + fmt_window(window_ms) +
                                      " ms");
}

std::vector<std::string> BenchReport::decoder_names() const {
    std::vector<std::string> names;
    for (const auto& r : records)
        if (r.role == "decoder" && std::find(names.begin(), names.end(), r.name) == names.end())
            names.push_back(r.name);
    return names;
}

bool BenchReport::streamable(double window_ms, const std::string& decoder) const {
    double enc = 0.0;
    for (const auto& r : records)
        if (r.window_ms == window_ms && r.role == "encoder") enc = r.mean_ms;
    return ncodec::streamable(enc, find(window_ms, "decoder", decoder).mean_ms, window_ms);
}

BenchReport bench_latency(const std::vector<BenchSubject>& subjects, const std::vector<Waveform>& utterances,
                          const BenchOptions& opt) {
    if (subjects.empty() || !subjects[0].model) throw Error(ErrorKind::prerequisite, "bench needs a model");
    if (utterances.empty()) throw Error(ErrorKind::prerequisite, "bench needs at least one utterance");
    const CodecModel& enc_model = *subjects[0].model;
    for (const auto& s : subjects) {
        if (!s.model) throw Error(ErrorKind::prerequisite, "bench subject '" + s.name + "' has no model");
        if (s.model->sample_rate() != enc_model.sample_rate())
            throw Error(ErrorKind::compatibility, "bench subjects run at different sample rates");
    }
    for (const auto& u : utterances)
        if (u.sample_rate != enc_model.sample_rate())
            throw Error(ErrorKind::compatibility, "utterance rate does not match the model");

    BenchReport rep;
    rep.windows_ms = opt.windows_ms;
    rep.backend = backend_descriptor();
    rep.utterances = int64_t(utterances.size());
    if (rep.utterances < opt.min_utterances)
        rep.warnings.push_back("only " + std::to_string(rep.utterances) + " utterances (recommended >= " +
                               std::to_string(opt.min_utterances) + ")");
    if (rep.utterances == 1) rep.warnings.push_back("single utterance: standard deviations are reported as 0");

    // Codes for each decoder come from a batch encode with its own model.
    std::vector<std::vector<std::vector<CodeFrame>>> codes(subjects.size());
    for (size_t s = 0; s < subjects.size(); ++s)
        for (const auto& u : utterances) codes[s].push_back(subjects[s].model->encode_codes(u));

    const double first_window = opt.windows_ms.empty() ? 25.0 : opt.windows_ms.front();
    for (int i = 0; i < opt.warmup; ++i) {
        const size_t u = size_t(i) % utterances.size();
        const int64_t win = window_samples(first_window, enc_model.sample_rate());
        time_encoder(enc_model, utterances[u], win);
        for (size_t s = 0; s < subjects.size(); ++s) time_decoder(*subjects[s].model, codes[s][u], win);
    }

    for (double w : opt.windows_ms) {
        const int64_t win = window_samples(w, enc_model.sample_rate());
        std::vector<double> per_utt;
        for (const auto& u : utterances) per_utt.push_back(time_encoder(enc_model, u, win));
        LatencyRecord r{w, "encoder", "encoder", rep.backend, 0.0, 0.0, rep.utterances};
        mean_std(per_utt, r.mean_ms, r.std_ms);
        rep.records.push_back(r);
        for (size_t s = 0; s < subjects.size(); ++s) {
            per_utt.clear();
            for (const auto& c : codes[s]) per_utt.push_back(time_decoder(*subjects[s].model, c, win));
            LatencyRecord d{w, "decoder", subjects[s].name, rep.backend, 0.0, 0.0, rep.utterances};
            mean_std(per_utt, d.mean_ms, d.std_ms);
            rep.records.push_back(d);
        }
    }
    return rep;
}

nlohmann::json to_json(const BenchReport& r) {
    nlohmann::json j;
    j["backend"] = r.backend;
    j["utterances"] = r.utterances;
    j["windows_ms"] = r.windows_ms;
    j["warnings"] = r.warnings;
    j["records"] = nlohmann::json::array();
    for (const auto& x : r.records)
        j["records"].push_back({{"window_ms", x.window_ms},
                                {"role", x.role},
                                {"name", x.name},
                                {"backend", x.backend},
                                {"mean_ms", x.mean_ms},
                                {"std_ms", x.std_ms},
                                {"utterances", x.utterances}});
    j["verdicts"] = nlohmann::json::array();
    for (double w : r.windows_ms)
        for (const auto& d : r.decoder_names())
            j["verdicts"].push_back({{"window_ms", w}, {"decoder", d}, {"streamable", r.streamable(w, d)}});
    return j;
}

std::string format_bench(const BenchReport& r) {
    std::ostringstream os;
    const auto decoders = r.decoder_names();
    char cell[96];
    auto pad = [&](const std::string& s, int width) {
        std::snprintf(cell, sizeof(cell), "%-*s", width, s.c_str());
        os << cell;
    };
    pad("window(ms)", 12);
    pad("encoder", 22);
    for (const auto& d : decoders) pad(d, 22);
    for (const auto& d : decoders) pad("verdict(" + d + ")", 24);
    os << "\n";
    // Numbers use %.6f so the text matches the JSON to the printed precision.
    auto stat = [](const LatencyRecord& x) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f +- %.6f", x.mean_ms, x.std_ms);
        return std::string(buf);
    };
    for (double w : r.windows_ms) {
        pad(fmt_window(w), 12);
        pad(stat(r.find(w, "encoder", "encoder")), 22);
        for (const auto& d : decoders) pad(stat(r.find(w, "decoder", d)), 22);
        for (const auto& d : decoders) pad(r.streamable(w, d) ? "streamable" : "not-streamable", 24);
        os << "\n";
    }
    os << "backend: " << r.backend << "; utterances: " << r.utterances << "\n";
    for (const auto& w : r.warnings) os << "warning: " << w << "\n";
    return os.str();
}

}  // namespace ncodec
