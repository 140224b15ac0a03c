// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed
// below; nothing is tuned per run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ncodec/bench.hpp"
#include "ncodec/bitstream.hpp"
#include "ncodec/config.hpp"
#include "ncodec/corpus.hpp"
#include "ncodec/discriminator.hpp"
#include "ncodec/error.hpp"
#include "ncodec/evalkit.hpp"
#include "ncodec/losses.hpp"
#include "ncodec/mel.hpp"
#include "ncodec/stream.hpp"
#include "ncodec/trainer.hpp"

using namespace ncodec;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances ----------------------------------------------------

constexpr double kStreamDecodeTol = 1e-4;    // C2 max-abs sample difference
constexpr int kStreamUtterances = 20;        // C2
constexpr int kCausalTrials = 100;           // C3 perturbations per component
constexpr double kGradRelTol = 1e-4;         // C4 decoder FD agreement
constexpr int kRvqVectors = 1000;            // C5
constexpr double kEmaTol = 1e-10;            // C5
constexpr double kMelDropFraction = 0.5;     // C6 stage-1 smoothed mel drop
constexpr int64_t kStage1Budget = 5000;      // C6 iterations allowed for the drop
constexpr int64_t kStage2Iters = 1000;       // C6 symAD iterations
constexpr double kHeldOutRegression = 0.05;  // C6 stage-2 vs stage-1 held-out mel
constexpr int64_t kSpeedIters = 20;          // C7 timed iterations per stage
constexpr int kBenchUtterances = 50;         // C8
constexpr double kBenchWindowMs = 25.0;      // C8
constexpr int kBitstreamFrames = 10000;      // C9
constexpr double kLsdOneDb = 0.1;            // C10
constexpr double kLsdTol = 1e-3;             // C10
constexpr double kMcdUnit = 6.142;           // C10
constexpr double kMcdTol = 1e-3;             // C10

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path work;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

Waveform random_wave(std::mt19937_64& rng, int64_t n, int rate, float scale = 0.3f) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(n);
    std::normal_distribution<float> N(0.0f, scale);
    for (float& v : w.samples) v = std::clamp(N(rng), -1.0f, 1.0f);
    return w;
}

ExperimentConfig desk() { return load_config(NCODEC_SOURCE_DIR "/configs/desk_24k.yaml"); }

// Desk codec with k-means-seeded codebooks so that every book is in use.
std::unique_ptr<CodecModel> seeded_codec(const CodecSpec& spec, uint64_t seed) {
    auto m = std::make_unique<CodecModel>(spec, seed);
    std::mt19937_64 rng(seed);
    Waveform w = synth_speech(rng, 4.0, spec.sample_rate);
    const LatentSequence z = m->encode(w);
    m->codebook().kmeans_init(z.values.data(), z.num_frames, rng, 5);
    return m;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::fabs(a[i] - b[i])));
    return m;
}

// ---- C1 -------------------------------------------------------------------

Outcome c1_bitrate(Context&) {
    ExperimentConfig cfg;  // 48 kHz, hop 300, 8 x 1024
    CodecModel m(cfg.codec_spec(), 1);
    m.codebook().set_initialized(true);
    const BitstreamHeader h = header_for(m, config_hash(cfg));
    const uint64_t bps = bitrate(h);
    std::mt19937_64 rng(1);
    const Waveform w = random_wave(rng, 48000, 48000);
    const auto codes = m.encode_codes(w);
    const size_t payload = pack_frames(codes, h).size() - kHeaderSize;
    const bool ok = m.hop() == 300 && bps == 12800 && codes.size() == 160 && payload == 1600;
    return {ok, fmt("hop %d, %llu bps, %zu frames, %zu payload bytes for 1.0 s", m.hop(),
                    static_cast<unsigned long long>(bps), codes.size(), payload)};
}

// ---- C2 -------------------------------------------------------------------

Outcome c2_streaming(Context&) {
    ExperimentConfig cfg = desk();
    CodecSpec sym = cfg.codec_spec();
    CodecSpec v2 = sym;
    v2.decoder = cfg.vocoder;
    auto a = seeded_codec(sym, 11);
    auto b = seeded_codec(v2, 12);
    const int rate = cfg.sample_rate, hop = a->hop();
    std::mt19937_64 rng(21);
    int64_t code_mismatch = 0, checks = 0;
    double worst = 0.0;
    for (int u = 0; u < kStreamUtterances; ++u) {
        const double secs = std::uniform_real_distribution<double>(0.4, 1.2)(rng);
        const Waveform w = synth_speech(rng, secs, rate);
        for (const CodecModel* m : {a.get(), b.get()}) {
            const auto batch = m->encode_codes(w);
            const auto batch_wave = m->decode(batch).samples;
            std::vector<std::vector<int64_t>> plans;
            for (double ms : {12.5, 25.0, 50.0, 100.0}) plans.push_back({std::llround(ms * rate / 1000.0)});
            std::vector<int64_t> mixed;
            for (int i = 0; i < 16; ++i) mixed.push_back(std::uniform_int_distribution<int64_t>(1, 3 * hop)(rng));
            plans.push_back(mixed);
            for (const auto& plan : plans) {
                StreamEncoder enc(*m);
                std::vector<CodeFrame> got;
                int64_t pos = 0;
                for (size_t i = 0; pos < w.length(); ++i) {
                    const int64_t n = std::min<int64_t>(plan[i % plan.size()], w.length() - pos);
                    const auto f = enc.push(w.samples.data() + pos, size_t(n));
                    got.insert(got.end(), f.begin(), f.end());
                    pos += n;
                }
                const auto tail = enc.flush();
                got.insert(got.end(), tail.begin(), tail.end());
                ++checks;
                if (got.size() != batch.size()) {
                    ++code_mismatch;
                    continue;
                }
                for (size_t f = 0; f < got.size(); ++f) code_mismatch += got[f].indices != batch[f].indices;

                StreamDecoder dec(*m);
                std::vector<float> out;
                size_t next = 0;
                for (size_t i = 0; next < batch.size(); ++i) {
                    const size_t n = std::min(batch.size() - next, size_t(std::max<int64_t>(1, plan[i % plan.size()] / hop)));
                    const auto y = dec.push(std::vector<CodeFrame>(batch.begin() + next, batch.begin() + next + n));
                    out.insert(out.end(), y.begin(), y.end());
                    next += n;
                }
                worst = std::max(worst, max_abs_diff(out, batch_wave));
            }
        }
    }
    const bool ok = code_mismatch == 0 && worst <= kStreamDecodeTol;
    return {ok, fmt("%d utterances x 2 decoders x %lld chunkings: %lld code mismatches, decode max |diff| %.3g (tol %.0e)",
                    kStreamUtterances, static_cast<long long>(checks / (2 * kStreamUtterances)),
                    static_cast<long long>(code_mismatch), worst, kStreamDecodeTol)};
}

// ---- C3 -------------------------------------------------------------------

Outcome c3_causality(Context&) {
    ExperimentConfig cfg = desk();
    auto m = seeded_codec(cfg.codec_spec(), 31);
    const int hop = m->hop();
    const int64_t frames = 16, T = frames * hop;
    std::mt19937_64 rng(32);
    std::normal_distribution<float> N(0.0f, 0.3f);
    int64_t enc_bad = 0, dec_bad = 0, pipe_bad = 0, enc_moved = 0, dec_moved = 0;
    ag::NoGradGuard ng;
    for (int trial = 0; trial < kCausalTrials; ++trial) {
        // Encoder: latents of frames ending at or before the cut.
        Waveform w = random_wave(rng, T, cfg.sample_rate);
        Tensor x({1, 1, T}, w.samples);
        const Tensor z0 = m->latents(ag::constant(x))->value;
        const int64_t cut = std::uniform_int_distribution<int64_t>(1, T - 1)(rng);
        Tensor xp = x;
        for (int64_t t = cut; t < T; ++t) xp[t] += N(rng);
        const Tensor z1 = m->latents(ag::constant(xp))->value;
        for (int64_t f = 0; f < frames; ++f)
            for (int64_t d = 0; d < z0.dim(1); ++d) {
                const bool differs = z0.at(0, d, f) != z1.at(0, d, f);
                if ((f + 1) * hop <= cut) enc_bad += differs;
                else enc_moved += differs;
            }

        // Decoder: samples before the perturbed frame.
        Tensor q = z0;
        const int64_t k = std::uniform_int_distribution<int64_t>(0, frames - 1)(rng);
        const Tensor y0 = m->synthesize(ag::constant(q))->value;
        for (int64_t d = 0; d < q.dim(1); ++d) q.at(0, d, k) += N(rng);
        const Tensor y1 = m->synthesize(ag::constant(q))->value;
        for (int64_t t = 0; t < T; ++t) {
            const bool differs = y0[t] != y1[t];
            if (t < k * hop) dec_bad += differs;
            else dec_moved += differs;
        }

        // Waveform -> codes -> waveform.
        Waveform wp = w;
        wp.samples.assign(xp.data(), xp.data() + T);
        const auto c0 = m->encode_codes(w), c1 = m->encode_codes(wp);
        const auto r0 = m->decode(c0).samples, r1 = m->decode(c1).samples;
        const int64_t safe = cut / hop * hop;
        for (int64_t t = 0; t < safe; ++t) pipe_bad += r0[t] != r1[t];
    }
    const bool ok = enc_bad == 0 && dec_bad == 0 && pipe_bad == 0 && enc_moved > 0 && dec_moved > 0;
    return {ok, fmt("%d perturbations each: past differences encoder %lld, decoder %lld, pipeline %lld", kCausalTrials,
                    static_cast<long long>(enc_bad), static_cast<long long>(dec_bad), static_cast<long long>(pipe_bad))};
}

// ---- C4 -------------------------------------------------------------------

CodecSpec toy_spec() {
    CodecSpec s;
    s.sample_rate = 8000;
    s.encoder.downsample_factors = {2, 3};
    s.encoder.base_channels = 4;
    s.encoder.max_channels = 8;
    s.encoder.code_dim = 4;
    s.encoder.num_blocks_per_stage = 1;
    s.encoder.kernel_size = 3;
    s.encoder.dilations = {1};
    s.quantizer.num_books = 2;
    s.quantizer.book_size = 8;
    s.decoder.variant = VariantId::sym;
    s.init.scheme = "fan_in";
    return s;
}

Outcome c4_stop_gradient(Context&) {
    const CodecSpec spec = toy_spec();
    CodecModel m(spec, 41);
    std::mt19937_64 rng(42);
    std::vector<Utterance> utts;
    for (int i = 0; i < 3; ++i) utts.push_back({"t" + std::to_string(i), synth_speech(rng, 1.0, 8000)});
    const Corpus data(std::move(utts));
    {
        const LatentSequence z = m.encode(data.utterances()[0].wave);
        m.codebook().kmeans_init(z.values.data(), z.num_frames, rng, 3);
    }
    m.codebook().freeze();

    MelConfig mc = default_mel_config(8000);
    mc.fft_size = 256;
    mc.win_length = 200;
    mc.hop_length = 50;
    mc.num_mels = 40;
    const MelExtractor mel(mc, 8000);
    DiscriminatorConfig dc;
    dc.periods = {2, 3};
    dc.mpd_channels = {4, 8};
    dc.msd_scales = 2;
    dc.msd_layers = {{4, 15, 1, 1}, {8, 5, 1, 1}};
    // Power iteration would move between evaluations of the same loss.
    dc.spectral_first_scale = false;
    ParamStore disc_params;
    Initializer init(43, spec.init);
    DiscriminatorSet discs(disc_params, "disc", dc, init);
    const Tensor wave = data.sample_batch(rng, 2, 600, m.hop());

    // Generator objective of the frozen-encoder stage: the encoder output is
    // cut from the graph before quantization.
    auto loss_of = [&] {
        const ag::Var x = ag::constant(wave);
        const ag::Var z = ag::detach(m.latents(x));
        const VqOutput vq = quantize_batch(m.codebook(), z);
        const ag::Var y = m.synthesize(vq.quantized);
        std::vector<DiscriminatorOutput> real;
        {
            ag::NoGradGuard ng;
            real = discs.forward(x);
        }
        const auto fake = discs.forward(y);
        GeneratorLossParts p;
        p.adv = adversarial_g_loss(GanFlavor::least_squares, fake);
        p.fm = feature_matching_loss(real, fake);
        p.mel = mel_loss(mel, x, y);
        return generator_total_loss(p, LossWeights{});
    };

    const uint64_t cb_before = m.codebook().digest();
    m.params().zero_grad();
    disc_params.zero_grad();
    ag::backward(loss_of());
    int64_t frozen_nonzero = 0, frozen_count = 0;
    for (const auto& [name, p] : m.params().entries()) {
        if (name.rfind("enc.", 0) != 0 && name.rfind("proj.", 0) != 0) continue;
        for (float g : p->grad.storage()) frozen_nonzero += g != 0.0f;
        frozen_count += p->value.numel();
    }
    const bool codebook_same = m.codebook().digest() == cb_before;

    // Per-tensor check: the largest-gradient entry of every decoder tensor
    // against a Richardson-extrapolated central difference.
    auto eval = [&] {
        ag::NoGradGuard ng;
        return double(loss_of()->value.item());
    };
    double worst_rel = 0.0;
    int checked = 0;
    for (const auto& [name, p] : m.params().entries()) {
        if (name.rfind("dec.", 0) != 0) continue;
        int64_t j = 0;
        for (int64_t k = 1; k < p->value.numel(); ++k)
            if (std::fabs(p->grad[k]) > std::fabs(p->grad[j])) j = k;
        const double analytic = p->grad[j];
        if (analytic == 0.0) continue;
        const float keep = p->value[j];
        auto central = [&](double h) {
            p->value[j] = float(keep + h);
            const double up = eval();
            p->value[j] = float(keep - h);
            const double down = eval();
            p->value[j] = keep;
            return (up - down) / (2.0 * h);
        };
        // Step sized for a fixed first-order loss change.
        const double h = 3e-2 / std::fabs(analytic);
        const double fd = (4.0 * central(h / 2) - central(h)) / 3.0;
        worst_rel = std::max(worst_rel, std::fabs(fd - analytic) / std::fabs(analytic));
        ++checked;
    }

    // The trainer's frozen stage leaves the encoder side untouched.
    ExperimentConfig cfg;
    cfg.sample_rate = 8000;
    cfg.encoder = spec.encoder;
    cfg.decoder = spec.decoder;
    cfg.quantizer = spec.quantizer;
    cfg.init = spec.init;
    cfg.mel = mc;
    cfg.mel.fmax = 4000.0;
    cfg.discriminator = dc;
    cfg.schedule.batch_size = 2;
    cfg.schedule.segment_length = 600;
    cfg.schedule.stage1_iters = 3;
    cfg.schedule.stage2_iters = 3;
    cfg.validate();
    CodecModel trained(cfg.codec_spec(), cfg.seed);
    train_stage1(trained, data, cfg);
    const uint64_t enc = trained.params().digest("enc."), proj = trained.params().digest("proj."),
                   cb = trained.codebook().digest(), decd = trained.params().digest("dec.");
    train_stage2(trained, data, cfg);
    const bool trainer_ok = trained.params().digest("enc.") == enc && trained.params().digest("proj.") == proj &&
                            trained.codebook().digest() == cb && trained.params().digest("dec.") != decd;

    const bool ok = frozen_nonzero == 0 && codebook_same && worst_rel <= kGradRelTol && trainer_ok;
    return {ok, fmt("%lld/%lld nonzero frozen grads, codebook %s, decoder FD max rel err %.2e over %d tensors (tol %.0e), "
                    "trainer stage 2 %s",
                    static_cast<long long>(frozen_nonzero), static_cast<long long>(frozen_count),
                    codebook_same ? "unchanged" : "CHANGED", worst_rel, checked, kGradRelTol,
                    trainer_ok ? "kept encoder side fixed" : "MODIFIED the encoder side")};
}

// ---- C5 -------------------------------------------------------------------

Outcome c5_rvq(Context&) {
    std::mt19937_64 rng(51);
    std::normal_distribution<double> N(0.0, 1.0);
    const int B = 2, K = 4, D = 2;
    int64_t mismatches = 0;
    for (int trial = 0; trial < 10; ++trial) {
        ResidualCodebook cb(B, K, D);
        for (double& e : cb.entries()) e = N(rng);
        cb.set_initialized(true);
        const int n = kRvqVectors / 10;
        std::vector<float> z(n * D);
        for (float& v : z) v = float(N(rng));
        std::vector<uint32_t> codes(n * B);
        cb.quantize(z.data(), n, codes.data(), nullptr);
        for (int i = 0; i < n; ++i) {
            // Per-stage exhaustive search on the running residual.
            double r[D] = {z[i * D], z[i * D + 1]};
            for (int s = 0; s < B; ++s) {
                int best = 0;
                double best_d = INFINITY;
                for (int j = 0; j < K; ++j) {
                    double d2 = 0.0;
                    for (int d = 0; d < D; ++d) d2 += (r[d] - cb.entry(s, j)[d]) * (r[d] - cb.entry(s, j)[d]);
                    if (d2 < best_d) best_d = d2, best = j;
                }
                mismatches += codes[i * B + s] != uint32_t(best);
                for (int d = 0; d < D; ++d) r[d] -= cb.entry(s, best)[d];
            }
        }
    }

    // EMA against a per-entry scalar recursion.
    const double decay = 0.95, eps = 1e-5;
    ResidualCodebook cb(B, K, D, decay, eps);
    for (double& e : cb.entries()) e = N(rng);
    std::vector<double> c(B * K, 1.0), s(cb.entries());
    cb.counts() = c;
    cb.sums() = s;
    cb.set_initialized(true);
    double worst = 0.0;
    for (int step = 0; step < 25; ++step) {
        const int n = 16;
        std::vector<float> z(n * D);
        for (float& v : z) v = float(N(rng));
        QuantizeTrace tr;
        cb.quantize(z.data(), n, nullptr, nullptr, &tr);
        for (int b = 0; b < B; ++b) {
            std::vector<double> cnt(K, 0.0), sum(K * D, 0.0);
            for (int i = 0; i < n; ++i) {
                const uint32_t j = tr.assignments[b][i];
                cnt[j] += 1.0;
                for (int d = 0; d < D; ++d) sum[j * D + d] += tr.residuals[b][i * D + d];
            }
            for (int j = 0; j < K; ++j) {
                c[b * K + j] = decay * c[b * K + j] + (1.0 - decay) * cnt[j];
                for (int d = 0; d < D; ++d)
                    s[(b * K + j) * D + d] = decay * s[(b * K + j) * D + d] + (1.0 - decay) * sum[j * D + d];
            }
        }
        cb.ema_update(tr);
        for (int b = 0; b < B; ++b) {
            double total = 0.0;
            for (int j = 0; j < K; ++j) total += c[b * K + j];
            for (int j = 0; j < K; ++j) {
                worst = std::max(worst, std::fabs(cb.counts()[b * K + j] - c[b * K + j]));
                const double smoothed = (c[b * K + j] + eps) / (total + K * eps) * total;
                for (int d = 0; d < D; ++d)
                    worst = std::max(worst, std::fabs(cb.entry(b, j)[d] - s[(b * K + j) * D + d] / smoothed));
            }
        }
    }
    const bool ok = mismatches == 0 && worst <= kEmaTol;
    return {ok, fmt("%d vectors: %lld index mismatches; EMA max deviation %.2e over 25 steps (tol %.0e)", kRvqVectors,
                    static_cast<long long>(mismatches), worst, kEmaTol)};
}

// ---- C6 -------------------------------------------------------------------

double held_out_mel(const CodecModel& m, const Corpus& held, const MelExtractor& mel) {
    double total = 0.0;
    ag::NoGradGuard ng;
    for (const auto& u : held.utterances()) {
        const Waveform y = m.reconstruct(u.wave);
        const int64_t T = u.wave.length();
        const ag::Var l = mel_loss(mel, ag::constant(Tensor({1, 1, T}, u.wave.samples)),
                                   ag::constant(Tensor({1, 1, T}, y.samples)));
        total += l->value.item();
    }
    return total / double(held.size());
}

Outcome c6_desk_training(Context& ctx) {
    ExperimentConfig cfg = desk();
    const fs::path root = ctx.work / "desk";
    fs::remove_all(root);
    const fs::path train_dir = root / "train", valid_dir = root / "valid";
    write_synthetic_corpus(train_dir, 60, 10.0, cfg.sample_rate, 1);   // 10 minutes
    write_synthetic_corpus(valid_dir, 10, 4.0, cfg.sample_rate, 2);    // held out
    cfg.data.train_dir = train_dir.string();
    cfg.data.valid_dir = valid_dir.string();
    cfg.output_dir = (root / "run").string();
    cfg.schedule.stage1_iters = kStage1Budget;
    cfg.schedule.stage2_iters = kStage2Iters;
    cfg.validate();
    const Corpus train = Corpus::load(train_dir, cfg.sample_rate);
    const Corpus held = Corpus::load(valid_dir, cfg.sample_rate);
    const MelExtractor mel(cfg.mel, cfg.sample_rate);

    TrainOptions opt;
    opt.out_dir = root / "run";
    opt.resume = false;
    int64_t halved_at = -1;
    double initial = 0.0;
    opt.on_record = [&](const TrainRecord& r) {
        if (r.iteration == opt.smoothing_window) initial = r.mel_smoothed;
        if (halved_at < 0 && initial > 0.0 && r.mel_smoothed <= (1.0 - kMelDropFraction) * initial)
            halved_at = r.iteration;
        return true;
    };
    CodecModel model(cfg.codec_spec(), cfg.seed);
    const StageReport s1 = train_stage1(model, train, cfg, opt);
    const double drop = 1.0 - s1.final_mel_smoothed / s1.initial_mel_smoothed;
    const double mel1 = held_out_mel(model, held, mel);
    const uint64_t enc = model.params().digest("enc."), proj = model.params().digest("proj."),
                   cb = model.codebook().digest();

    opt.on_record = nullptr;
    const StageReport s2 = train_stage2(model, train, cfg, opt);
    const bool hashes_same = model.params().digest("enc.") == enc && model.params().digest("proj.") == proj &&
                             model.codebook().digest() == cb;
    const double mel2 = held_out_mel(model, held, mel);
    const double regression = mel2 / mel1 - 1.0;

    // Trained codes against time-shuffled codes on the held-out set.
    std::vector<UtteranceMetrics> real_rows, shuffled_rows;
    std::mt19937_64 rng(61);
    for (const auto& u : held.utterances()) {
        auto codes = model.encode_codes(u.wave);
        Waveform y = model.decode(codes);
        y.samples.resize(u.wave.samples.size());
        real_rows.push_back(evaluate_pair(u.name, u.wave, y));
        std::shuffle(codes.begin(), codes.end(), rng);
        Waveform ys = model.decode(codes);
        ys.samples.resize(u.wave.samples.size());
        shuffled_rows.push_back(evaluate_pair(u.name, u.wave, ys));
    }
    const MetricReport real = summarize(real_rows), shuffled = summarize(shuffled_rows);
    const bool ordering = real.mean.mcd < shuffled.mean.mcd && real.mean.lsd < shuffled.mean.lsd;

    const bool ok = halved_at > 0 && halved_at <= kStage1Budget && hashes_same &&
                    regression <= kHeldOutRegression && ordering;
    std::ostringstream os;
    os << fmt("stage 1 smoothed mel %.3f -> %.3f (drop %.1f%%, halved at it %lld); ", s1.initial_mel_smoothed,
              s1.final_mel_smoothed, 100.0 * drop, static_cast<long long>(halved_at))
       << fmt("stage 2 (%lld it) encoder side %s; held-out mel %.4f -> %.4f (%+.2f%%, limit +%.0f%%); ",
              static_cast<long long>(s2.iterations), hashes_same ? "unchanged" : "CHANGED", mel1, mel2,
              100.0 * regression, 100.0 * kHeldOutRegression)
       << fmt("MCD %.2f vs shuffled %.2f dB, LSD %.2f vs %.2f dB", real.mean.mcd, shuffled.mean.mcd, real.mean.lsd,
              shuffled.mean.lsd);
    return {ok, os.str()};
}

// ---- C7 -------------------------------------------------------------------

Outcome c7_speed(Context&) {
    ExperimentConfig cfg = desk();
    cfg.schedule.stage1_iters = kSpeedIters;
    cfg.schedule.stage2_iters = kSpeedIters;
    std::vector<Utterance> utts;
    std::mt19937_64 rng(71);
    for (int i = 0; i < 8; ++i) utts.push_back({"s" + std::to_string(i), synth_speech(rng, 4.0, cfg.sample_rate)});
    const Corpus data(std::move(utts));

    CodecModel base(cfg.codec_spec(), cfg.seed);
    const StageReport s1 = train_stage1(base, data, cfg);
    Container snapshot = codec_container(base, {});

    auto stage2_speed = [&](TrainMode mode) {
        ExperimentConfig c = cfg;
        c.mode = mode;
        auto m = codec_from_container(snapshot);
        return train_stage2(*m, data, c).its_per_sec;
    };
    const double frozen = stage2_speed(TrainMode::symAD);
    const double joint = stage2_speed(TrainMode::symAD_star);
    const bool ok = s1.its_per_sec > frozen && frozen >= joint;
    return {ok, fmt("it/s over %lld iterations: stage 1 %.2f, stage 2 frozen encoder %.2f, symAD_star %.2f",
                    static_cast<long long>(kSpeedIters), s1.its_per_sec, frozen, joint)};
}

// ---- C8 -------------------------------------------------------------------

Outcome c8_bench(Context&) {
    ExperimentConfig cfg = desk();
    CodecSpec sym = cfg.codec_spec();
    CodecSpec v2 = sym;
    v2.decoder = cfg.vocoder;
    CodecModel a(sym, 81), b(v2, 82);
    std::vector<Waveform> utts;
    std::mt19937_64 rng(83);
    for (int i = 0; i < kBenchUtterances; ++i) utts.push_back(synth_speech(rng, 1.0, cfg.sample_rate));
    const BenchReport r = bench_latency({{"sym", &a}, {"v2", &b}}, utts);
    std::printf("%s", format_bench(r).c_str());
    const bool shape = r.records.size() == 4 * 3 && r.warnings.empty() && r.utterances == kBenchUtterances;
    const LatencyRecord& dec = r.find(kBenchWindowMs, "decoder", "v2");
    const LatencyRecord& enc = r.find(kBenchWindowMs, "encoder", "encoder");
    const bool ok = shape && dec.mean_ms < kBenchWindowMs;
    return {ok, fmt("%zu records over %lld utterances; 25 ms window: v2 decoder %.2f +- %.2f ms, encoder %.2f ms, %s",
                    r.records.size(), static_cast<long long>(r.utterances), dec.mean_ms, dec.std_ms, enc.mean_ms,
                    r.streamable(kBenchWindowMs, "v2") ? "streamable" : "not streamable")};
}

// ---- C9 -------------------------------------------------------------------

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io;
}

Outcome c9_bitstream(Context&) {
    BitstreamHeader h;
    h.config_hash = 0x0123456789abcdefull;
    std::mt19937_64 rng(91);
    std::uniform_int_distribution<uint32_t> idx(0, 1023);
    std::vector<CodeFrame> frames(kBitstreamFrames);
    for (auto& f : frames) {
        f.indices.resize(h.num_books);
        for (auto& i : f.indices) i = idx(rng);
    }
    const std::vector<uint8_t> stream = pack_frames(frames, h);
    const Bitstream back = unpack_frames(stream);
    int64_t lost = back.header == h ? 0 : 1;
    lost += back.frames.size() != frames.size();
    for (size_t i = 0; i < std::min(frames.size(), back.frames.size()); ++i) lost += back.frames[i].indices != frames[i].indices;

    std::vector<std::string> failed;
    auto expect = [&](const char* name, ErrorKind want, const std::function<void()>& f) {
        if (kind_of(f) != want) failed.push_back(name);
    };
    expect("truncated header", ErrorKind::corrupt, [&] { unpack_frames(stream.data(), 20); });
    auto bad_magic = stream;
    bad_magic[1] = 'X';
    expect("bad magic", ErrorKind::corrupt, [&] { unpack_frames(bad_magic); });
    auto bad_version = stream;
    bad_version[4] = 9;
    expect("unknown version", ErrorKind::compatibility, [&] { unpack_frames(bad_version); });
    auto cut = stream;
    cut.resize(cut.size() - 3);
    std::string msg;
    try {
        unpack_frames(cut);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::corrupt) msg = e.what();
    }
    const size_t partial = kHeaderSize + (kBitstreamFrames - 1) * h.frame_bytes();
    if (msg.find("byte offset " + std::to_string(partial)) == std::string::npos) failed.push_back("trailing partial frame");
    auto bad_variant = stream;
    bad_variant[18] = 17;
    expect("unknown variant", ErrorKind::corrupt, [&] { unpack_frames(bad_variant); });
    std::vector<CodeFrame> big{{{1024, 0, 0, 0, 0, 0, 0, 0}}};
    expect("index out of range", ErrorKind::shape, [&] { pack_frames(big, h); });
    std::vector<CodeFrame> short_frame{{{1, 2, 3}}};
    expect("wrong book count", ErrorKind::shape, [&] { pack_frames(short_frame, h); });

    std::string fails;
    for (const auto& f : failed) fails += (fails.empty() ? "" : ", ") + f;
    const bool ok = lost == 0 && failed.empty();
    return {ok, fmt("%d frames round-trip, %lld differences; 7 malformed-input cases%s%s", kBitstreamFrames,
                    static_cast<long long>(lost), failed.empty() ? " raise the expected errors" : ", wrong: ",
                    fails.c_str())};
}

// ---- C10 ------------------------------------------------------------------

Outcome c10_metrics(Context&) {
    std::mt19937_64 rng(101);
    const int rate = 24000;
    const Waveform x = synth_speech(rng, 2.0, rate);
    const F0Metrics f0 = f0_metrics(x, x);
    const double m_id = mcd(x, x), l_id = lsd(x, x);
    const bool identity = f0.f0_rmse == 0.0 && f0.uv_error == 0.0 && m_id == 0.0 && l_id == 0.0;

    const Waveform noise = random_wave(rng, 2 * rate, rate, 0.1f);
    Waveform up = noise;
    const float g = float(std::pow(10.0, 1.0 / 20.0));
    for (float& v : up.samples) v *= g;
    const double l1 = lsd(noise, up);

    Matrix a{1, 25, std::vector<float>(25, 0.0f)}, b = a;
    b(0, 5) = 1.0f;
    const double unit = mcd_from_cepstra(a, b, 24);

    const bool ok = identity && std::fabs(l1 - kLsdOneDb) <= kLsdTol && std::fabs(unit - kMcdUnit) <= kMcdTol;
    return {ok, fmt("identical input: F0 RMSE %.3g, V/UV %.3g%%, MCD %.3g, LSD %.3g; +1 dB LSD %.5f dB; "
                    "unit cepstral MCD %.5f dB",
                    f0.f0_rmse, f0.uv_error, m_id, l_id, l1, unit)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ncodec acceptance suite"};
    Context ctx;
    std::string work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory")->capture_default_str();
    app.add_option("--only", only, "Run only these criteria (1-10)")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    ctx.work = work;
    fs::create_directories(ctx.work);

    struct Criterion {
        int id;
        const char* name;
        Outcome (*run)(Context&);
    };
    const std::vector<Criterion> all{
        {1, "bitrate arithmetic", c1_bitrate},
        {2, "streaming equivalence", c2_streaming},
        {3, "causality", c3_causality},
        {4, "stop-gradient contract", c4_stop_gradient},
        {5, "RVQ oracle", c5_rvq},
        {6, "desk-scale training", c6_desk_training},
        {7, "training-speed ordering", c7_speed},
        {8, "latency bench", c8_bench},
        {9, "bitstream robustness", c9_bitstream},
        {10, "metric identities", c10_metrics},
    };
    int failures = 0, ran = 0;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] C%d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
        ++ran;
    }
    std::printf("%d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
