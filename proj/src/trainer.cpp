#include "ncodec/trainer.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "ncodec/discriminator.hpp"
#include "ncodec/error.hpp"
#include "ncodec/losses.hpp"
#include "ncodec/optim.hpp"

namespace ncodec {

namespace fs = std::filesystem;
using Losses = std::map<std::string, double>;

nlohmann::json to_json(const TrainRecord& r) {
    return {{"stage", r.stage},         {"iteration", r.iteration}, {"wall_seconds", r.wall_seconds},
            {"its_per_sec", r.its_per_sec}, {"loss", r.losses},     {"mel_smoothed", r.mel_smoothed},
            {"lr_g", r.lr_g},           {"lr_d", r.lr_d},           {"perplexity", r.perplexity}};
}

double scheduled_lr(double base, const OptimizerConfig& o, int64_t stage_iters, int64_t iteration) {
    const int64_t period = o.decay_every > 0 ? o.decay_every : std::max<int64_t>(1, stage_iters / 2);
    return base * std::pow(o.decay_gamma, double(iteration / period));
}

namespace {

double finite_or_throw(const std::string& stage, int64_t it, const std::string& what, const ag::Var& v) {
    const double x = v->value.item();
    if (!std::isfinite(x))
        throw Error(ErrorKind::state, stage + ": non-finite " + what + " loss at iteration " + std::to_string(it + 1));
    return x;
}

AdamConfig adam_config(const OptimizerConfig& o, double lr) {
    AdamConfig a;
    a.lr = lr;
    a.beta1 = o.beta1;
    a.beta2 = o.beta2;
    a.eps = o.eps;
    a.grad_clip = o.grad_clip;
    return a;
}

// [B, D, F] -> [B*F, D] rows.
std::vector<float> frame_rows(const Tensor& z) {
    const int64_t B = z.dim(0), D = z.dim(1), F = z.dim(2);
    std::vector<float> rows(B * F * D);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t d = 0; d < D; ++d)
            for (int64_t f = 0; f < F; ++f) rows[(b * F + f) * D + d] = z.at(b, d, f);
    return rows;
}

double mean_perplexity(const ResidualCodebook& cb) {
    const auto p = cb.perplexity();
    double s = 0.0;
    for (double v : p) s += v;
    return p.empty() ? 0.0 : s / double(p.size());
}

// Discriminators with their own parameter store and optimizer.
struct Adversary {
    ParamStore params;
    DiscriminatorSet discs;
    Adam opt;

    Adversary(const ExperimentConfig& cfg, double lr) : discs(make(cfg)) {
        opt = Adam(params.trainable("disc"), adam_config(cfg.optimizer, lr));
    }

private:
    DiscriminatorSet make(const ExperimentConfig& cfg) {
        Initializer init(cfg.seed ^ 0x5eedd15cull, cfg.init);
        return DiscriminatorSet(params, "disc", cfg.discriminator, init);
    }
};

// One alternating update: discriminator on real vs detached fake, then the
// generator side with adversarial, feature-matching, mel and (optionally)
// commitment losses.
Losses gan_iteration(const std::string& stage, int64_t it, const CodecModel& model, Adversary& adv, Adam& opt_g,
                     const MelExtractor& mel, const ExperimentConfig& cfg, const ag::Var& x, const ag::Var& q,
                     const ag::Var& vq_loss) {
    Losses out;
    ag::Var y = model.synthesize(q);
    {
        auto real = adv.discs.forward(x);
        auto fake = adv.discs.forward(ag::detach(y));
        ag::Var d = discriminator_loss(cfg.gan, real, fake);
        out["disc"] = finite_or_throw(stage, it, "discriminator", d);
        ag::backward(d);
        out["grad_norm_d"] = adv.opt.step();
    }
    adv.params.set_trainable("disc", false);
    std::vector<DiscriminatorOutput> real;
    {
        ag::NoGradGuard ng;
        real = adv.discs.forward(x);
    }
    auto fake = adv.discs.forward(y);
    GeneratorLossParts parts;
    parts.adv = adversarial_g_loss(cfg.gan, fake);
    parts.fm = feature_matching_loss(real, fake);
    parts.mel = mel_loss(mel, x, y);
    parts.vq = vq_loss;
    ag::Var total = generator_total_loss(parts, cfg.losses);
    out["adv"] = finite_or_throw(stage, it, "adversarial", parts.adv);
    out["fm"] = finite_or_throw(stage, it, "feature matching", parts.fm);
    out["mel"] = finite_or_throw(stage, it, "mel", parts.mel);
    if (vq_loss) out["vq"] = finite_or_throw(stage, it, "commitment", vq_loss);
    out["gen_total"] = finite_or_throw(stage, it, "generator", total);
    ag::backward(total);
    out["grad_norm_g"] = opt_g.step();
    adv.params.set_trainable("disc", true);
    return out;
}

void codebook_step(ResidualCodebook& cb, const QuantizeTrace& trace, const QuantizerConfig& qc, int64_t it,
                   std::mt19937_64& rng) {
    cb.ema_update(trace);
    if (qc.reseed_interval > 0 && (it + 1) % qc.reseed_interval == 0) cb.reseed_dead(trace, qc.dead_threshold, rng);
}

void ensure_codebook_init(ResidualCodebook& cb, const Tensor& z, const QuantizerConfig& qc, std::mt19937_64& rng) {
    if (cb.initialized()) return;
    const auto rows = frame_rows(z);
    cb.kmeans_init(rows.data(), z.dim(0) * z.dim(2), rng, qc.kmeans_iters);
}

// Everything a stage loop needs beyond the per-iteration update.
struct StageSpec {
    std::string name;
    int64_t iters = 0;
    CodecModel* model = nullptr;
    Adam* opt_g = nullptr;
    double lr_g = 0.0;
    Adversary* adv = nullptr;
    double lr_d = 0.0;
    std::mt19937_64* rng = nullptr;
    std::function<Losses(int64_t)> step;
};

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void save_state(const fs::path& path, const StageSpec& s, const ExperimentConfig& cfg, int64_t it,
                const std::deque<double>& window, double initial) {
    CheckpointInfo info{"training", s.name, to_string(cfg.mode), it, config_hash(cfg), to_json(cfg)};
    Container c = codec_container(*s.model, info);
    if (s.opt_g) s.opt_g->save(c, "opt_g");
    if (s.adv) {
        for (const auto& [name, v] : s.adv->params.entries()) c.add(name, v->value);
        s.adv->opt.save(c, "opt_d");
    }
    c.meta["rng"] = rng_state(*s.rng);
    c.meta["mel_window"] = std::vector<double>(window.begin(), window.end());
    c.meta["initial_mel_smoothed"] = initial;
    write_container(path, c);
}

int64_t load_state(const fs::path& path, StageSpec& s, const ExperimentConfig& cfg, std::deque<double>& window,
                   double& initial) {
    const Container c = read_container(path);
    if (c.meta.value("kind", "") != "training" || c.meta.value("stage", "") != s.name)
        throw Error(ErrorKind::compatibility, path.string() + " is not a " + s.name + " training state");
    if (parse_hash_hex(c.meta.value("config_hash", "0")) != config_hash(cfg))
        throw Error(ErrorKind::compatibility,
                    path.string() + " was written with a different config; remove it or use a new output directory");
    s.model->load_state(c);
    if (s.opt_g) s.opt_g->load(c, "opt_g");
    if (s.adv) {
        for (const auto& [name, v] : s.adv->params.entries()) {
            const auto& a = c.require(name);
            if (a.shape != v->value.shape())
                throw Error(ErrorKind::compatibility, "discriminator array '" + name + "' has the wrong shape");
            v->value = Tensor(a.shape, a.f32);
        }
        s.adv->opt.load(c, "opt_d");
    }
    std::istringstream is(c.meta.at("rng").get<std::string>());
    is >> *s.rng;
    window.clear();
    for (double v : c.meta.at("mel_window")) window.push_back(v);
    initial = c.meta.value("initial_mel_smoothed", 0.0);
    return c.meta.value("iteration", int64_t(0));
}

// Keeps log lines up to (and including) iteration `upto`.
void truncate_log(const fs::path& log, int64_t upto) {
    if (!fs::exists(log)) return;
    std::ifstream in(log);
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("iteration", int64_t(0)) <= upto) keep.push_back(line);
    }
    in.close();
    std::ofstream out(log, std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
}

StageReport run_stage(StageSpec& s, const ExperimentConfig& cfg, const TrainOptions& opt) {
    using Clock = std::chrono::steady_clock;
    StageReport rep;
    rep.stage = s.name;
    const bool persist = !opt.out_dir.empty();
    fs::path log_path, state_path, ckpt_path;
    if (persist) {
        fs::create_directories(opt.out_dir);
        log_path = opt.out_dir / (s.name + ".jsonl");
        state_path = opt.out_dir / (s.name + ".state");
        ckpt_path = opt.out_dir / (s.name + ".ckpt");
        rep.state = state_path;
        rep.checkpoint = ckpt_path;
    }
    std::deque<double> window;
    double initial = 0.0;
    int64_t it0 = 0;
    if (persist && opt.resume && fs::exists(state_path)) {
        it0 = load_state(state_path, s, cfg, window, initial);
        truncate_log(log_path, it0);
    } else if (persist) {
        std::ofstream(log_path, std::ios::trunc);
    }
    rep.start_iteration = it0;
    std::ofstream log;
    if (persist) log.open(log_path, std::ios::app);

    auto checkpoint = [&](int64_t done) {
        if (!persist) return;
        save_state(state_path, s, cfg, done, window, initial);
        CheckpointInfo info{"codec", s.name, to_string(cfg.mode), done, config_hash(cfg), to_json(cfg)};
        save_codec(ckpt_path, *s.model, info);
    };

    const auto t_start = Clock::now();
    int64_t it = it0;
    for (; it < s.iters; ++it) {
        const double lr_g = scheduled_lr(s.lr_g, cfg.optimizer, s.iters, it);
        const double lr_d = scheduled_lr(s.lr_d, cfg.optimizer, s.iters, it);
        if (s.opt_g) s.opt_g->set_lr(lr_g);
        if (s.adv) s.adv->opt.set_lr(lr_d);

        TrainRecord r;
        r.stage = s.name;
        r.losses = s.step(it);
        r.iteration = it + 1;
        r.wall_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
        r.its_per_sec = r.wall_seconds > 0.0 ? double(it + 1 - it0) / r.wall_seconds : 0.0;
        r.lr_g = s.opt_g ? lr_g : 0.0;
        r.lr_d = s.adv ? lr_d : 0.0;
        r.perplexity = mean_perplexity(s.model->codebook());
        window.push_back(r.losses.at("mel"));
        if (int(window.size()) > opt.smoothing_window) window.pop_front();
        double sm = 0.0;
        for (double v : window) sm += v;
        r.mel_smoothed = sm / double(window.size());
        if (r.iteration <= opt.smoothing_window) initial = r.mel_smoothed;

        if (persist && r.iteration % cfg.schedule.log_every == 0) log << to_json(r).dump() << '\n' << std::flush;
        rep.records.push_back(r);
        const bool keep_going = !opt.on_record || opt.on_record(r);
        if (persist && cfg.schedule.checkpoint_every > 0 && r.iteration % cfg.schedule.checkpoint_every == 0 &&
            r.iteration < s.iters)
            checkpoint(r.iteration);
        if (!keep_going) {
            rep.stopped_early = true;
            ++it;
            break;
        }
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t_start).count();
    rep.iterations = it;
    rep.its_per_sec = elapsed > 0.0 && it > it0 ? double(it - it0) / elapsed : 0.0;
    rep.perplexity = s.model->codebook().perplexity();
    rep.initial_mel_smoothed = initial;
    if (!window.empty()) {
        double sm = 0.0;
        for (double v : window) sm += v;
        rep.final_mel_smoothed = sm / double(window.size());
    }
    checkpoint(it);
    if (persist) {
        nlohmann::json j{{"stage", s.name},
                         {"iterations", rep.iterations},
                         {"start_iteration", rep.start_iteration},
                         {"its_per_sec", rep.its_per_sec},
                         {"perplexity", rep.perplexity},
                         {"initial_mel_smoothed", rep.initial_mel_smoothed},
                         {"final_mel_smoothed", rep.final_mel_smoothed},
                         {"stopped_early", rep.stopped_early},
                         {"checkpoint", ckpt_path.string()},
                         {"config_hash", hash_hex(config_hash(cfg))}};
        std::ofstream(opt.out_dir / (s.name + ".report.json")) << j.dump(2) << '\n';
    }
    return rep;
}

void require_data(const Corpus& data) {
    if (data.empty()) throw Error(ErrorKind::prerequisite, "training corpus is empty");
}

int64_t stage_iters(const TrainOptions& opt, int64_t configured) { return opt.iterations >= 0 ? opt.iterations : configured; }

}  // namespace

StageReport train_stage1(CodecModel& model, const Corpus& data, const ExperimentConfig& cfg, const TrainOptions& opt) {
    if (cfg.mode == TrainMode::vocoder) throw Error(ErrorKind::config, "stage 1 does not apply to vocoder mode");
    require_data(data);
    const MelExtractor mel(cfg.mel, cfg.sample_rate);
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 1);
    model.params().set_trainable("", true);
    Adam opt_g(model.params().trainable(), adam_config(cfg.optimizer, cfg.optimizer.lr_g));

    StageSpec s;
    s.name = "stage1";
    s.iters = stage_iters(opt, cfg.schedule.stage1_iters);
    s.model = &model;
    s.opt_g = &opt_g;
    s.lr_g = cfg.optimizer.lr_g;
    s.rng = &rng;
    s.step = [&](int64_t it) {
        ag::Var x = ag::constant(data.sample_batch(rng, cfg.schedule.batch_size, cfg.schedule.segment_length, model.hop()));
        ag::Var z = model.latents(x);
        ensure_codebook_init(model.codebook(), z->value, cfg.quantizer, rng);
        VqOutput vq = quantize_batch(model.codebook(), z);
        ag::Var y = model.synthesize(vq.quantized);
        GeneratorLossParts parts;
        parts.mel = mel_loss(mel, x, y);
        parts.vq = vq.vq_loss;
        ag::Var total = generator_total_loss(parts, cfg.losses);
        Losses l;
        l["mel"] = finite_or_throw(s.name, it, "mel", parts.mel);
        l["vq"] = finite_or_throw(s.name, it, "commitment", parts.vq);
        l["gen_total"] = finite_or_throw(s.name, it, "total", total);
        ag::backward(total);
        l["grad_norm_g"] = opt_g.step();
        codebook_step(model.codebook(), vq.trace, cfg.quantizer, it, rng);
        return l;
    };
    return run_stage(s, cfg, opt);
}

StageReport train_stage2(CodecModel& model, const Corpus& data, const ExperimentConfig& cfg, const TrainOptions& opt) {
    if (cfg.mode == TrainMode::vocoder || cfg.mode == TrainMode::soundstream_baseline)
        throw Error(ErrorKind::config, "stage 2 applies to symAD, symAD_star and asymAD");
    require_data(data);
    const bool frozen = cfg.mode != TrainMode::symAD_star;
    const MelExtractor mel(cfg.mel, cfg.sample_rate);
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 2);
    if (!model.codebook().initialized())
        throw Error(ErrorKind::prerequisite, "stage 2 needs a trained stage-1 codebook");
    model.params().set_trainable("", true);
    if (frozen) {
        model.params().set_trainable("enc.", false);
        model.params().set_trainable("proj.", false);
        model.codebook().freeze();
    }
    Adam opt_g(model.params().trainable(), adam_config(cfg.optimizer, cfg.optimizer.lr_g));
    Adversary adv(cfg, cfg.optimizer.lr_d);

    StageSpec s;
    s.name = "stage2";
    s.iters = stage_iters(opt, cfg.schedule.stage2_iters);
    s.model = &model;
    s.opt_g = &opt_g;
    s.lr_g = cfg.optimizer.lr_g;
    s.adv = &adv;
    s.lr_d = cfg.optimizer.lr_d;
    s.rng = &rng;
    s.step = [&](int64_t it) {
        ag::Var x = ag::constant(data.sample_batch(rng, cfg.schedule.batch_size, cfg.schedule.segment_length, model.hop()));
        if (frozen) {
            Tensor q;
            {
                ag::NoGradGuard ng;
                q = quantize_batch(model.codebook(), model.latents(x)).quantized->value;
            }
            return gan_iteration(s.name, it, model, adv, opt_g, mel, cfg, x, ag::constant(std::move(q)), nullptr);
        }
        VqOutput vq = quantize_batch(model.codebook(), model.latents(x));
        Losses l = gan_iteration(s.name, it, model, adv, opt_g, mel, cfg, x, vq.quantized, vq.vq_loss);
        codebook_step(model.codebook(), vq.trace, cfg.quantizer, it, rng);
        return l;
    };
    return run_stage(s, cfg, opt);
}

CodeDataset extract_normalized_codes(const CodecModel& codec, const Corpus& data) {
    if (!codec.codebook().frozen())
        throw Error(ErrorKind::prerequisite, "code extraction needs a codec with a frozen codebook (a stage-2 checkpoint)");
    require_data(data);
    CodeDataset d;
    d.hop = codec.hop();
    d.sample_rate = codec.sample_rate();
    for (const auto& u : data.utterances()) {
        d.names.push_back(u.name);
        d.codes.push_back(codec.encode_codes(u.wave));
        d.latents.push_back(rvq_dequantize(d.codes.back(), codec.codebook(), codec.frame_rate()));
    }
    d.stats = compute_norm_stats(d.latents);
    return d;
}

void save_code_dataset(const fs::path& path, const CodeDataset& d, uint64_t config_hash) {
    Container c;
    c.meta["format"] = "ncodec-codes";
    c.meta["config_hash"] = hash_hex(config_hash);
    c.meta["names"] = d.names;
    c.meta["hop"] = d.hop;
    c.meta["sample_rate"] = d.sample_rate;
    for (size_t i = 0; i < d.names.size(); ++i) {
        const auto& z = d.latents[i];
        c.add("latents." + std::to_string(i), Tensor({z.num_frames, int64_t(z.dim)}, z.values));
        std::vector<uint32_t> flat;
        for (const auto& f : d.codes[i]) flat.insert(flat.end(), f.indices.begin(), f.indices.end());
        const int64_t nb = d.codes[i].empty() ? 0 : int64_t(d.codes[i][0].indices.size());
        c.add("codes." + std::to_string(i), {int64_t(d.codes[i].size()), nb}, std::move(flat));
    }
    const int64_t D = int64_t(d.stats.mean.size());
    c.add("norm.mean", {D}, d.stats.mean);
    c.add("norm.std", {D}, d.stats.std);
    write_container(path, c);
}

CodeDataset load_code_dataset(const fs::path& path) {
    const Container c = read_container(path);
    if (c.meta.value("format", "") != "ncodec-codes")
        throw Error(ErrorKind::compatibility, path.string() + " is not a code dataset");
    CodeDataset d;
    d.names = c.meta.at("names").get<std::vector<std::string>>();
    d.hop = c.meta.at("hop").get<int>();
    d.sample_rate = c.meta.at("sample_rate").get<int>();
    const double rate = double(d.sample_rate) / d.hop;
    for (size_t i = 0; i < d.names.size(); ++i) {
        const auto& z = c.require("latents." + std::to_string(i));
        if (z.dtype != DType::f32 || z.shape.size() != 2) throw Error(ErrorKind::corrupt, "bad latent array");
        LatentSequence s;
        s.num_frames = z.shape[0];
        s.dim = int(z.shape[1]);
        s.frame_rate = rate;
        s.values = z.f32;
        d.latents.push_back(std::move(s));
        const auto& k = c.require("codes." + std::to_string(i));
        if (k.dtype != DType::u32 || k.shape.size() != 2) throw Error(ErrorKind::corrupt, "bad code array");
        std::vector<CodeFrame> frames(k.shape[0]);
        for (int64_t f = 0; f < k.shape[0]; ++f)
            frames[f].indices.assign(k.u32.begin() + f * k.shape[1], k.u32.begin() + (f + 1) * k.shape[1]);
        d.codes.push_back(std::move(frames));
    }
    d.stats.mean = c.require("norm.mean").f64;
    d.stats.std = c.require("norm.std").f64;
    return d;
}

std::unique_ptr<CodecModel> make_vocoder_model(const CodecModel& codec, const ExperimentConfig& cfg,
                                               const NormStats& stats) {
    if (!codec.codebook().frozen())
        throw Error(ErrorKind::prerequisite, "vocoder training needs a codec with a frozen codebook");
    CodecSpec spec = codec.spec();
    spec.decoder = cfg.vocoder;
    spec.normalized_input = true;
    spec.init = cfg.init;
    if (int64_t(stats.mean.size()) != spec.encoder.code_dim || stats.std.size() != stats.mean.size())
        throw Error(ErrorKind::config, "normalization statistics have dimension " + std::to_string(stats.mean.size()) +
                                           ", codec code_dim is " + std::to_string(spec.encoder.code_dim));
    auto voc = std::make_unique<CodecModel>(spec, cfg.seed ^ 0x70c0de5ull);
    Container c;
    codec.save_state(c);
    voc->load_state(c, {"enc.", "proj.", "vq."});
    voc->codebook().freeze();
    voc->norm_stats() = stats;
    return voc;
}

StageReport train_vocoder(CodecModel& vocoder, const CodeDataset& codes, const Corpus& data,
                          const ExperimentConfig& cfg, const TrainOptions& opt) {
    const int D = vocoder.spec().encoder.code_dim;
    if (!vocoder.spec().normalized_input)
        throw Error(ErrorKind::config, "vocoder model must decode normalized codes");
    if (vocoder.spec().decoder.variant == VariantId::sym)
        throw Error(ErrorKind::config, "vocoder variant must be v0, v1 or v2");
    if (int64_t(codes.stats.mean.size()) != D)
        throw Error(ErrorKind::config, "code dataset dimension " + std::to_string(codes.stats.mean.size()) +
                                           " does not match vocoder code_dim " + std::to_string(D));
    if (codes.latents.size() != data.size()) throw Error(ErrorKind::config, "code dataset and corpus differ in size");
    if (codes.hop != vocoder.hop() || codes.sample_rate != vocoder.sample_rate())
        throw Error(ErrorKind::config, "code dataset hop/rate do not match the vocoder");
    const int hop = vocoder.hop();
    const int64_t seg = cfg.schedule.segment_length, seg_frames = seg / hop;
    std::vector<size_t> eligible;
    for (size_t i = 0; i < codes.latents.size(); ++i) {
        if (codes.latents[i].dim != D) throw Error(ErrorKind::config, "code dataset entry has the wrong dimension");
        if (codes.latents[i].num_frames >= seg_frames) eligible.push_back(i);
    }
    if (eligible.empty())
        throw Error(ErrorKind::config, "no utterance is at least one segment (" + std::to_string(seg) + " samples) long");

    const MelExtractor mel(cfg.mel, cfg.sample_rate);
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 3);
    vocoder.norm_stats() = codes.stats;
    vocoder.codebook().freeze();
    vocoder.params().set_trainable("", false);
    vocoder.params().set_trainable("dec.", true);
    Adam opt_g(vocoder.params().trainable(), adam_config(cfg.optimizer, cfg.optimizer.lr_g));
    Adversary adv(cfg, cfg.optimizer.lr_d);

    StageSpec s;
    s.name = "vocoder";
    s.iters = stage_iters(opt, cfg.schedule.vocoder_iters);
    s.model = &vocoder;
    s.opt_g = &opt_g;
    s.lr_g = cfg.optimizer.lr_g;
    s.adv = &adv;
    s.lr_d = cfg.optimizer.lr_d;
    s.rng = &rng;
    s.step = [&](int64_t it) {
        const int B = cfg.schedule.batch_size;
        Tensor x({B, 1, seg}), q({B, D, seg_frames});
        std::uniform_int_distribution<size_t> pick(0, eligible.size() - 1);
        for (int b = 0; b < B; ++b) {
            const size_t u = eligible[pick(rng)];
            const auto& z = codes.latents[u];
            const auto& w = data.utterances()[u].wave.samples;
            std::uniform_int_distribution<int64_t> off(0, z.num_frames - seg_frames);
            const int64_t f0 = off(rng);
            for (int64_t n = 0; n < seg; ++n) {
                const int64_t src = f0 * hop + n;
                x.at(b, 0, n) = src < int64_t(w.size()) ? w[src] : 0.0f;
            }
            for (int64_t f = 0; f < seg_frames; ++f)
                for (int d = 0; d < D; ++d) q.at(b, d, f) = z.frame(f0 + f)[d];
        }
        return gan_iteration(s.name, it, vocoder, adv, opt_g, mel, cfg, ag::constant(std::move(x)),
                             ag::constant(std::move(q)), nullptr);
    };
    return run_stage(s, cfg, opt);
}

StageReport train_baseline(CodecModel& model, const Corpus& data, const ExperimentConfig& cfg, const TrainOptions& opt) {
    require_data(data);
    const MelExtractor mel(cfg.mel, cfg.sample_rate);
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 4);
    model.params().set_trainable("", true);
    Adam opt_g(model.params().trainable(), adam_config(cfg.optimizer, cfg.optimizer.lr_g));
    Adversary adv(cfg, cfg.optimizer.lr_d);

    StageSpec s;
    s.name = "baseline";
    s.iters = stage_iters(opt, cfg.schedule.stage1_iters + cfg.schedule.stage2_iters);
    s.model = &model;
    s.opt_g = &opt_g;
    s.lr_g = cfg.optimizer.lr_g;
    s.adv = &adv;
    s.lr_d = cfg.optimizer.lr_d;
    s.rng = &rng;
    s.step = [&](int64_t it) {
        ag::Var x = ag::constant(data.sample_batch(rng, cfg.schedule.batch_size, cfg.schedule.segment_length, model.hop()));
        ag::Var z = model.latents(x);
        ensure_codebook_init(model.codebook(), z->value, cfg.quantizer, rng);
        VqOutput vq = quantize_batch(model.codebook(), z);
        Losses l = gan_iteration(s.name, it, model, adv, opt_g, mel, cfg, x, vq.quantized, vq.vq_loss);
        codebook_step(model.codebook(), vq.trace, cfg.quantizer, it, rng);
        return l;
    };
    return run_stage(s, cfg, opt);
}

}  // namespace ncodec
