#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "ncodec/bench.hpp"
#include "ncodec/bitstream.hpp"
#include "ncodec/config.hpp"
#include "ncodec/corpus.hpp"
#include "ncodec/evalkit.hpp"
#include "ncodec/stream.hpp"
#include "ncodec/trainer.hpp"

namespace ncodec::cli {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::prerequisite:
    case ErrorKind::io: return 3;
    case ErrorKind::compatibility: return 4;
    case ErrorKind::corrupt:
    case ErrorKind::format: return 5;
    default: return 1;
    }
}

namespace {

struct Loaded {
    std::unique_ptr<CodecModel> model;
    CheckpointInfo info;
};

Loaded load_checkpoint(const fs::path& p) {
    Loaded l;
    l.model = load_codec(p, &l.info);
    if (l.info.kind != "codec") throw Error(ErrorKind::compatibility, p.string() + " is not a codec checkpoint");
    return l;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    if (!out) throw Error(ErrorKind::io, "cannot write " + p.string());
    out << s;
}

std::vector<uint8_t> read_bytes(std::istream& in) {
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(std::ostream& out, const std::vector<uint8_t>& b) {
    out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

int64_t chunk_samples(double ms, int rate) {
    const int64_t n = std::llround(ms * rate / 1000.0);
    if (n < 1) throw Error(ErrorKind::config, "--chunk-ms is shorter than one sample");
    return n;
}

Waveform input_wave(const std::string& path, const CodecModel& m, bool allow_resample) {
    Waveform w = load_wav(path);
    if (w.sample_rate != m.sample_rate()) {
        if (!allow_resample)
            throw Error(ErrorKind::compatibility, path + " is " + std::to_string(w.sample_rate) +
                                                      " Hz, the model runs at " + std::to_string(m.sample_rate()) +
                                                      " Hz (pass --resample to convert)");
        w = resample(w, m.sample_rate());
    }
    return w;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string stage = "all";
    std::string codec;
    int64_t iterations = -1;
    bool fresh = false;
    bool force = false;
};

void print_report(const StageReport& r) {
    std::printf("%s: %lld iterations (%.3f it/s), mel %.4f -> %.4f, checkpoint %s\n", r.stage.c_str(),
                static_cast<long long>(r.iterations), r.its_per_sec, r.initial_mel_smoothed, r.final_mel_smoothed,
                r.checkpoint.string().c_str());
}

void check_hash(const CheckpointInfo& info, uint64_t expected, const fs::path& p, bool force) {
    if (info.config_hash != expected && !force)
        throw Error(ErrorKind::compatibility, p.string() + " was produced with config hash " +
                                                  hash_hex(info.config_hash) + ", current config is " +
                                                  hash_hex(expected) + " (pass --force to continue anyway)");
}

int cmd_train(const TrainArgs& a) {
    const ExperimentConfig cfg = load_config(a.config);
    const fs::path out = resolve_output_dir(cfg);
    fs::create_directories(out);
    write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
    const uint64_t hash = config_hash(cfg);
    TrainOptions opt;
    opt.out_dir = out;
    opt.resume = !a.fresh;
    opt.iterations = a.iterations;
    const Corpus data = Corpus::load(cfg.data.train_dir, cfg.sample_rate, size_t(cfg.data.max_utterances));
    std::printf("corpus: %zu utterances, %.1f s; output %s; config %s\n", data.size(), data.total_seconds(),
                out.string().c_str(), hash_hex(hash).c_str());

    const std::string stage = a.stage;
    if (stage != "1" && stage != "2" && stage != "vocoder" && stage != "all")
        throw Error(ErrorKind::config, "--stage must be 1, 2, vocoder or all");

    if (cfg.mode == TrainMode::soundstream_baseline) {
        if (stage == "2" || stage == "vocoder")
            throw Error(ErrorKind::config, "soundstream_baseline trains in a single stage (use --stage 1 or all)");
        CodecModel model(cfg.codec_spec(), cfg.seed);
        print_report(train_baseline(model, data, cfg, opt));
        return 0;
    }
    if (cfg.mode == TrainMode::vocoder) {
        if (stage == "1" || stage == "2")
            throw Error(ErrorKind::config, "vocoder mode only has the vocoder stage (use --stage vocoder or all)");
        const fs::path codec_path = a.codec.empty() ? out / "stage2.ckpt" : fs::path(a.codec);
        if (!fs::exists(codec_path))
            throw Error(ErrorKind::prerequisite, "vocoder training needs a trained codec checkpoint; " +
                                                     codec_path.string() + " does not exist (pass --codec)");
        Loaded codec = load_checkpoint(codec_path);
        const CodeDataset codes = extract_normalized_codes(*codec.model, data);
        save_code_dataset(out / "codes.ckpt", codes, hash);
        auto voc = make_vocoder_model(*codec.model, cfg, codes.stats);
        print_report(train_vocoder(*voc, codes, data, cfg, opt));
        return 0;
    }
    if (stage == "vocoder") throw Error(ErrorKind::config, "--stage vocoder needs a config with mode: vocoder");
    if (stage == "1" || stage == "all") {
        CodecModel model(cfg.codec_spec(), cfg.seed);
        print_report(train_stage1(model, data, cfg, opt));
    }
    if (stage == "2" || stage == "all") {
        const fs::path s1 = out / "stage1.ckpt";
        if (!fs::exists(s1))
            throw Error(ErrorKind::prerequisite, "stage 2 needs the stage-1 checkpoint " + s1.string() +
                                                     "; run `train --stage 1` first");
        Loaded l = load_checkpoint(s1);
        check_hash(l.info, hash, s1, a.force);
        print_report(train_stage2(*l.model, data, cfg, opt));
    }
    return 0;
}

// ---- encode / decode ------------------------------------------------------

struct CodingArgs {
    std::string checkpoint, input, output;
    double chunk_ms = 0.0;
    bool resample = false;
    bool force = false;
};

int cmd_encode(const CodingArgs& a) {
    Loaded l = load_checkpoint(a.checkpoint);
    const CodecModel& m = *l.model;
    const BitstreamHeader h = header_for(m, l.info.config_hash);
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (a.output != "-") {
        file.open(a.output, std::ios::binary);
        if (!file) throw Error(ErrorKind::io, "cannot write " + a.output);
        out = &file;
    }
    std::vector<uint8_t> bytes = pack_header(h);
    if (a.input == "-") {
        // Raw 16-bit little-endian mono PCM at the model rate, encoded as it
        // arrives.
        StreamEncoder enc(m);
        const int64_t n = chunk_samples(a.chunk_ms > 0 ? a.chunk_ms : 20.0, m.sample_rate());
        write_bytes(*out, bytes);
        std::vector<int16_t> pcm(n);
        std::vector<float> x;
        while (std::cin.read(reinterpret_cast<char*>(pcm.data()), std::streamsize(n * 2)) || std::cin.gcount() > 0) {
            const size_t got = size_t(std::cin.gcount()) / 2;
            x.resize(got);
            for (size_t i = 0; i < got; ++i) x[i] = pcm[i] / 32768.0f;
            bytes.clear();
            append_frames(bytes, enc.push(x), h);
            write_bytes(*out, bytes);
            out->flush();
        }
        bytes.clear();
        append_frames(bytes, enc.flush(), h);
        write_bytes(*out, bytes);
        return 0;
    }
    const Waveform w = input_wave(a.input, m, a.resample);
    std::vector<CodeFrame> frames;
    if (a.chunk_ms > 0.0) {
        StreamEncoder enc(m);
        const int64_t n = chunk_samples(a.chunk_ms, m.sample_rate());
        for (int64_t s = 0; s < w.length(); s += n) {
            auto f = enc.push(w.samples.data() + s, size_t(std::min(n, w.length() - s)));
            frames.insert(frames.end(), f.begin(), f.end());
        }
        auto f = enc.flush();
        frames.insert(frames.end(), f.begin(), f.end());
    } else {
        frames = m.encode_codes(w);
    }
    append_frames(bytes, frames, h);
    write_bytes(*out, bytes);
    if (a.output != "-")
        std::fprintf(stderr, "%zu frames, %zu payload bytes, %llu bps\n", frames.size(), bytes.size() - kHeaderSize,
                     static_cast<unsigned long long>(bitrate(h)));
    return 0;
}

void check_header(const BitstreamHeader& h, const CodecModel& m, const CheckpointInfo& info, bool force) {
    const BitstreamHeader want = header_for(m, info.config_hash);
    auto mismatch = [](const std::string& what, const std::string& got, const std::string& exp) {
        throw Error(ErrorKind::compatibility, "bitstream " + what + " " + got + " does not match checkpoint " + exp);
    };
    if (h.sample_rate != want.sample_rate)
        mismatch("sample rate", std::to_string(h.sample_rate), std::to_string(want.sample_rate));
    if (h.hop != want.hop) mismatch("hop", std::to_string(h.hop), std::to_string(want.hop));
    if (h.num_books != want.num_books || h.bits_per_code != want.bits_per_code)
        mismatch("code layout", std::to_string(h.num_books) + "x" + std::to_string(h.bits_per_code),
                 std::to_string(want.num_books) + "x" + std::to_string(want.bits_per_code));
    if (h.variant != want.variant) mismatch("variant", to_string(h.variant), to_string(want.variant));
    if (h.config_hash != want.config_hash && !force)
        throw Error(ErrorKind::compatibility, "bitstream config hash " + hash_hex(h.config_hash) +
                                                  " does not match checkpoint " + hash_hex(want.config_hash) +
                                                  " (pass --force to decode anyway)");
}

int cmd_decode(const CodingArgs& a) {
    Loaded l = load_checkpoint(a.checkpoint);
    const CodecModel& m = *l.model;
    if (a.input == "-") {
        // Frames are decoded as they arrive; output is raw 16-bit PCM when
        // writing to stdout.
        BitstreamReader reader;
        StreamDecoder dec(m);
        Waveform all;
        all.sample_rate = m.sample_rate();
        std::vector<char> buf(4096);
        bool checked = false;
        auto emit = [&](const std::vector<float>& y) {
            if (a.output == "-") {
                std::vector<int16_t> pcm(y.size());
                for (size_t i = 0; i < y.size(); ++i)
                    pcm[i] = int16_t(std::lround(std::clamp(y[i], -1.0f, 1.0f) * 32767.0f));
                std::cout.write(reinterpret_cast<const char*>(pcm.data()), std::streamsize(pcm.size() * 2));
                std::cout.flush();
            } else {
                all.samples.insert(all.samples.end(), y.begin(), y.end());
            }
        };
        while (std::cin.read(buf.data(), std::streamsize(buf.size())) || std::cin.gcount() > 0) {
            reader.feed(reinterpret_cast<const uint8_t*>(buf.data()), size_t(std::cin.gcount()));
            if (reader.has_header() && !checked) {
                check_header(reader.header(), m, l.info, a.force);
                checked = true;
            }
            emit(dec.push(reader.take_frames()));
        }
        reader.finish();
        if (a.output != "-") save_wav(all, a.output);
        return 0;
    }
    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot read " + a.input);
    const Bitstream bs = unpack_frames(read_bytes(in));
    check_header(bs.header, m, l.info, a.force);
    Waveform y;
    y.sample_rate = m.sample_rate();
    if (a.chunk_ms > 0.0) {
        StreamDecoder dec(m);
        const size_t per = size_t(std::max<int64_t>(1, chunk_samples(a.chunk_ms, m.sample_rate()) / m.hop()));
        for (size_t f = 0; f < bs.frames.size(); f += per) {
            std::vector<CodeFrame> chunk(bs.frames.begin() + f, bs.frames.begin() + std::min(bs.frames.size(), f + per));
            auto s = dec.push(chunk);
            y.samples.insert(y.samples.end(), s.begin(), s.end());
        }
    } else {
        y = m.decode(bs.frames);
    }
    if (a.output == "-") {
        std::vector<int16_t> pcm(y.samples.size());
        for (size_t i = 0; i < pcm.size(); ++i)
            pcm[i] = int16_t(std::lround(std::clamp(y.samples[i], -1.0f, 1.0f) * 32767.0f));
        std::cout.write(reinterpret_cast<const char*>(pcm.data()), std::streamsize(pcm.size() * 2));
    } else {
        save_wav(y, a.output);
    }
    return 0;
}

// ---- bench / eval ---------------------------------------------------------

struct BenchArgs {
    std::vector<std::string> checkpoints;
    std::string corpus;
    std::vector<double> windows{12.5, 25.0, 50.0, 100.0};
    int max_utterances = 55;
    int warmup = 5;
    std::string json;
};

int cmd_bench(const BenchArgs& a) {
    std::vector<Loaded> models;
    std::vector<BenchSubject> subjects;
    for (const auto& p : a.checkpoints) models.push_back(load_checkpoint(p));
    for (size_t i = 0; i < models.size(); ++i) {
        std::string name = "decoder:" + to_string(models[i].model->spec().decoder.variant);
        for (const auto& s : subjects)
            if (s.name == name) name += "@" + fs::path(a.checkpoints[i]).stem().string();
        subjects.push_back({name, models[i].model.get()});
    }
    const Corpus data = Corpus::load(a.corpus, models[0].model->sample_rate(), size_t(a.max_utterances));
    std::vector<Waveform> utts;
    for (const auto& u : data.utterances()) utts.push_back(u.wave);
    BenchOptions opt;
    opt.windows_ms = a.windows;
    opt.warmup = a.warmup;
    const BenchReport rep = bench_latency(subjects, utts, opt);
    std::cout << format_bench(rep);
    nlohmann::json j = to_json(rep);
    j["checkpoints"] = a.checkpoints;
    j["config_hash"] = hash_hex(models[0].info.config_hash);
    if (!a.json.empty()) write_text(a.json, j.dump(2) + "\n");
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string corpus;
    std::string json;
    int max_utterances = 0;
};

int cmd_eval(const EvalArgs& a) {
    // "identity" scores the corpus against itself.
    const bool identity = a.checkpoint == "identity";
    Loaded l;
    if (!identity) l = load_checkpoint(a.checkpoint);
    const auto paths = list_wavs(a.corpus);
    if (paths.empty()) throw Error(ErrorKind::prerequisite, "no WAV files under " + a.corpus);
    std::vector<UtteranceMetrics> rows;
    size_t n = 0;
    for (const auto& p : paths) {
        if (a.max_utterances > 0 && n++ >= size_t(a.max_utterances)) break;
        const Waveform ref = identity ? load_wav(p) : load_wav(p, l.model->sample_rate());
        const Waveform test = identity ? ref : l.model->reconstruct(ref);
        rows.push_back(evaluate_pair(p.stem().string(), ref, test));
    }
    MetricReport r = summarize(std::move(rows));
    r.checkpoint = a.checkpoint;
    r.config_hash = identity ? 0 : l.info.config_hash;
    std::cout << format_report(r);
    if (!a.json.empty()) write_text(a.json, to_json(r).dump(2) + "\n");
    return 0;
}

// ---- extract-codes / synth-corpus / inspect -------------------------------

int cmd_extract(const std::string& ckpt, const std::string& corpus, const std::string& out, int max_utts) {
    Loaded l = load_checkpoint(ckpt);
    const Corpus data = Corpus::load(corpus, l.model->sample_rate(), size_t(max_utts));
    const CodeDataset d = extract_normalized_codes(*l.model, data);
    save_code_dataset(out, d, l.info.config_hash);
    std::printf("%zu utterances, code_dim %zu -> %s\n", d.names.size(), d.stats.mean.size(), out.c_str());
    return 0;
}

int cmd_inspect(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::prerequisite, "cannot read " + path);
    const auto bytes = read_bytes(in);
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "ADC1")) {
        const Bitstream bs = unpack_frames(bytes);
        const auto& h = bs.header;
        std::printf("bitstream v%u: %u Hz, hop %u, %u books x %u bits, variant %s, config %s\n", h.version,
                    h.sample_rate, h.hop, h.num_books, h.bits_per_code, to_string(h.variant).c_str(),
                    hash_hex(h.config_hash).c_str());
        std::printf("%zu frames, %.3f s, %llu bps\n", bs.frames.size(), double(bs.frames.size()) * h.hop / h.sample_rate,
                    static_cast<unsigned long long>(bitrate(h)));
        return 0;
    }
    const Container c = parse_container(bytes, path);
    nlohmann::json meta = c.meta;
    meta.erase("config");
    std::cout << meta.dump(2) << "\n";
    for (const auto& line : c.manifest()) std::cout << line << "\n";
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Streamable neural audio codec: training, coding, benchmarking and evaluation"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a codec or vocoder from a config file");
    train->add_option("config", ta.config, "Experiment config (YAML or JSON)")->required();
    train->add_option("--stage", ta.stage, "1, 2, vocoder or all")->capture_default_str();
    train->add_option("--codec", ta.codec, "Codec checkpoint for vocoder mode (default <output>/stage2.ckpt)");
    train->add_option("--iterations", ta.iterations, "Override the configured iteration count");
    train->add_flag("--fresh", ta.fresh, "Ignore saved training state and start over");
    train->add_flag("--force", ta.force, "Accept a stage-1 checkpoint from a different config");

    CodingArgs ea;
    auto* encode = app.add_subcommand("encode", "Encode a WAV file to a bitstream");
    encode->add_option("checkpoint", ea.checkpoint)->required();
    encode->add_option("input", ea.input, "WAV file, or - for raw 16-bit PCM on stdin")->required();
    encode->add_option("output", ea.output, "Bitstream file, or - for stdout")->required();
    encode->add_option("--chunk-ms", ea.chunk_ms, "Encode through the streaming path with this chunk size");
    encode->add_flag("--resample", ea.resample, "Resample input to the model rate");

    CodingArgs da;
    auto* decode = app.add_subcommand("decode", "Decode a bitstream to a WAV file");
    decode->add_option("checkpoint", da.checkpoint)->required();
    decode->add_option("input", da.input, "Bitstream file, or - for stdin")->required();
    decode->add_option("output", da.output, "WAV file, or - for raw 16-bit PCM on stdout")->required();
    decode->add_option("--chunk-ms", da.chunk_ms, "Decode through the streaming path with this chunk size");
    decode->add_flag("--force", da.force, "Decode even if the config hash differs");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Per-window streaming latency of encoder and decoders");
    bench->add_option("--ckpt", ba.checkpoints, "Codec checkpoint; repeat to compare decoders")->required()->allow_extra_args(false);
    bench->add_option("corpus", ba.corpus, "Directory of WAV files")->required();
    bench->add_option("--windows", ba.windows, "Window lengths in ms")->delimiter(',')->capture_default_str();
    bench->add_option("--max-utterances", ba.max_utterances)->capture_default_str();
    bench->add_option("--warmup", ba.warmup)->capture_default_str();
    bench->add_option("--json", ba.json, "Also write the report as JSON");

    EvalArgs va;
    auto* eval = app.add_subcommand("eval", "Objective metrics of codec reconstructions");
    eval->add_option("checkpoint", va.checkpoint, "Codec checkpoint, or 'identity'")->required();
    eval->add_option("corpus", va.corpus, "Directory of reference WAV files")->required();
    eval->add_option("--json", va.json, "Also write the report as JSON");
    eval->add_option("--max-utterances", va.max_utterances);

    std::string xc_ckpt, xc_corpus, xc_out;
    int xc_max = 0;
    auto* extract = app.add_subcommand("extract-codes", "Quantized latents and normalization statistics of a corpus");
    extract->add_option("checkpoint", xc_ckpt)->required();
    extract->add_option("corpus", xc_corpus)->required();
    extract->add_option("output", xc_out)->required();
    extract->add_option("--max-utterances", xc_max);

    std::string sc_dir;
    int sc_count = 40, sc_rate = 24000;
    double sc_seconds = 15.0;
    uint64_t sc_seed = 1;
    auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic speech-like corpus");
    synth->add_option("dir", sc_dir)->required();
    synth->add_option("--count", sc_count)->capture_default_str();
    synth->add_option("--seconds", sc_seconds)->capture_default_str();
    synth->add_option("--rate", sc_rate)->capture_default_str();
    synth->add_option("--seed", sc_seed)->capture_default_str();

    std::string in_path;
    auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint, code dataset or bitstream");
    inspect->add_option("file", in_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*encode) return cmd_encode(ea);
        if (*decode) return cmd_decode(da);
        if (*bench) return cmd_bench(ba);
        if (*eval) return cmd_eval(va);
        if (*extract) return cmd_extract(xc_ckpt, xc_corpus, xc_out, xc_max);
        if (*synth) {
            const auto paths = write_synthetic_corpus(sc_dir, sc_count, sc_seconds, sc_rate, sc_seed);
            std::printf("wrote %zu files to %s\n", paths.size(), sc_dir.c_str());
            return 0;
        }
        if (*inspect) return cmd_inspect(in_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace ncodec::cli
