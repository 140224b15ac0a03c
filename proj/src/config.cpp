#include "ncodec/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "ncodec/container.hpp"
#include "ncodec/error.hpp"

namespace ncodec {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error(ErrorKind::config, path_ + ": expected a mapping");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::config, path_ + "." + key + ": " + e.what());
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string child(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw Error(ErrorKind::config, "unknown key '" + path_ + "." + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json activation_json(const Activation& a) { return {{"kind", to_string(a)}, {"param", a.param}}; }

Activation activation_from(const json& j, const std::string& path, Activation a) {
    Fields f(j, path);
    std::string kind = to_string(a);
    float param = a.param;
    f.get("kind", kind);
    f.get("param", param);
    f.finish();
    return parse_activation(kind, param);
}

json encoder_json(const EncoderConfig& e) {
    return {{"downsample_factors", e.downsample_factors},
            {"base_channels", e.base_channels},
            {"max_channels", e.max_channels},
            {"code_dim", e.code_dim},
            {"num_blocks_per_stage", e.num_blocks_per_stage},
            {"kernel_size", e.kernel_size},
            {"dilations", e.dilations},
            {"activation", activation_json(e.activation)}};
}

EncoderConfig encoder_from(const json& j, const std::string& path, EncoderConfig e) {
    Fields f(j, path);
    f.get("downsample_factors", e.downsample_factors);
    f.get("base_channels", e.base_channels);
    f.get("max_channels", e.max_channels);
    f.get("code_dim", e.code_dim);
    f.get("num_blocks_per_stage", e.num_blocks_per_stage);
    f.get("kernel_size", e.kernel_size);
    f.get("dilations", e.dilations);
    if (auto a = f.sub("activation")) e.activation = activation_from(*a, f.child("activation"), e.activation);
    f.finish();
    return e;
}

json generator_json(const GeneratorConfig& g) {
    return {{"variant", to_string(g.variant)},
            {"upsample_initial_channels", g.upsample_initial_channels},
            {"min_channels", g.min_channels},
            {"branch_kernels", g.branch_kernels},
            {"group_kernel", g.group_kernel},
            {"num_groups", g.num_groups},
            {"mrf_dilations", g.mrf_dilations},
            {"kernel_size", g.kernel_size},
            {"activation", activation_json(g.activation)}};
}

GeneratorConfig generator_from(const json& j, const std::string& path, GeneratorConfig g) {
    Fields f(j, path);
    std::string variant = to_string(g.variant);
    f.get("variant", variant);
    g.variant = parse_variant(variant);
    f.get("upsample_initial_channels", g.upsample_initial_channels);
    f.get("min_channels", g.min_channels);
    f.get("branch_kernels", g.branch_kernels);
    f.get("group_kernel", g.group_kernel);
    f.get("num_groups", g.num_groups);
    f.get("mrf_dilations", g.mrf_dilations);
    f.get("kernel_size", g.kernel_size);
    if (auto a = f.sub("activation")) g.activation = activation_from(*a, f.child("activation"), g.activation);
    f.finish();
    return g;
}

json quantizer_json(const QuantizerConfig& q) {
    return {{"num_books", q.num_books},
            {"book_size", q.book_size},
            {"decay", q.decay},
            {"epsilon", q.epsilon},
            {"dead_threshold", q.dead_threshold},
            {"reseed_interval", q.reseed_interval},
            {"kmeans_iters", q.kmeans_iters}};
}

QuantizerConfig quantizer_from(const json& j, const std::string& path, QuantizerConfig q) {
    Fields f(j, path);
    f.get("num_books", q.num_books);
    f.get("book_size", q.book_size);
    f.get("decay", q.decay);
    f.get("epsilon", q.epsilon);
    f.get("dead_threshold", q.dead_threshold);
    f.get("reseed_interval", q.reseed_interval);
    f.get("kmeans_iters", q.kmeans_iters);
    f.finish();
    return q;
}

json mel_json(const MelConfig& m) {
    return {{"fft_size", m.fft_size},     {"hop_length", m.hop_length}, {"win_length", m.win_length},
            {"num_mels", m.num_mels},     {"fmin", m.fmin},             {"fmax", m.fmax},
            {"log_floor", m.log_floor}};
}

MelConfig mel_from(const json& j, const std::string& path, MelConfig m) {
    Fields f(j, path);
    f.get("fft_size", m.fft_size);
    f.get("hop_length", m.hop_length);
    f.get("win_length", m.win_length);
    f.get("num_mels", m.num_mels);
    f.get("fmin", m.fmin);
    f.get("fmax", m.fmax);
    f.get("log_floor", m.log_floor);
    f.finish();
    return m;
}

json init_json(const InitConfig& i) { return {{"scheme", i.scheme}, {"std", i.std}, {"gain", i.gain}}; }

InitConfig init_from(const json& j, const std::string& path, InitConfig i) {
    Fields f(j, path);
    f.get("scheme", i.scheme);
    f.get("std", i.std);
    f.get("gain", i.gain);
    f.finish();
    return i;
}

json discriminator_json(const DiscriminatorConfig& d) {
    json layers = json::array();
    for (const auto& l : d.msd_layers) layers.push_back({l.channels, l.kernel, l.stride, l.groups});
    return {{"kinds", d.kinds},
            {"periods", d.periods},
            {"mpd_channels", d.mpd_channels},
            {"mpd_kernel", d.mpd_kernel},
            {"mpd_stride", d.mpd_stride},
            {"msd_scales", d.msd_scales},
            {"msd_layers", layers},
            {"spectral_first_scale", d.spectral_first_scale},
            {"stft_fft", d.stft_fft},
            {"stft_hop", d.stft_hop},
            {"stft_channels", d.stft_channels},
            {"slope", d.slope}};
}

DiscriminatorConfig discriminator_from(const json& j, const std::string& path, DiscriminatorConfig d) {
    Fields f(j, path);
    f.get("kinds", d.kinds);
    f.get("periods", d.periods);
    f.get("mpd_channels", d.mpd_channels);
    f.get("mpd_kernel", d.mpd_kernel);
    f.get("mpd_stride", d.mpd_stride);
    f.get("msd_scales", d.msd_scales);
    if (auto layers = f.sub("msd_layers")) {
        if (!layers->is_array()) throw Error(ErrorKind::config, f.child("msd_layers") + ": expected a list");
        d.msd_layers.clear();
        for (const auto& l : *layers) {
            if (!l.is_array() || l.size() != 4)
                throw Error(ErrorKind::config, f.child("msd_layers") + ": each layer is [channels, kernel, stride, groups]");
            d.msd_layers.push_back({l[0].get<int>(), l[1].get<int>(), l[2].get<int>(), l[3].get<int>()});
        }
    }
    f.get("spectral_first_scale", d.spectral_first_scale);
    f.get("stft_fft", d.stft_fft);
    f.get("stft_hop", d.stft_hop);
    f.get("stft_channels", d.stft_channels);
    f.get("slope", d.slope);
    f.finish();
    return d;
}

json yaml_node_to_json(const YAML::Node& n) {
    switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Sequence: {
        json a = json::array();
        for (const auto& e : n) a.push_back(yaml_node_to_json(e));
        return a;
    }
    case YAML::NodeType::Map: {
        json o = json::object();
        for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
        return o;
    }
    case YAML::NodeType::Scalar: break;
    }
    const std::string s = n.Scalar();
    if (n.Tag() == "!") return s;  // quoted scalar
    int64_t iv;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), iv);
    if (ec == std::errc() && p == s.data() + s.size() && !s.empty()) return iv;
    if (!s.empty()) {
        char* end = nullptr;
        const double dv = std::strtod(s.c_str(), &end);
        if (end == s.c_str() + s.size()) return dv;
    }
    if (s == "true" || s == "True" || s == "yes") return true;
    if (s == "false" || s == "False" || s == "no") return false;
    if (s == "null" || s == "~") return nullptr;
    return s;
}

}  // namespace

std::string to_string(TrainMode m) {
    switch (m) {
    case TrainMode::symAD: return "symAD";
    case TrainMode::symAD_star: return "symAD_star";
    case TrainMode::asymAD: return "asymAD";
    case TrainMode::vocoder: return "vocoder";
    case TrainMode::soundstream_baseline: return "soundstream_baseline";
    }
    return "symAD";
}

TrainMode parse_mode(const std::string& s) {
    if (s == "symAD") return TrainMode::symAD;
    if (s == "symAD_star") return TrainMode::symAD_star;
    if (s == "asymAD") return TrainMode::asymAD;
    if (s == "vocoder") return TrainMode::vocoder;
    if (s == "soundstream_baseline") return TrainMode::soundstream_baseline;
    throw Error(ErrorKind::config, "unknown mode '" + s +
                                       "' (expected symAD, symAD_star, asymAD, vocoder or soundstream_baseline)");
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::config, m); };
    if (schema_version != kSchemaVersion)
        fail("unsupported schema_version " + std::to_string(schema_version) + " (expected " +
             std::to_string(kSchemaVersion) + ")");
    if (sample_rate <= 0) fail("sample_rate must be positive");
    encoder.validate();
    decoder.validate();
    vocoder.validate();
    quantizer.validate();
    mel.validate(sample_rate);
    discriminator.validate();
    losses.validate();
    const bool sym_modes = mode == TrainMode::symAD || mode == TrainMode::symAD_star;
    if (sym_modes && decoder.variant != VariantId::sym)
        fail("mode " + to_string(mode) + " requires decoder.variant sym");
    if (mode == TrainMode::asymAD && decoder.variant == VariantId::sym)
        fail("mode asymAD requires a HiFi-GAN decoder variant (v0, v1 or v2)");
    if (mode == TrainMode::vocoder && vocoder.variant == VariantId::sym)
        fail("mode vocoder requires vocoder.variant v0, v1 or v2");
    const auto& s = schedule;
    if (s.stage1_iters < 0 || s.stage2_iters < 0 || s.vocoder_iters < 0) fail("iteration counts must be >= 0");
    if (s.batch_size < 1) fail("batch_size must be >= 1");
    if (s.segment_length < encoder.hop() || s.segment_length % encoder.hop())
        fail("segment_length must be a positive multiple of the hop (" + std::to_string(encoder.hop()) + ")");
    if (s.log_every < 1 || s.checkpoint_every < 0) fail("log_every must be >= 1 and checkpoint_every >= 0");
    const auto& o = optimizer;
    if (!(o.lr_g > 0 && o.lr_d > 0)) fail("learning rates must be positive");
    if (!(o.beta1 >= 0 && o.beta1 < 1 && o.beta2 >= 0 && o.beta2 < 1)) fail("Adam betas must lie in [0, 1)");
    if (!(o.decay_gamma > 0 && o.decay_gamma <= 1)) fail("decay_gamma must lie in (0, 1]");
    if (o.decay_every < 0 || o.grad_clip < 0) fail("decay_every and grad_clip must be >= 0");
    if (init.scheme != "normal" && init.scheme != "fan_in") fail("init.scheme must be normal or fan_in");
}

CodecSpec ExperimentConfig::codec_spec() const {
    CodecSpec s;
    s.sample_rate = sample_rate;
    s.encoder = encoder;
    s.quantizer = quantizer;
    s.decoder = decoder;
    s.init = init;
    return s;
}

CodecSpec ExperimentConfig::vocoder_spec() const {
    CodecSpec s = codec_spec();
    s.decoder = vocoder;
    s.normalized_input = true;
    return s;
}

json to_json(const ExperimentConfig& c) {
    return {{"schema_version", c.schema_version},
            {"name", c.name},
            {"seed", c.seed},
            {"mode", to_string(c.mode)},
            {"sample_rate", c.sample_rate},
            {"encoder", encoder_json(c.encoder)},
            {"decoder", generator_json(c.decoder)},
            {"vocoder", generator_json(c.vocoder)},
            {"quantizer", quantizer_json(c.quantizer)},
            {"mel", mel_json(c.mel)},
            {"discriminator", discriminator_json(c.discriminator)},
            {"losses",
             {{"lambda_fm", c.losses.lambda_fm},
              {"lambda_mel", c.losses.lambda_mel},
              {"lambda_vq", c.losses.lambda_vq},
              {"gan", to_string(c.gan)}}},
            {"optimizer",
             {{"lr_g", c.optimizer.lr_g},
              {"lr_d", c.optimizer.lr_d},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"eps", c.optimizer.eps},
              {"decay_gamma", c.optimizer.decay_gamma},
              {"decay_every", c.optimizer.decay_every},
              {"grad_clip", c.optimizer.grad_clip}}},
            {"schedule",
             {{"stage1_iters", c.schedule.stage1_iters},
              {"stage2_iters", c.schedule.stage2_iters},
              {"vocoder_iters", c.schedule.vocoder_iters},
              {"batch_size", c.schedule.batch_size},
              {"segment_length", c.schedule.segment_length},
              {"log_every", c.schedule.log_every},
              {"checkpoint_every", c.schedule.checkpoint_every}}},
            {"init", init_json(c.init)},
            {"data",
             {{"train_dir", c.data.train_dir},
              {"valid_dir", c.data.valid_dir},
              {"max_utterances", c.data.max_utterances}}},
            {"output_dir", c.output_dir}};
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Fields f(j, "config");
    f.get("schema_version", c.schema_version);
    if (c.schema_version != kSchemaVersion)
        throw Error(ErrorKind::config, "unsupported schema_version " + std::to_string(c.schema_version));
    f.get("name", c.name);
    f.get("seed", c.seed);
    std::string mode = to_string(c.mode);
    f.get("mode", mode);
    c.mode = parse_mode(mode);
    f.get("sample_rate", c.sample_rate);
    if (c.sample_rate <= 0) throw Error(ErrorKind::config, "sample_rate must be positive");
    c.mel = default_mel_config(c.sample_rate);
    if (auto e = f.sub("encoder")) c.encoder = encoder_from(*e, "config.encoder", c.encoder);
    if (c.mode == TrainMode::asymAD) c.decoder.variant = VariantId::v0;
    if (auto d = f.sub("decoder")) c.decoder = generator_from(*d, "config.decoder", c.decoder);
    c.vocoder.variant = VariantId::v2;
    if (auto v = f.sub("vocoder")) c.vocoder = generator_from(*v, "config.vocoder", c.vocoder);
    if (auto q = f.sub("quantizer")) c.quantizer = quantizer_from(*q, "config.quantizer", c.quantizer);
    if (auto m = f.sub("mel")) c.mel = mel_from(*m, "config.mel", c.mel);
    if (c.mode == TrainMode::soundstream_baseline) c.discriminator.kinds = {"msd", "stftd"};
    if (auto d = f.sub("discriminator")) c.discriminator = discriminator_from(*d, "config.discriminator", c.discriminator);
    c.gan = c.mode == TrainMode::soundstream_baseline ? GanFlavor::hinge : GanFlavor::least_squares;
    if (auto l = f.sub("losses")) {
        Fields lf(*l, "config.losses");
        lf.get("lambda_fm", c.losses.lambda_fm);
        lf.get("lambda_mel", c.losses.lambda_mel);
        lf.get("lambda_vq", c.losses.lambda_vq);
        std::string gan = to_string(c.gan);
        lf.get("gan", gan);
        c.gan = parse_gan_flavor(gan);
        lf.finish();
    }
    if (auto o = f.sub("optimizer")) {
        Fields of(*o, "config.optimizer");
        of.get("lr_g", c.optimizer.lr_g);
        of.get("lr_d", c.optimizer.lr_d);
        of.get("beta1", c.optimizer.beta1);
        of.get("beta2", c.optimizer.beta2);
        of.get("eps", c.optimizer.eps);
        of.get("decay_gamma", c.optimizer.decay_gamma);
        of.get("decay_every", c.optimizer.decay_every);
        of.get("grad_clip", c.optimizer.grad_clip);
        of.finish();
    }
    if (auto s = f.sub("schedule")) {
        Fields sf(*s, "config.schedule");
        sf.get("stage1_iters", c.schedule.stage1_iters);
        sf.get("stage2_iters", c.schedule.stage2_iters);
        sf.get("vocoder_iters", c.schedule.vocoder_iters);
        sf.get("batch_size", c.schedule.batch_size);
        sf.get("segment_length", c.schedule.segment_length);
        sf.get("log_every", c.schedule.log_every);
        sf.get("checkpoint_every", c.schedule.checkpoint_every);
        sf.finish();
    }
    if (auto i = f.sub("init")) c.init = init_from(*i, "config.init", c.init);
    if (auto d = f.sub("data")) {
        Fields df(*d, "config.data");
        df.get("train_dir", c.data.train_dir);
        df.get("valid_dir", c.data.valid_dir);
        df.get("max_utterances", c.data.max_utterances);
        df.finish();
    }
    f.get("output_dir", c.output_dir);
    f.finish();
    c.validate();
    return c;
}

json to_json(const CodecSpec& s) {
    return {{"sample_rate", s.sample_rate},
            {"encoder", encoder_json(s.encoder)},
            {"quantizer", quantizer_json(s.quantizer)},
            {"decoder", generator_json(s.decoder)},
            {"normalized_input", s.normalized_input},
            {"init", init_json(s.init)}};
}

CodecSpec codec_spec_from_json(const json& j) {
    CodecSpec s;
    Fields f(j, "model");
    f.get("sample_rate", s.sample_rate);
    if (auto e = f.sub("encoder")) s.encoder = encoder_from(*e, "model.encoder", s.encoder);
    if (auto q = f.sub("quantizer")) s.quantizer = quantizer_from(*q, "model.quantizer", s.quantizer);
    if (auto d = f.sub("decoder")) s.decoder = generator_from(*d, "model.decoder", s.decoder);
    f.get("normalized_input", s.normalized_input);
    if (auto i = f.sub("init")) s.init = init_from(*i, "model.init", s.init);
    f.finish();
    s.validate();
    return s;
}

json yaml_to_json(const std::string& text) {
    try {
        return yaml_node_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw Error(ErrorKind::config, std::string("config parse error: ") + e.what());
    }
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(yaml_to_json(ss.str()));
}

uint64_t config_hash(const ExperimentConfig& c) {
    const std::string s = to_json(c).dump();
    return fnv1a64(s.data(), s.size());
}

fs::path resolve_output_dir(const ExperimentConfig& c) {
    fs::path out(c.output_dir);
    if (out.is_relative())
        if (const char* root = std::getenv("NCODEC_OUTPUT_ROOT"); root && *root) return fs::path(root) / out;
    return out;
}

}  // namespace ncodec
