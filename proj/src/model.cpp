#include "ncodec/model.hpp"

#include <cstdio>

#include "ncodec/config.hpp"
#include "ncodec/error.hpp"

namespace ncodec {

namespace {

bool matches(const std::string& name, const std::vector<std::string>& prefixes) {
    if (prefixes.empty()) return true;
    for (const auto& p : prefixes)
        if (name.compare(0, p.size(), p) == 0) return true;
    return false;
}

}  // namespace

void CodecSpec::validate() const {
    if (sample_rate <= 0) throw Error(ErrorKind::config, "sample_rate must be positive");
    encoder.validate();
    quantizer.validate();
    decoder.validate();
}

CodecModel::CodecModel(const CodecSpec& spec, uint64_t seed) : spec_(spec) {
    spec_.validate();
    Initializer init(seed, spec_.init);
    encoder_ = Encoder(params_, "enc", spec_.encoder, init);
    ConvSpec proj;
    proj.in_ch = encoder_.out_channels();
    proj.out_ch = spec_.encoder.code_dim;
    proj.kernel = 1;
    projector_ = Conv1d(params_, "proj", proj, init);
    decoder_ = make_generator(params_, "dec", spec_.encoder.code_dim, spec_.encoder, spec_.decoder, init);
    codebook_ = ResidualCodebook(spec_.quantizer.num_books, spec_.quantizer.book_size, spec_.encoder.code_dim,
                                 spec_.quantizer.decay, spec_.quantizer.epsilon);
}

ag::Var CodecModel::latents(const ag::Var& wave, StreamContext* ctx) const {
    return projector_(encoder_.forward(wave, ctx), ctx);
}

ag::Var CodecModel::synthesize(const ag::Var& quantized, StreamContext* ctx) const {
    if (!spec_.normalized_input) return decoder_->forward(quantized, ctx);
    if (norm_.empty()) throw Error(ErrorKind::state, "model decodes normalized codes but has no statistics");
    Tensor z = quantized->value;
    normalize_tensor(z, norm_);
    return decoder_->forward(ag::constant(std::move(z)), ctx);
}

LatentSequence CodecModel::encode(const Waveform& wave) const {
    if (wave.sample_rate != spec_.sample_rate)
        throw Error(ErrorKind::compatibility, "waveform rate " + std::to_string(wave.sample_rate) +
                                                  " does not match model rate " + std::to_string(spec_.sample_rate));
    if (wave.length() < 1) throw Error(ErrorKind::shape, "cannot encode an empty waveform");
    const int64_t h = hop();
    const int64_t padded = (wave.length() + h - 1) / h * h;
    Tensor x({1, 1, padded});
    std::copy(wave.samples.begin(), wave.samples.end(), x.data());
    ag::NoGradGuard ng;
    ag::Var z = latents(ag::constant(std::move(x)));
    return LatentSequence::from_tensor(z->value, 0, frame_rate());
}

std::vector<CodeFrame> CodecModel::encode_codes(const Waveform& wave) const {
    return rvq_quantize(encode(wave), codebook_).codes;
}

Waveform CodecModel::decode(const std::vector<CodeFrame>& codes) const {
    Waveform out;
    out.sample_rate = spec_.sample_rate;
    if (codes.empty()) return out;
    ag::NoGradGuard ng;
    const LatentSequence q = rvq_dequantize(codes, codebook_, frame_rate());
    ag::Var y = synthesize(ag::constant(q.to_tensor()));
    out.samples = y->value.storage();
    return out;
}

Waveform CodecModel::reconstruct(const Waveform& wave) const {
    Waveform y = decode(encode_codes(wave));
    y.samples.resize(wave.samples.size());
    return y;
}

void CodecModel::save_state(Container& c) const {
    for (const auto& [name, v] : params_.entries()) c.add(name, v->value);
    const int64_t nb = codebook_.num_books(), K = codebook_.book_size(), D = codebook_.dim();
    c.add("vq.entries", {nb, K, D}, codebook_.entries());
    c.add("vq.counts", {nb, K}, codebook_.counts());
    c.add("vq.sums", {nb, K, D}, codebook_.sums());
    c.meta["codebook"] = {{"frozen", codebook_.frozen()}, {"initialized", codebook_.initialized()}};
    if (!norm_.empty()) {
        c.add("norm.mean", {D}, norm_.mean);
        c.add("norm.std", {D}, norm_.std);
    }
}

void CodecModel::load_state(const Container& c, const std::vector<std::string>& prefixes) {
    for (const auto& [name, v] : params_.entries()) {
        if (!matches(name, prefixes)) continue;
        const auto& a = c.require(name);
        if (a.dtype != DType::f32 || a.shape != v->value.shape())
            throw Error(ErrorKind::compatibility, "array '" + name + "' has shape " + shape_str(a.shape) +
                                                      ", model expects " + shape_str(v->value.shape()));
        v->value = Tensor(a.shape, a.f32);
    }
    if (matches("vq.", prefixes)) {
        const auto& e = c.require("vq.entries");
        const auto& n = c.require("vq.counts");
        const auto& s = c.require("vq.sums");
        if (e.f64.size() != codebook_.entries().size() || n.f64.size() != codebook_.counts().size() ||
            s.f64.size() != codebook_.sums().size())
            throw Error(ErrorKind::compatibility, "codebook arrays do not match the model's quantizer");
        ResidualCodebook cb(codebook_.num_books(), codebook_.book_size(), codebook_.dim(), codebook_.decay(),
                            codebook_.epsilon());
        cb.entries() = e.f64;
        cb.counts() = n.f64;
        cb.sums() = s.f64;
        const auto& meta = c.meta.value("codebook", nlohmann::json::object());
        cb.set_initialized(meta.value("initialized", true));
        if (meta.value("frozen", false)) cb.freeze();
        codebook_ = std::move(cb);
    }
    if (matches("norm.", prefixes)) {
        const NamedArray* m = c.find("norm.mean");
        const NamedArray* s = c.find("norm.std");
        if (m && s) {
            norm_.mean = m->f64;
            norm_.std = s->f64;
        }
    }
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t parse_hash_hex(const std::string& s) {
    try {
        size_t pos = 0;
        const uint64_t v = std::stoull(s, &pos, 16);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::corrupt, "malformed config hash '" + s + "'");
    }
}

Container codec_container(const CodecModel& model, const CheckpointInfo& info) {
    Container c;
    c.meta["format"] = "ncodec";
    c.meta["kind"] = info.kind.empty() ? "codec" : info.kind;
    c.meta["stage"] = info.stage;
    c.meta["mode"] = info.mode;
    c.meta["iteration"] = info.iteration;
    c.meta["config_hash"] = hash_hex(info.config_hash);
    c.meta["config"] = info.config;
    c.meta["model"] = to_json(model.spec());
    model.save_state(c);
    return c;
}

void save_codec(const std::filesystem::path& path, const CodecModel& model, const CheckpointInfo& info) {
    write_container(path, codec_container(model, info));
}

std::unique_ptr<CodecModel> codec_from_container(const Container& c, CheckpointInfo* info) {
    if (c.meta.value("format", "") != "ncodec" || !c.meta.contains("model"))
        throw Error(ErrorKind::compatibility, "container is not a codec checkpoint");
    auto model = std::make_unique<CodecModel>(codec_spec_from_json(c.meta.at("model")), 0);
    model->load_state(c);
    if (info) {
        info->kind = c.meta.value("kind", "");
        info->stage = c.meta.value("stage", "");
        info->mode = c.meta.value("mode", "");
        info->iteration = c.meta.value("iteration", int64_t(0));
        info->config_hash = parse_hash_hex(c.meta.value("config_hash", "0"));
        info->config = c.meta.value("config", nlohmann::json::object());
    }
    return model;
}

std::unique_ptr<CodecModel> load_codec(const std::filesystem::path& path, CheckpointInfo* info) {
    return codec_from_container(read_container(path), info);
}

}  // namespace ncodec
