#include "ncodec/nn.hpp"

#include <cmath>

#include "ncodec/error.hpp"

namespace ncodec {

ag::Var Activation::operator()(const ag::Var& x) const {
    switch (kind) {
    case ActKind::leaky_relu: return ag::leaky_relu(x, param);
    case ActKind::elu: return ag::elu(x, param);
    case ActKind::relu: return ag::relu(x);
    case ActKind::identity: return x;
    }
    return x;
}

std::string to_string(const Activation& a) {
    switch (a.kind) {
    case ActKind::leaky_relu: return "leaky_relu";
    case ActKind::elu: return "elu";
    case ActKind::relu: return "relu";
    case ActKind::identity: return "identity";
    }
    return "identity";
}

Activation parse_activation(const std::string& name, float param) {
    if (name == "leaky_relu") return {ActKind::leaky_relu, param};
    if (name == "elu") return {ActKind::elu, param};
    if (name == "relu") return {ActKind::relu, param};
    if (name == "identity") return {ActKind::identity, param};
    throw Error(ErrorKind::config, "unknown activation '" + name + "'");
}

ag::Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (contains(name)) throw Error(ErrorKind::state, "duplicate parameter name " + name);
    ag::Var v = trainable ? ag::parameter(std::move(init)) : ag::constant(std::move(init));
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    is_trainable_[name] = trainable;
    return v;
}

ag::Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::compatibility, "no parameter named " + name);
    return entries_[it->second].second;
}

std::vector<std::pair<std::string, ag::Var>> ParamStore::with_prefix(const std::string& prefix) const {
    std::vector<std::pair<std::string, ag::Var>> out;
    for (const auto& e : entries_)
        if (e.first.compare(0, prefix.size(), prefix) == 0) out.push_back(e);
    return out;
}

std::vector<std::pair<std::string, ag::Var>> ParamStore::trainable(const std::string& prefix) const {
    std::vector<std::pair<std::string, ag::Var>> out;
    for (const auto& e : with_prefix(prefix))
        if (e.second->requires_grad) out.push_back(e);
    return out;
}

void ParamStore::set_trainable(const std::string& prefix, bool on) {
    for (auto& e : entries_)
        if (e.first.compare(0, prefix.size(), prefix) == 0 && is_trainable_.at(e.first)) {
            e.second->requires_grad = on;
            if (!on) e.second->grad = Tensor();
        }
}

void ParamStore::zero_grad() {
    for (auto& e : entries_)
        if (e.second->requires_grad) e.second->ensure_grad().fill(0.0f);
}

int64_t ParamStore::count(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& e : with_prefix(prefix)) n += e.second->value.numel();
    return n;
}

uint64_t ParamStore::digest(const std::string& prefix) const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& e : with_prefix(prefix)) {
        mix(e.first.data(), e.first.size());
        mix(e.second->value.data(), e.second->value.numel() * sizeof(float));
    }
    return h;
}

Tensor Initializer::weight(Shape shape, int64_t fan_in) {
    double sd = cfg_.std;
    if (cfg_.scheme == "fan_in")
        sd = cfg_.gain / std::sqrt(double(std::max<int64_t>(fan_in, 1)));
    else if (cfg_.scheme != "normal")
        throw Error(ErrorKind::config, "unknown init scheme '" + cfg_.scheme + "'");
    std::normal_distribution<double> nd(0.0, sd);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<float>(nd(rng_));
    return t;
}

Tensor& StreamContext::next_slot() {
    if (cursor_ == slots_.size()) slots_.emplace_back();
    return slots_[cursor_++];
}

Conv1d::Conv1d(ParamStore& ps, const std::string& name, const ConvSpec& spec, Initializer& init) : spec_(spec) {
    const auto& s = spec_;
    if (s.in_ch < 1 || s.out_ch < 1 || s.kernel < 1 || s.stride < 1 || s.dilation < 1 || s.groups < 1)
        throw Error(ErrorKind::config, name + ": conv sizes must be positive");
    if (s.in_ch % s.groups || s.out_ch % s.groups)
        throw Error(ErrorKind::config, name + ": channels not divisible by groups");
    if (s.padding == Padding::causal && (s.kernel - 1) * s.dilation < s.stride - 1)
        throw Error(ErrorKind::config, name + ": causal strided conv needs kernel span >= stride");
    const int64_t per = s.in_ch / s.groups;
    Tensor w = init.weight({s.out_ch, per, s.kernel}, per * s.kernel);
    if (s.norm == WeightNorm::weight) {
        Tensor g({s.out_ch});
        for (int64_t o = 0; o < s.out_ch; ++o) {
            double n = 0.0;
            for (int64_t j = 0; j < per * s.kernel; ++j) n += double(w[o * per * s.kernel + j]) * w[o * per * s.kernel + j];
            g[o] = static_cast<float>(std::sqrt(n));
        }
        w_ = ps.add(name + ".v", std::move(w));
        g_ = ps.add(name + ".g", std::move(g));
    } else if (s.norm == WeightNorm::spectral) {
        w_ = ps.add(name + ".v", std::move(w));
        Tensor u({s.out_ch});
        std::normal_distribution<float> nd(0.0f, 1.0f);
        for (auto& v : u.values()) v = nd(init.rng());
        u_ = ps.add(name + ".u", std::move(u), false);
    } else {
        w_ = ps.add(name + ".w", std::move(w));
    }
    if (s.bias) b_ = ps.add(name + ".b", Tensor({s.out_ch}));
}

ag::Var Conv1d::effective_weight() const {
    switch (spec_.norm) {
    case WeightNorm::weight: return ag::weight_norm(w_, g_);
    case WeightNorm::spectral: return ag::spectral_norm(w_, u_->value);
    case WeightNorm::none: break;
    }
    return w_;
}

int64_t Conv1d::history() const {
    if (spec_.padding != Padding::causal) return 0;
    return (spec_.kernel - 1) * spec_.dilation - (spec_.stride - 1);
}

ConvGeometry Conv1d::geometry(int64_t in_len, int64_t history_len) const {
    ConvGeometry g;
    g.stride = spec_.stride;
    g.dilation = spec_.dilation;
    g.groups = spec_.groups;
    if (spec_.padding == Padding::causal) {
        g.offset = history_len + spec_.stride - 1;
        g.out_len = (in_len - history_len) / spec_.stride;
    } else {
        const int64_t span = (spec_.kernel - 1) * spec_.dilation;
        g.offset = span - span / 2;
        g.out_len = (in_len + spec_.stride - 1) / spec_.stride;
    }
    return g;
}

ag::Var Conv1d::forward(const ag::Var& x, StreamContext* ctx) const {
    const auto& xs = x->shape();
    if (xs.size() != 3 || xs[1] != spec_.in_ch)
        throw Error(ErrorKind::shape, "conv expects [B, " + std::to_string(spec_.in_ch) + ", T], got " + shape_str(xs));
    if (!ctx || spec_.padding != Padding::causal) return ag::conv1d(x, effective_weight(), b_, geometry(xs[2], 0));

    const int64_t P = history();
    if (xs[2] % spec_.stride)
        throw Error(ErrorKind::shape, "streaming chunk of " + std::to_string(xs[2]) + " samples is not a multiple of stride " +
                                          std::to_string(spec_.stride));
    Tensor& hist = ctx->next_slot();
    if (hist.rank() != 3 || hist.dim(0) != xs[0]) hist = Tensor({xs[0], spec_.in_ch, P});
    if (xs[2] == 0) return ag::constant(Tensor({xs[0], spec_.out_ch, 0}));
    Tensor ext = P > 0 ? concat_time(hist, x->value) : x->value;
    if (P > 0) hist = slice_time(ext, ext.dim(2) - P, P);
    return ag::conv1d(ag::constant(std::move(ext)), effective_weight(), b_, geometry(xs[2] + P, P));
}

ConvTranspose1d::ConvTranspose1d(ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
                                 int64_t kernel, int64_t stride, Initializer& init)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride) {
    if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1)
        throw Error(ErrorKind::config, name + ": transposed conv sizes must be positive");
    w_ = ps.add(name + ".w", init.weight({in_ch, out_ch, kernel}, in_ch * ((kernel + stride - 1) / stride)));
    b_ = ps.add(name + ".b", Tensor({out_ch}));
}

ag::Var ConvTranspose1d::forward(const ag::Var& x, StreamContext* ctx) const {
    const auto& xs = x->shape();
    if (xs.size() != 3 || xs[1] != in_ch_)
        throw Error(ErrorKind::shape,
                    "transposed conv expects [B, " + std::to_string(in_ch_) + ", N], got " + shape_str(xs));
    if (!ctx) return ag::conv_transpose1d(x, w_, b_, stride_, xs[2] * stride_);

    const int64_t H = history();
    Tensor& hist = ctx->next_slot();
    if (hist.rank() != 3 || hist.dim(0) != xs[0]) hist = Tensor({xs[0], in_ch_, H});
    if (xs[2] == 0) return ag::constant(Tensor({xs[0], out_ch_, 0}));
    Tensor ext = H > 0 ? concat_time(hist, x->value) : x->value;
    if (H > 0) hist = slice_time(ext, ext.dim(2) - H, H);
    const int64_t total = ext.dim(2) * stride_;
    ag::Var y = ag::conv_transpose1d(ag::constant(std::move(ext)), w_, b_, stride_, total);
    return ag::constant(slice_time(y->value, H * stride_, xs[2] * stride_));
}

}  // namespace ncodec
