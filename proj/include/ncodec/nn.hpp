#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ncodec/autograd.hpp"

namespace ncodec {

enum class ActKind { leaky_relu, elu, relu, identity };

struct Activation {
    ActKind kind = ActKind::leaky_relu;
    float param = 0.2f;  // leaky slope or ELU alpha

    ag::Var operator()(const ag::Var& x) const;
};

std::string to_string(const Activation& a);
Activation parse_activation(const std::string& name, float param);

// Named, insertion-ordered parameter registry. Names are dotted paths such as
// "enc.stage0.down.w"; prefixes select sub-networks for freezing and export.
class ParamStore {
public:
    ag::Var add(const std::string& name, Tensor init, bool trainable = true);
    ag::Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, ag::Var>> with_prefix(const std::string& prefix) const;
    // Parameters under prefix that currently require gradients.
    std::vector<std::pair<std::string, ag::Var>> trainable(const std::string& prefix = "") const;
    void set_trainable(const std::string& prefix, bool on);
    void zero_grad();
    int64_t count(const std::string& prefix = "") const;

    // Order-sensitive FNV-1a digest of names and values under prefix.
    uint64_t digest(const std::string& prefix = "") const;

private:
    std::vector<std::pair<std::string, ag::Var>> entries_;
    std::unordered_map<std::string, size_t> index_;
    std::unordered_map<std::string, bool> is_trainable_;
};

struct InitConfig {
    std::string scheme = "normal";  // "normal" or "fan_in"
    double std = 0.01;              // used by "normal"
    double gain = 1.0;              // used by "fan_in": std = gain / sqrt(fan_in)
};

class Initializer {
public:
    Initializer(uint64_t seed, InitConfig cfg) : rng_(seed), cfg_(std::move(cfg)) {}
    Tensor weight(Shape shape, int64_t fan_in);
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
    InitConfig cfg_;
};

// Per-layer history buffers for chunked causal inference. Stateful layers
// claim slots in call order; begin_pass() rewinds the cursor for each chunk.
class StreamContext {
public:
    Tensor& next_slot();
    void begin_pass() { cursor_ = 0; }
    void reset() {
        slots_.clear();
        cursor_ = 0;
    }
    size_t num_slots() const { return slots_.size(); }

private:
    std::vector<Tensor> slots_;
    size_t cursor_ = 0;
};

enum class Padding { causal, centered };
enum class WeightNorm { none, weight, spectral };

struct ConvSpec {
    int64_t in_ch = 1;
    int64_t out_ch = 1;
    int64_t kernel = 1;
    int64_t stride = 1;
    int64_t dilation = 1;
    int64_t groups = 1;
    Padding padding = Padding::causal;
    WeightNorm norm = WeightNorm::none;
    bool bias = true;
};

// 1-D convolution. Causal layers read only past and present input: output t
// of a stride-s layer depends on input samples <= t*s + s - 1, and a
// stride-1 layer computes y[t] = b + sum_k w[k] x[t - k*dilation].
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(ParamStore& ps, const std::string& name, const ConvSpec& spec, Initializer& init);

    // Batch call when ctx is null; otherwise consumes and updates a history
    // slot (input length must then be a multiple of the stride).
    ag::Var forward(const ag::Var& x, StreamContext* ctx = nullptr) const;
    ag::Var operator()(const ag::Var& x, StreamContext* ctx = nullptr) const { return forward(x, ctx); }

    ag::Var effective_weight() const;
    const ConvSpec& spec() const { return spec_; }
    // Input samples of left context a causal layer keeps between chunks.
    int64_t history() const;
    ConvGeometry geometry(int64_t in_len, int64_t history_len) const;

private:
    ConvSpec spec_;
    ag::Var w_, b_, g_, u_;
};

// Causal transposed convolution upsampling by `stride`; output length is
// input frames * stride, with the kernel tail trimmed on the right.
class ConvTranspose1d {
public:
    ConvTranspose1d() = default;
    ConvTranspose1d(ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch, int64_t kernel,
                    int64_t stride, Initializer& init);

    ag::Var forward(const ag::Var& x, StreamContext* ctx = nullptr) const;
    ag::Var operator()(const ag::Var& x, StreamContext* ctx = nullptr) const { return forward(x, ctx); }

    int64_t kernel() const { return kernel_; }
    int64_t stride() const { return stride_; }
    // Input frames of left context kept between chunks.
    int64_t history() const { return (kernel_ + stride_ - 1) / stride_ - 1; }

private:
    int64_t in_ch_ = 0, out_ch_ = 0, kernel_ = 0, stride_ = 1;
    ag::Var w_, b_;
};

}  // namespace ncodec
