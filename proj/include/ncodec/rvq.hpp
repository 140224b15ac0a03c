#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ncodec/autograd.hpp"

namespace ncodec {

// Per-frame codebook indices, one per book.
struct CodeFrame {
    std::vector<uint32_t> indices;

    bool operator==(const CodeFrame& o) const { return indices == o.indices; }
};

// Continuous latent frames, stored frame-major ([num_frames x dim]).
struct LatentSequence {
    int64_t num_frames = 0;
    int dim = 0;
    double frame_rate = 0.0;
    std::vector<float> values;

    float* frame(int64_t i) { return values.data() + i * dim; }
    const float* frame(int64_t i) const { return values.data() + i * dim; }

    // [1, dim, num_frames] activation layout.
    Tensor to_tensor() const;
    // Batch item b of a [B, dim, F] tensor.
    static LatentSequence from_tensor(const Tensor& t, int64_t b, double frame_rate);
};

struct QuantizerConfig {
    int num_books = 8;
    int book_size = 1024;
    double decay = 0.99;
    double epsilon = 1e-5;
    double dead_threshold = 1.0;
    int reseed_interval = 1000;
    int kmeans_iters = 10;

    void validate() const;
};

// Stage inputs and choices of one quantization pass, consumed by EMA updates.
struct QuantizeTrace {
    std::vector<std::vector<uint32_t>> assignments;  // [stage][vector]
    std::vector<std::vector<double>> residuals;      // [stage][vector * dim]
};

// Residual vector quantizer with EMA-learned codebooks. Entries and
// statistics are kept in double precision.
class ResidualCodebook {
public:
    ResidualCodebook() = default;
    ResidualCodebook(int num_books, int book_size, int dim, double decay = 0.99, double epsilon = 1e-5);

    int num_books() const { return num_books_; }
    int book_size() const { return book_size_; }
    int dim() const { return dim_; }
    double decay() const { return decay_; }
    double epsilon() const { return epsilon_; }
    bool frozen() const { return frozen_; }
    bool initialized() const { return initialized_; }
    void set_initialized(bool v) { initialized_ = v; }

    // Irreversible; entries and statistics never change afterwards.
    void freeze() { frozen_ = true; }

    double* entry(int book, int64_t j) { return entries_.data() + (int64_t(book) * book_size_ + j) * dim_; }
    const double* entry(int book, int64_t j) const { return entries_.data() + (int64_t(book) * book_size_ + j) * dim_; }
    std::vector<double>& entries() { return entries_; }
    const std::vector<double>& entries() const { return entries_; }
    std::vector<double>& counts() { return counts_; }
    const std::vector<double>& counts() const { return counts_; }
    std::vector<double>& sums() { return sums_; }
    const std::vector<double>& sums() const { return sums_; }

    // Quantizes n row vectors z [n x dim]. codes receives n*num_books indices
    // (frame-major), q the summed entries. Nearest entry by squared Euclidean
    // distance; ties go to the lowest index. Books beyond `books` are skipped.
    void quantize(const float* z, int64_t n, uint32_t* codes, float* q, QuantizeTrace* trace = nullptr,
                  int books = -1) const;
    void dequantize(const uint32_t* codes, int64_t n, float* out) const;

    // counts <- decay*counts + (1-decay)*n_j, sums <- decay*sums + (1-decay)*sum_j,
    // entry_j <- sums_j / smoothed count, smoothed = (c_j + eps) / (N + K*eps) * N.
    void ema_update(const QuantizeTrace& trace);
    // Seeds every book by k-means over the trace's stage inputs, quantizing
    // stage by stage. Falls back to random samples when there are fewer
    // vectors than entries.
    void kmeans_init(const float* z, int64_t n, std::mt19937_64& rng, int iters);
    // Replaces entries whose EMA count is below threshold with random stage
    // inputs from the trace. Returns the number of replaced entries.
    int reseed_dead(const QuantizeTrace& trace, double threshold, std::mt19937_64& rng);

    // exp(entropy) of the EMA usage distribution per book.
    std::vector<double> perplexity() const;
    uint64_t digest() const;

private:
    void require_mutable(const char* op) const;

    int num_books_ = 0, book_size_ = 0, dim_ = 0;
    double decay_ = 0.99, epsilon_ = 1e-5;
    bool frozen_ = false;
    bool initialized_ = false;
    std::vector<double> entries_, counts_, sums_;
};

struct QuantizeResult {
    std::vector<CodeFrame> codes;
    LatentSequence quantized;
    double vq_loss = 0.0;
    QuantizeTrace trace;
};

QuantizeResult rvq_quantize(const LatentSequence& latents, const ResidualCodebook& cb);
LatentSequence rvq_dequantize(const std::vector<CodeFrame>& codes, const ResidualCodebook& cb, double frame_rate = 0.0);
void ema_update(ResidualCodebook& cb, const QuantizeTrace& trace);
ResidualCodebook& freeze(ResidualCodebook& cb);

// Differentiable quantization of a [B, D, F] latent batch. `quantized`
// carries the straight-through gradient; vq_loss is the commitment MSE
// between the latents and the stop-gradiented quantized values.
struct VqOutput {
    ag::Var quantized;
    ag::Var vq_loss;
    QuantizeTrace trace;
    std::vector<uint32_t> codes;  // [B][F][num_books]
};

VqOutput quantize_batch(const ResidualCodebook& cb, const ag::Var& z);
// [B, F, num_books] codes -> [B, D, F] quantized values.
Tensor dequantize_batch(const ResidualCodebook& cb, const std::vector<uint32_t>& codes, int64_t batch, int64_t frames);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;

    bool empty() const { return mean.empty(); }
};

// Per-dimension mean and population standard deviation over all frames.
NormStats compute_norm_stats(const std::vector<LatentSequence>& seqs);
// (z - mean) / std per dimension; dimensions with std == 0 pass through
// unchanged (see zero_std_dims).
LatentSequence normalize_codes(const LatentSequence& z, const NormStats& stats);
LatentSequence denormalize_codes(const LatentSequence& z, const NormStats& stats);
std::vector<int> zero_std_dims(const NormStats& stats);
// In-place variant for [B, D, F] tensors.
void normalize_tensor(Tensor& z, const NormStats& stats);

}  // namespace ncodec
