#include "ncodec/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ncodec/error.hpp"

namespace ncodec {

namespace {

// Index of the nearest entry of a book to r; ties keep the lowest index.
uint32_t nearest(const double* book, int64_t size, int dim, const double* r) {
    double best = std::numeric_limits<double>::infinity();
    uint32_t arg = 0;
    for (int64_t j = 0; j < size; ++j) {
        const double* e = book + j * dim;
        double d = 0.0;
        int k = 0;
        // Partial sums only grow, so a prefix already >= best can never win.
        for (; k < dim; ++k) {
            const double t = r[k] - e[k];
            d += t * t;
            if ((k & 7) == 7 && d >= best) break;
        }
        if (k == dim && d < best) {
            best = d;
            arg = static_cast<uint32_t>(j);
        }
    }
    return arg;
}

}  // namespace

Tensor LatentSequence::to_tensor() const {
    Tensor t({1, dim, num_frames});
    for (int64_t f = 0; f < num_frames; ++f)
        for (int d = 0; d < dim; ++d) t.at(0, d, f) = values[f * dim + d];
    return t;
}

LatentSequence LatentSequence::from_tensor(const Tensor& t, int64_t b, double frame_rate) {
    LatentSequence s;
    s.dim = static_cast<int>(t.dim(1));
    s.num_frames = t.dim(2);
    s.frame_rate = frame_rate;
    s.values.resize(s.dim * s.num_frames);
    for (int64_t f = 0; f < s.num_frames; ++f)
        for (int d = 0; d < s.dim; ++d) s.values[f * s.dim + d] = t.at(b, d, f);
    return s;
}

void QuantizerConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::config, "quantizer config: " + m); };
    if (num_books < 1 || book_size < 1) fail("num_books and book_size must be >= 1");
    if (book_size > (1 << 16)) fail("book_size must be <= 65536");
    if (!(decay >= 0.0 && decay < 1.0)) fail("decay must lie in [0, 1)");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
    if (dead_threshold < 0.0) fail("dead_threshold must be >= 0");
    if (reseed_interval < 0 || kmeans_iters < 0) fail("reseed_interval and kmeans_iters must be >= 0");
}

ResidualCodebook::ResidualCodebook(int num_books, int book_size, int dim, double decay, double epsilon)
    : num_books_(num_books), book_size_(book_size), dim_(dim), decay_(decay), epsilon_(epsilon) {
    if (num_books < 1 || book_size < 1 || dim < 1) throw Error(ErrorKind::config, "codebook sizes must be positive");
    entries_.assign(int64_t(num_books) * book_size * dim, 0.0);
    counts_.assign(int64_t(num_books) * book_size, 0.0);
    sums_.assign(entries_.size(), 0.0);
}

void ResidualCodebook::require_mutable(const char* op) const {
    if (frozen_) throw Error(ErrorKind::state, std::string(op) + " called on a frozen codebook");
}

void ResidualCodebook::quantize(const float* z, int64_t n, uint32_t* codes, float* q, QuantizeTrace* trace,
                                int books) const {
    if (books < 0 || books > num_books_) books = num_books_;
    if (trace) {
        trace->assignments.assign(books, std::vector<uint32_t>(n));
        trace->residuals.assign(books, std::vector<double>(n * dim_));
    }
    std::vector<double> r(dim_), acc(dim_);
    for (int64_t i = 0; i < n; ++i) {
        for (int d = 0; d < dim_; ++d) {
            r[d] = z[i * dim_ + d];
            acc[d] = 0.0;
        }
        for (int s = 0; s < books; ++s) {
            const uint32_t j = nearest(entry(s, 0), book_size_, dim_, r.data());
            if (codes) codes[i * num_books_ + s] = j;
            if (trace) {
                trace->assignments[s][i] = j;
                std::copy(r.begin(), r.end(), trace->residuals[s].begin() + i * dim_);
            }
            const double* e = entry(s, j);
            for (int d = 0; d < dim_; ++d) {
                r[d] -= e[d];
                acc[d] += e[d];
            }
        }
        if (codes)
            for (int s = books; s < num_books_; ++s) codes[i * num_books_ + s] = 0;
        if (q)
            for (int d = 0; d < dim_; ++d) q[i * dim_ + d] = static_cast<float>(acc[d]);
    }
}

void ResidualCodebook::dequantize(const uint32_t* codes, int64_t n, float* out) const {
    std::vector<double> acc(dim_);
    for (int64_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int s = 0; s < num_books_; ++s) {
            const uint32_t j = codes[i * num_books_ + s];
            if (j >= uint32_t(book_size_))
                throw Error(ErrorKind::corrupt, "code index " + std::to_string(j) + " out of range for book size " +
                                                    std::to_string(book_size_));
            const double* e = entry(s, j);
            for (int d = 0; d < dim_; ++d) acc[d] += e[d];
        }
        for (int d = 0; d < dim_; ++d) out[i * dim_ + d] = static_cast<float>(acc[d]);
    }
}

void ResidualCodebook::ema_update(const QuantizeTrace& trace) {
    require_mutable("ema_update");
    const int books = static_cast<int>(trace.assignments.size());
    if (books > num_books_ || trace.residuals.size() != trace.assignments.size())
        throw Error(ErrorKind::shape, "ema_update: trace does not match the codebook");
    std::vector<double> n(book_size_), s(int64_t(book_size_) * dim_);
    for (int b = 0; b < books; ++b) {
        const auto& a = trace.assignments[b];
        const auto& r = trace.residuals[b];
        if (r.size() != a.size() * dim_) throw Error(ErrorKind::shape, "ema_update: residual size mismatch");
        std::fill(n.begin(), n.end(), 0.0);
        std::fill(s.begin(), s.end(), 0.0);
        for (size_t i = 0; i < a.size(); ++i) {
            n[a[i]] += 1.0;
            for (int d = 0; d < dim_; ++d) s[a[i] * dim_ + d] += r[i * dim_ + d];
        }
        double* c = counts_.data() + int64_t(b) * book_size_;
        double* sm = sums_.data() + int64_t(b) * book_size_ * dim_;
        double total = 0.0;
        for (int j = 0; j < book_size_; ++j) {
            c[j] = decay_ * c[j] + (1.0 - decay_) * n[j];
            total += c[j];
            for (int d = 0; d < dim_; ++d) sm[j * dim_ + d] = decay_ * sm[j * dim_ + d] + (1.0 - decay_) * s[j * dim_ + d];
        }
        for (int j = 0; j < book_size_; ++j) {
            const double smoothed = (c[j] + epsilon_) / (total + book_size_ * epsilon_) * total;
            if (!(smoothed > 0.0)) continue;
            double* e = entry(b, j);
            for (int d = 0; d < dim_; ++d) e[d] = sm[j * dim_ + d] / smoothed;
        }
    }
}

void ResidualCodebook::kmeans_init(const float* z, int64_t n, std::mt19937_64& rng, int iters) {
    require_mutable("kmeans_init");
    if (n < 1) throw Error(ErrorKind::shape, "kmeans_init: no vectors");
    std::vector<double> r(z, z + n * dim_);
    std::vector<uint32_t> assign(n);
    for (int b = 0; b < num_books_; ++b) {
        double* book = entry(b, 0);
        if (n >= book_size_) {
            std::vector<int64_t> idx(n);
            for (int64_t i = 0; i < n; ++i) idx[i] = i;
            std::shuffle(idx.begin(), idx.end(), rng);
            for (int j = 0; j < book_size_; ++j) std::copy_n(&r[idx[j] * dim_], dim_, book + j * dim_);
            for (int it = 0; it < iters; ++it) {
                std::vector<double> sum(int64_t(book_size_) * dim_, 0.0), cnt(book_size_, 0.0);
                for (int64_t i = 0; i < n; ++i) {
                    const uint32_t j = nearest(book, book_size_, dim_, &r[i * dim_]);
                    cnt[j] += 1.0;
                    for (int d = 0; d < dim_; ++d) sum[j * dim_ + d] += r[i * dim_ + d];
                }
                for (int j = 0; j < book_size_; ++j)
                    if (cnt[j] > 0)
                        for (int d = 0; d < dim_; ++d) book[j * dim_ + d] = sum[j * dim_ + d] / cnt[j];
            }
        } else {
            std::uniform_int_distribution<int64_t> pick(0, n - 1);
            for (int j = 0; j < book_size_; ++j) std::copy_n(&r[pick(rng) * dim_], dim_, book + j * dim_);
        }
        double* c = counts_.data() + int64_t(b) * book_size_;
        double* sm = sums_.data() + int64_t(b) * book_size_ * dim_;
        for (int j = 0; j < book_size_; ++j) {
            c[j] = 1.0;
            std::copy_n(book + j * dim_, dim_, sm + j * dim_);
        }
        for (int64_t i = 0; i < n; ++i) {
            const uint32_t j = nearest(book, book_size_, dim_, &r[i * dim_]);
            for (int d = 0; d < dim_; ++d) r[i * dim_ + d] -= book[j * dim_ + d];
        }
    }
    initialized_ = true;
}

int ResidualCodebook::reseed_dead(const QuantizeTrace& trace, double threshold, std::mt19937_64& rng) {
    require_mutable("reseed_dead");
    int replaced = 0;
    for (size_t b = 0; b < trace.residuals.size(); ++b) {
        const auto& r = trace.residuals[b];
        const int64_t n = static_cast<int64_t>(r.size()) / dim_;
        if (n == 0) continue;
        std::uniform_int_distribution<int64_t> pick(0, n - 1);
        for (int j = 0; j < book_size_; ++j) {
            double& c = counts_[b * book_size_ + j];
            if (c >= threshold) continue;
            const double* src = &r[pick(rng) * dim_];
            std::copy_n(src, dim_, entry(static_cast<int>(b), j));
            std::copy_n(src, dim_, sums_.data() + (int64_t(b) * book_size_ + j) * dim_);
            c = 1.0;
            ++replaced;
        }
    }
    return replaced;
}

std::vector<double> ResidualCodebook::perplexity() const {
    std::vector<double> out(num_books_);
    for (int b = 0; b < num_books_; ++b) {
        const double* c = counts_.data() + int64_t(b) * book_size_;
        double total = 0.0;
        for (int j = 0; j < book_size_; ++j) total += c[j];
        double h = 0.0;
        if (total > 0)
            for (int j = 0; j < book_size_; ++j)
                if (c[j] > 0) h -= c[j] / total * std::log(c[j] / total);
        out[b] = std::exp(h);
    }
    return out;
}

uint64_t ResidualCodebook::digest() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::vector<double>& v) {
        const auto* p = reinterpret_cast<const unsigned char*>(v.data());
        for (size_t i = 0; i < v.size() * sizeof(double); ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    mix(entries_);
    mix(counts_);
    mix(sums_);
    return h;
}

QuantizeResult rvq_quantize(const LatentSequence& latents, const ResidualCodebook& cb) {
    if (latents.dim != cb.dim())
        throw Error(ErrorKind::shape, "latent dim " + std::to_string(latents.dim) + " does not match codebook dim " +
                                          std::to_string(cb.dim()));
    QuantizeResult res;
    const int64_t n = latents.num_frames;
    std::vector<uint32_t> codes(n * cb.num_books());
    res.quantized.num_frames = n;
    res.quantized.dim = latents.dim;
    res.quantized.frame_rate = latents.frame_rate;
    res.quantized.values.resize(n * latents.dim);
    cb.quantize(latents.values.data(), n, codes.data(), res.quantized.values.data(), &res.trace);
    res.codes.resize(n);
    for (int64_t i = 0; i < n; ++i)
        res.codes[i].indices.assign(codes.begin() + i * cb.num_books(), codes.begin() + (i + 1) * cb.num_books());
    double se = 0.0;
    for (size_t i = 0; i < latents.values.size(); ++i) {
        const double d = double(latents.values[i]) - res.quantized.values[i];
        se += d * d;
    }
    res.vq_loss = latents.values.empty() ? 0.0 : se / latents.values.size();
    return res;
}

LatentSequence rvq_dequantize(const std::vector<CodeFrame>& codes, const ResidualCodebook& cb, double frame_rate) {
    LatentSequence out;
    out.num_frames = static_cast<int64_t>(codes.size());
    out.dim = cb.dim();
    out.frame_rate = frame_rate;
    out.values.resize(out.num_frames * out.dim);
    std::vector<uint32_t> flat;
    flat.reserve(codes.size() * cb.num_books());
    for (const auto& f : codes) {
        if (f.indices.size() != size_t(cb.num_books()))
            throw Error(ErrorKind::corrupt, "code frame has " + std::to_string(f.indices.size()) + " indices, expected " +
                                                std::to_string(cb.num_books()));
        flat.insert(flat.end(), f.indices.begin(), f.indices.end());
    }
    cb.dequantize(flat.data(), out.num_frames, out.values.data());
    return out;
}

void ema_update(ResidualCodebook& cb, const QuantizeTrace& trace) { cb.ema_update(trace); }

ResidualCodebook& freeze(ResidualCodebook& cb) {
    cb.freeze();
    return cb;
}

VqOutput quantize_batch(const ResidualCodebook& cb, const ag::Var& z) {
    const auto& s = z->shape();
    if (s.size() != 3 || s[1] != cb.dim())
        throw Error(ErrorKind::shape, "quantizer expects [B, " + std::to_string(cb.dim()) + ", F], got " + shape_str(s));
    const int64_t B = s[0], D = s[1], F = s[2], n = B * F;
    std::vector<float> rows(n * D), q(n * D);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t f = 0; f < F; ++f)
            for (int64_t d = 0; d < D; ++d) rows[(b * F + f) * D + d] = z->value.at(b, d, f);
    VqOutput out;
    out.codes.resize(n * cb.num_books());
    cb.quantize(rows.data(), n, out.codes.data(), q.data(), &out.trace);
    Tensor qt({B, D, F});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t f = 0; f < F; ++f)
            for (int64_t d = 0; d < D; ++d) qt.at(b, d, f) = q[(b * F + f) * D + d];
    out.vq_loss = ag::mse(z, ag::constant(qt));
    out.quantized = ag::straight_through(z, qt);
    return out;
}

Tensor dequantize_batch(const ResidualCodebook& cb, const std::vector<uint32_t>& codes, int64_t batch, int64_t frames) {
    const int64_t D = cb.dim();
    if (int64_t(codes.size()) != batch * frames * cb.num_books())
        throw Error(ErrorKind::shape, "dequantize_batch: code count mismatch");
    std::vector<float> q(batch * frames * D);
    cb.dequantize(codes.data(), batch * frames, q.data());
    Tensor t({batch, D, frames});
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t f = 0; f < frames; ++f)
            for (int64_t d = 0; d < D; ++d) t.at(b, d, f) = q[(b * frames + f) * D + d];
    return t;
}

NormStats compute_norm_stats(const std::vector<LatentSequence>& seqs) {
    NormStats st;
    if (seqs.empty()) throw Error(ErrorKind::shape, "compute_norm_stats: no sequences");
    const int D = seqs[0].dim;
    std::vector<double> sum(D, 0.0), sq(D, 0.0);
    int64_t count = 0;
    for (const auto& s : seqs) {
        if (s.dim != D) throw Error(ErrorKind::shape, "compute_norm_stats: mixed dimensions");
        for (int64_t f = 0; f < s.num_frames; ++f)
            for (int d = 0; d < D; ++d) sum[d] += s.frame(f)[d];
        count += s.num_frames;
    }
    if (count == 0) throw Error(ErrorKind::shape, "compute_norm_stats: no frames");
    st.mean.resize(D);
    for (int d = 0; d < D; ++d) st.mean[d] = sum[d] / count;
    for (const auto& s : seqs)
        for (int64_t f = 0; f < s.num_frames; ++f)
            for (int d = 0; d < D; ++d) {
                const double t = s.frame(f)[d] - st.mean[d];
                sq[d] += t * t;
            }
    st.std.resize(D);
    for (int d = 0; d < D; ++d) st.std[d] = std::sqrt(sq[d] / count);
    return st;
}

std::vector<int> zero_std_dims(const NormStats& stats) {
    std::vector<int> out;
    for (size_t d = 0; d < stats.std.size(); ++d)
        if (!(stats.std[d] > 0.0)) out.push_back(static_cast<int>(d));
    return out;
}

namespace {

void check_stats(const NormStats& stats, int dim) {
    if (int(stats.mean.size()) != dim || int(stats.std.size()) != dim)
        throw Error(ErrorKind::compatibility, "normalization stats have dimension " + std::to_string(stats.mean.size()) +
                                                  ", latents have " + std::to_string(dim));
}

}  // namespace

LatentSequence normalize_codes(const LatentSequence& z, const NormStats& stats) {
    check_stats(stats, z.dim);
    LatentSequence out = z;
    for (int64_t f = 0; f < z.num_frames; ++f)
        for (int d = 0; d < z.dim; ++d)
            if (stats.std[d] > 0.0)
                out.frame(f)[d] = static_cast<float>((z.frame(f)[d] - stats.mean[d]) / stats.std[d]);
    return out;
}

LatentSequence denormalize_codes(const LatentSequence& z, const NormStats& stats) {
    check_stats(stats, z.dim);
    LatentSequence out = z;
    for (int64_t f = 0; f < z.num_frames; ++f)
        for (int d = 0; d < z.dim; ++d)
            if (stats.std[d] > 0.0) out.frame(f)[d] = static_cast<float>(z.frame(f)[d] * stats.std[d] + stats.mean[d]);
    return out;
}

void normalize_tensor(Tensor& z, const NormStats& stats) {
    check_stats(stats, static_cast<int>(z.dim(1)));
    for (int64_t b = 0; b < z.dim(0); ++b)
        for (int64_t d = 0; d < z.dim(1); ++d) {
            if (!(stats.std[d] > 0.0)) continue;
            float* r = z.row(b, d);
            for (int64_t f = 0; f < z.dim(2); ++f) r[f] = static_cast<float>((r[f] - stats.mean[d]) / stats.std[d]);
        }
}

}  // namespace ncodec
