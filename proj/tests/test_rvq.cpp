#include <numeric>

#include "doctest.h"
#include "ncodec/error.hpp"
#include "ncodec/rvq.hpp"
#include "test_util.hpp"

using namespace ncodec;

namespace {

ResidualCodebook random_codebook(std::mt19937_64& rng, int books, int size, int dim, double decay = 0.99) {
    ResidualCodebook cb(books, size, dim, decay);
    std::normal_distribution<double> N(0.0, 1.0);
    for (double& e : cb.entries()) e = N(rng);
    cb.set_initialized(true);
    return cb;
}

LatentSequence random_latents(std::mt19937_64& rng, int64_t frames, int dim) {
    LatentSequence z;
    z.num_frames = frames;
    z.dim = dim;
    z.frame_rate = 80.0;
    z.values.resize(frames * dim);
    std::normal_distribution<float> N(0.0f, 1.0f);
    for (float& v : z.values) v = N(rng);
    return z;
}

void zero_entry(ResidualCodebook& cb, int book, int j) {
    for (int d = 0; d < cb.dim(); ++d) cb.entry(book, j)[d] = 0.0;
}

}  // namespace

TEST_CASE("indices match exhaustive per-stage nearest-neighbour search") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        ResidualCodebook cb = random_codebook(rng, 2, 4, 2);
        const LatentSequence z = random_latents(rng, 5, 2);
        const QuantizeResult res = rvq_quantize(z, cb);
        for (int64_t f = 0; f < 5; ++f) {
            double r[2] = {z.frame(f)[0], z.frame(f)[1]};
            for (int s = 0; s < 2; ++s) {
                int best = -1;
                double best_d = 1e300;
                for (int j = 0; j < 4; ++j) {
                    const double a = r[0] - cb.entry(s, j)[0], b = r[1] - cb.entry(s, j)[1];
                    if (a * a + b * b < best_d) best_d = a * a + b * b, best = j;
                }
                CHECK(res.codes[f].indices[s] == uint32_t(best));
                r[0] -= cb.entry(s, best)[0];
                r[1] -= cb.entry(s, best)[1];
            }
        }
    }
}

TEST_CASE("ties go to the lowest index") {
    ResidualCodebook cb(1, 4, 1);
    cb.entries() = {1.0, -1.0, 1.0, -1.0};
    float z = 0.0f;
    uint32_t code = 99;
    cb.quantize(&z, 1, &code, nullptr);
    CHECK(code == 0);
    z = 1.0f;
    cb.quantize(&z, 1, &code, nullptr);
    CHECK(code == 0);
    z = -1.0f;
    cb.quantize(&z, 1, &code, nullptr);
    CHECK(code == 1);
}

TEST_CASE("exact codebook hit gives zero loss") {
    std::mt19937_64 rng(42);
    ResidualCodebook cb = random_codebook(rng, 3, 8, 4);
    zero_entry(cb, 1, 5);
    zero_entry(cb, 2, 2);
    LatentSequence z;
    z.num_frames = 1;
    z.dim = 4;
    for (int d = 0; d < 4; ++d) z.values.push_back(static_cast<float>(cb.entry(0, 6)[d]));
    // Make the float copy exactly representable in the double codebook.
    for (int d = 0; d < 4; ++d) cb.entry(0, 6)[d] = z.values[d];
    const QuantizeResult res = rvq_quantize(z, cb);
    CHECK(res.vq_loss == 0.0);
    CHECK(res.quantized.values == z.values);
    CHECK(res.codes[0].indices == std::vector<uint32_t>{6, 5, 2});
}

TEST_CASE("residual energy is non-increasing when every book holds zero") {
    std::mt19937_64 rng(43);
    ResidualCodebook cb = random_codebook(rng, 6, 16, 3);
    for (int b = 0; b < 6; ++b) zero_entry(cb, b, int(b * 2));
    const LatentSequence z = random_latents(rng, 50, 3);
    QuantizeTrace tr;
    std::vector<float> q(150);
    std::vector<uint32_t> codes(300);
    cb.quantize(z.values.data(), 50, codes.data(), q.data(), &tr);
    for (int64_t i = 0; i < 50; ++i) {
        double prev = 1e300;
        for (int s = 0; s < 6; ++s) {
            double e = 0.0;
            for (int d = 0; d < 3; ++d) e += tr.residuals[s][i * 3 + d] * tr.residuals[s][i * 3 + d];
            CHECK(e <= prev);
            prev = e;
        }
    }
    // Nested prefixes of the same books: error never grows with more books.
    double prev = 1e300;
    for (int books = 1; books <= 6; ++books) {
        cb.quantize(z.values.data(), 50, nullptr, q.data(), nullptr, books);
        double err = 0.0;
        for (size_t i = 0; i < q.size(); ++i) err += (z.values[i] - q[i]) * (z.values[i] - q[i]);
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
}

TEST_CASE("dequantize inverts quantize and rejects bad codes") {
    std::mt19937_64 rng(44);
    ResidualCodebook cb = random_codebook(rng, 4, 16, 5);
    const LatentSequence z = random_latents(rng, 12, 5);
    const QuantizeResult res = rvq_quantize(z, cb);
    CHECK(rvq_dequantize(res.codes, cb).values == res.quantized.values);

    ResidualCodebook single = random_codebook(rng, 1, 8, 3);
    const LatentSequence one = rvq_dequantize({CodeFrame{{5}}}, single);
    for (int d = 0; d < 3; ++d) CHECK(one.values[d] == static_cast<float>(single.entry(0, 5)[d]));

    ResidualCodebook zeros(2, 4, 3);
    for (float v : rvq_dequantize({CodeFrame{{1, 3}}, CodeFrame{{0, 2}}}, zeros).values) CHECK(v == 0.0f);

    CHECK_THROWS_AS(rvq_dequantize({CodeFrame{{16, 0, 0, 0}}}, cb), Error);
    CHECK_THROWS_AS(rvq_dequantize({CodeFrame{{1, 2}}}, cb), Error);
    CHECK_THROWS_AS(rvq_quantize(random_latents(rng, 3, 4), cb), Error);
}

TEST_CASE("EMA update follows the scalar recursion") {
    std::mt19937_64 rng(45);
    const int K = 4, D = 2;
    const double decay = 0.9, eps = 1e-5;
    ResidualCodebook cb = random_codebook(rng, 1, K, D, decay);
    std::vector<double> c(cb.counts()), s(cb.sums());
    std::fill(c.begin(), c.end(), 0.5);
    cb.counts() = c;
    for (size_t i = 0; i < s.size(); ++i) s[i] = cb.entries()[i] * 0.5;
    cb.sums() = s;
    for (int step = 0; step < 3; ++step) {
        QuantizeTrace tr;
        const LatentSequence z = random_latents(rng, 9, D);
        cb.quantize(z.values.data(), 9, nullptr, nullptr, &tr);
        // Oracle recursion written per entry.
        std::vector<double> n(K, 0.0), sum(K * D, 0.0);
        for (int i = 0; i < 9; ++i) {
            const uint32_t j = tr.assignments[0][i];
            n[j] += 1.0;
            for (int d = 0; d < D; ++d) sum[j * D + d] += tr.residuals[0][i * D + d];
        }
        double total = 0.0;
        for (int j = 0; j < K; ++j) {
            c[j] = decay * c[j] + (1.0 - decay) * n[j];
            total += c[j];
            for (int d = 0; d < D; ++d) s[j * D + d] = decay * s[j * D + d] + (1.0 - decay) * sum[j * D + d];
        }
        cb.ema_update(tr);
        for (int j = 0; j < K; ++j) {
            CHECK(cb.counts()[j] == doctest::Approx(c[j]).epsilon(1e-12));
            const double smoothed = (c[j] + eps) / (total + K * eps) * total;
            for (int d = 0; d < D; ++d)
                CHECK(std::fabs(cb.entry(0, j)[d] - s[j * D + d] / smoothed) < 1e-10);
        }
    }
}

TEST_CASE("decay 0 replaces each entry by the mean of its assigned vectors") {
    ResidualCodebook cb(1, 2, 1, 0.0, 1e-5);
    cb.entries() = {-1.0, 1.0};
    std::vector<float> z{-2.0f, -0.5f, 0.5f, 1.0f, 2.5f};
    QuantizeTrace tr;
    cb.quantize(z.data(), 5, nullptr, nullptr, &tr);
    cb.ema_update(tr);
    CHECK(cb.entry(0, 0)[0] == doctest::Approx(-1.25).epsilon(1e-4));
    CHECK(cb.entry(0, 1)[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-4));
}

TEST_CASE("entries stay put under repeated updates with no assignments") {
    std::mt19937_64 rng(46);
    ResidualCodebook cb = random_codebook(rng, 1, 3, 2, 0.8);
    cb.counts() = {2.0, 1.0, 0.5};
    cb.sums() = {2.0, 4.0, -1.0, 1.0, 0.5, 0.5};
    QuantizeTrace empty;
    empty.assignments.assign(1, {});
    empty.residuals.assign(1, {});
    cb.ema_update(empty);
    const std::vector<double> first = cb.entries();
    for (int i = 0; i < 10; ++i) cb.ema_update(empty);
    // Counts and sums shrink by the same factor; only the smoothing term moves
    // the ratio, and it stays negligible while counts dwarf epsilon.
    for (size_t i = 0; i < first.size(); ++i) CHECK(cb.entries()[i] == doctest::Approx(first[i]).epsilon(1e-3));
    CHECK(cb.counts()[0] == doctest::Approx(2.0 * std::pow(0.8, 11)).epsilon(1e-9));
    for (int i = 0; i < 300; ++i) cb.ema_update(empty);
    const std::vector<double> settled = cb.entries();
    cb.ema_update(empty);
    for (size_t i = 0; i < settled.size(); ++i) CHECK(cb.entries()[i] == doctest::Approx(settled[i]).epsilon(1e-9));
}

TEST_CASE("frozen codebooks reject updates and never change") {
    std::mt19937_64 rng(47);
    ResidualCodebook cb = random_codebook(rng, 2, 8, 3);
    freeze(cb);
    freeze(cb);
    CHECK(cb.frozen());
    const uint64_t h = cb.digest();
    const LatentSequence z = random_latents(rng, 4, 3);
    QuantizeTrace tr;
    for (int i = 0; i < 1000; ++i) tr = rvq_quantize(z, cb).trace;
    CHECK(cb.digest() == h);
    CHECK_THROWS_AS(ema_update(cb, tr), Error);
    CHECK_THROWS_AS(cb.kmeans_init(z.values.data(), 4, rng, 2), Error);
    CHECK_THROWS_AS(cb.reseed_dead(tr, 1.0, rng), Error);
    CHECK(cb.digest() == h);
}

TEST_CASE("straight-through gradient is the identity Jacobian") {
    std::mt19937_64 rng(48);
    ResidualCodebook cb = random_codebook(rng, 2, 8, 3);
    ag::Var z = ag::parameter(test::random_tensor({2, 3, 5}, rng));
    const Tensor target = test::random_tensor({2, 3, 5}, rng);
    VqOutput vq = quantize_batch(cb, z);
    ag::backward(ag::mse(vq.quantized, ag::constant(target)));
    // Reference: the same loss composed with identity, evaluated at q.
    ag::Var q = ag::parameter(vq.quantized->value);
    ag::backward(ag::mse(q, ag::constant(target)));
    for (int64_t i = 0; i < z->value.numel(); ++i) CHECK(z->grad[i] == doctest::Approx(q->grad[i]).epsilon(1e-4));
    // The commitment loss equals the mean squared latent-to-code distance.
    double se = 0.0;
    for (int64_t i = 0; i < z->value.numel(); ++i) se += std::pow(double(z->value[i]) - vq.quantized->value[i], 2);
    CHECK(vq.vq_loss->value.item() == doctest::Approx(se / z->value.numel()).epsilon(1e-5));
    CHECK(dequantize_batch(cb, vq.codes, 2, 5).storage() == vq.quantized->value.storage());
}

TEST_CASE("k-means init and dead-code reseeding") {
    std::mt19937_64 rng(49);
    ResidualCodebook cb(2, 8, 2);
    CHECK_FALSE(cb.initialized());
    const LatentSequence z = random_latents(rng, 64, 2);
    cb.kmeans_init(z.values.data(), 64, rng, 5);
    CHECK(cb.initialized());
    for (double e : cb.entries()) CHECK(std::isfinite(e));
    // Every entry is used at least once by its own training data after k-means.
    const QuantizeResult res = rvq_quantize(z, cb);
    std::vector<int> used(8, 0);
    for (const auto& f : res.codes) used[f.indices[0]] = 1;
    CHECK(std::accumulate(used.begin(), used.end(), 0) == 8);

    cb.counts()[3] = 0.1;
    cb.counts()[8 + 5] = 0.2;
    CHECK(cb.reseed_dead(res.trace, 1.0, rng) == 2);
    CHECK(cb.counts()[3] == 1.0);

    ResidualCodebook few(1, 16, 2);
    few.kmeans_init(z.values.data(), 4, rng, 5);  // fewer vectors than entries
    CHECK(few.initialized());
}

TEST_CASE("perplexity of uniform usage equals the book size") {
    ResidualCodebook cb(2, 16, 1);
    std::fill(cb.counts().begin(), cb.counts().begin() + 16, 3.0);
    std::fill(cb.counts().begin() + 16, cb.counts().end(), 0.0);
    cb.counts()[16] = 5.0;
    const auto p = cb.perplexity();
    CHECK(p[0] == doctest::Approx(16.0));
    CHECK(p[1] == doctest::Approx(1.0));
}

TEST_CASE("code normalization") {
    std::mt19937_64 rng(50);
    LatentSequence z = random_latents(rng, 40, 3);
    for (int64_t f = 0; f < 40; ++f) z.frame(f)[1] = z.frame(f)[1] * 4.0f + 2.0f;
    const NormStats st = compute_norm_stats({z});
    const LatentSequence n = normalize_codes(z, st);
    const NormStats st2 = compute_norm_stats({n});
    for (int d = 0; d < 3; ++d) {
        CHECK(std::fabs(st2.mean[d]) < 1e-6);
        CHECK(st2.std[d] == doctest::Approx(1.0).epsilon(1e-6));
    }
    const LatentSequence back = denormalize_codes(n, st);
    for (size_t i = 0; i < z.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(z.values[i]).epsilon(1e-6));

    NormStats unit{{0, 0, 0}, {1, 1, 1}};
    CHECK(normalize_codes(z, unit).values == z.values);

    LatentSequence flat = z;
    for (int64_t f = 0; f < 40; ++f) flat.frame(f)[2] = 0.25f;
    const NormStats sf = compute_norm_stats({flat});
    CHECK(zero_std_dims(sf) == std::vector<int>{2});
    const LatentSequence nf = normalize_codes(flat, sf);
    for (int64_t f = 0; f < 40; ++f) CHECK(nf.frame(f)[2] == 0.25f);

    CHECK_THROWS_AS(normalize_codes(random_latents(rng, 2, 4), st), Error);
}
