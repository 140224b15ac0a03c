#include <map>

#include "doctest.h"
#include "ncodec/codec_net.hpp"
#include "ncodec/error.hpp"
#include "ncodec/model.hpp"
#include "test_util.hpp"

using namespace ncodec;

namespace {

// Narrow codec with the full [2,2,3,5,5] hop-300 factorization.
CodecSpec hop300_spec(VariantId v) {
    CodecSpec s = test::tiny_spec(v);
    s.sample_rate = 24000;
    s.encoder.downsample_factors = {2, 2, 3, 5, 5};
    s.encoder.base_channels = 2;
    s.encoder.max_channels = 8;
    s.decoder.upsample_initial_channels = 8;
    return s;
}

Tensor wave_tensor(const Waveform& w) { return Tensor({1, 1, w.length()}, w.samples); }

GeneratorConfig grouped_cfg(VariantId v, int groups, int kernel) {
    GeneratorConfig g;
    g.variant = v;
    g.num_groups = groups;
    g.group_kernel = kernel;
    g.mrf_dilations = {1, 3};
    return g;
}

}  // namespace

TEST_CASE("encoder frame counts follow ceil(length / hop)") {
    CodecModel m(hop300_spec(VariantId::sym), 1);
    CHECK(m.hop() == 300);
    std::mt19937_64 rng(31);
    CHECK(m.encode(test::random_wave(rng, 48000, 24000)).num_frames == 160);
    CHECK(m.encode(test::random_wave(rng, 300, 24000)).num_frames == 1);
    CHECK(m.encode(test::random_wave(rng, 301, 24000)).num_frames == 2);
    const LatentSequence z = m.encode(test::random_wave(rng, 900, 24000));
    CHECK(z.dim == 4);
    CHECK(z.frame_rate == doctest::Approx(80.0));
    for (float v : z.values) CHECK(std::isfinite(v));
    CHECK_THROWS_AS(m.encode(test::random_wave(rng, 900, 16000)), Error);
}

TEST_CASE("decoders emit frames * hop samples for every variant") {
    std::mt19937_64 rng(32);
    for (VariantId v : {VariantId::sym, VariantId::v0, VariantId::v1, VariantId::v2}) {
        CodecModel m(hop300_spec(v), 2);
        for (int64_t frames : {1, 3, 7}) {
            ag::NoGradGuard ng;
            const Tensor y = m.synthesize(ag::constant(test::random_tensor({1, 4, frames}, rng)))->value;
            CHECK(y.shape() == Shape{1, 1, frames * 300});
        }
        const Waveform w = test::random_wave(rng, 1500, 24000);
        CHECK(m.reconstruct(w).length() == 1500);
        CHECK(m.decode(m.encode_codes(w)).length() == 1500);
    }
}

TEST_CASE("encoder is causal under random future perturbation") {
    CodecModel m(test::tiny_spec(), 3);
    std::mt19937_64 rng(33);
    ag::NoGradGuard ng;
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = test::random_tensor({1, 1, 120}, rng, 0.3f);
        const Tensor z0 = m.latents(ag::constant(x))->value;
        const int64_t cut = std::uniform_int_distribution<int64_t>(1, 119)(rng);
        std::normal_distribution<float> N(0.0f, 0.3f);
        for (int64_t t = cut; t < 120; ++t) x[t] += N(rng);
        const Tensor z1 = m.latents(ag::constant(x))->value;
        for (int64_t f = 0; f < z0.dim(2); ++f)
            if ((f + 1) * 6 <= cut)
                for (int64_t d = 0; d < 4; ++d) CHECK(z0.at(0, d, f) == z1.at(0, d, f));
    }
}

TEST_CASE("decoders are causal in latent frames") {
    std::mt19937_64 rng(34);
    for (VariantId v : {VariantId::sym, VariantId::v0, VariantId::v1, VariantId::v2}) {
        CodecModel m(test::tiny_spec(v), 4);
        ag::NoGradGuard ng;
        Tensor z = test::random_tensor({1, 4, 10}, rng);
        const Tensor y0 = m.synthesize(ag::constant(z))->value;
        for (int64_t k : {0, 4, 9}) {
            Tensor zp = z;
            for (int64_t d = 0; d < 4; ++d) zp.at(0, d, k) += 1.0f;
            const Tensor y1 = m.synthesize(ag::constant(zp))->value;
            for (int64_t t = 0; t < k * 6; ++t) CHECK(y0[t] == y1[t]);
            double moved = 0.0;
            for (int64_t t = k * 6; t < (k + 1) * 6; ++t) moved += std::fabs(y0[t] - y1[t]);
            CHECK(moved > 0.0);
        }
    }
}

TEST_CASE("grouped MRF equals an explicit loop over per-branch stacks") {
    std::mt19937_64 rng(35);
    for (auto [variant, groups, kernel] : {std::tuple{VariantId::v1, 3, 11}, std::tuple{VariantId::v2, 3, 3},
                                           std::tuple{VariantId::v2, 1, 3}}) {
        const GeneratorConfig cfg = grouped_cfg(variant, groups, kernel);
        ParamStore ps;
        Initializer init(9, InitConfig{"fan_in", 0.01, 1.0});
        const int C = 4;
        Mrf mrf(ps, "m", C, cfg, init);
        CHECK(mrf.grouped());
        CHECK(mrf.branches() == groups);
        const Tensor x = test::random_tensor({1, C, 30}, rng);
        ag::NoGradGuard ng;
        const Tensor y = mrf.forward(ag::constant(x), nullptr)->value;

        // Oracle: slice each grouped conv into per-branch weights and run the
        // residual stacks independently, then average.
        auto slice_rows = [&](const std::string& name, int64_t g) {
            const Tensor& full = ps.get(name)->value;
            const int64_t per = full.numel() / full.dim(0) * C;
            return Tensor(full.rank() == 3 ? Shape{C, full.dim(1), full.dim(2)} : Shape{C},
                          std::vector<float>(full.data() + g * per, full.data() + (g + 1) * per));
        };
        Tensor acc({1, C, 30});
        for (int64_t g = 0; g < groups; ++g) {
            ag::Var h = ag::constant(x);
            for (size_t l = 0; l < cfg.mrf_dilations.size(); ++l) {
                const std::string lp = "m.grouped.l" + std::to_string(l);
                ConvGeometry gd;
                gd.dilation = cfg.mrf_dilations[l];
                gd.out_len = 30;
                ConvGeometry gp;
                gp.out_len = 30;
                ag::Var a = ag::conv1d(cfg.activation(h), ag::constant(slice_rows(lp + ".dilated.w", g)),
                                       ag::constant(slice_rows(lp + ".dilated.b", g)), gd);
                a = ag::conv1d(cfg.activation(a), ag::constant(slice_rows(lp + ".plain.w", g)),
                               ag::constant(slice_rows(lp + ".plain.b", g)), gp);
                h = ag::add(h, a);
            }
            for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += h->value[i] / float(groups);
        }
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(acc[i]).epsilon(1e-5).scale(1e-3));
    }
}

TEST_CASE("MRF with zero branch weights is the identity") {
    for (VariantId v : {VariantId::v0, VariantId::v1, VariantId::v2}) {
        ParamStore ps;
        Initializer init(10, InitConfig{});
        GeneratorConfig cfg;
        cfg.variant = v;
        cfg.group_kernel = v == VariantId::v1 ? 11 : 3;
        Mrf mrf(ps, "m", 3, cfg, init);
        for (auto& [name, p] : ps.entries()) p->value.fill(0.0f);
        std::mt19937_64 rng(36);
        const Tensor x = test::random_tensor({2, 3, 16}, rng);
        ag::NoGradGuard ng;
        const Tensor y = mrf.forward(ag::constant(x), nullptr)->value;
        for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-7));
    }
}

TEST_CASE("v0 uses distinct branch kernels; v1 and v2 share one grouped kernel") {
    ParamStore ps;
    Initializer init(11, InitConfig{});
    GeneratorConfig c0;
    c0.variant = VariantId::v0;
    c0.mrf_dilations = {1};
    Mrf m0(ps, "a", 4, c0, init);
    CHECK(m0.branches() == 3);
    CHECK_FALSE(m0.grouped());
    CHECK(ps.get("a.b0.l0.dilated.w")->value.dim(2) == 3);
    CHECK(ps.get("a.b1.l0.dilated.w")->value.dim(2) == 7);
    CHECK(ps.get("a.b2.l0.dilated.w")->value.dim(2) == 11);
    // Parameter count oracle for a grouped stack of L layers, two convs each:
    // per conv G*C*C*K weights and G*C biases.
    for (auto [variant, K] : {std::pair{VariantId::v1, 11}, std::pair{VariantId::v2, 3}}) {
        ParamStore p2;
        const GeneratorConfig cfg = grouped_cfg(variant, 3, K);
        Mrf m(p2, "g", 4, cfg, init);
        const int64_t expect = int64_t(cfg.mrf_dilations.size()) * 2 * (3 * 4 * 4 * K + 3 * 4);
        CHECK(p2.count() == expect);
    }
    GeneratorConfig bad;
    bad.variant = VariantId::sym;
    CHECK_THROWS_AS(Mrf(ps, "bad", 4, bad, init), Error);
}

TEST_CASE("v2 is the smallest generator variant") {
    std::map<VariantId, int64_t> n;
    for (VariantId v : {VariantId::v0, VariantId::v1, VariantId::v2}) {
        CodecSpec s = hop300_spec(v);
        s.decoder.upsample_initial_channels = 64;
        s.decoder.min_channels = 4;
        CodecModel m(s, 5);
        n[v] = m.params().count("dec.");
    }
    CHECK(n[VariantId::v2] < n[VariantId::v0]);
    CHECK(n[VariantId::v2] < n[VariantId::v1]);
}

TEST_CASE("default initialization is normal(0, 0.01) and seeded") {
    CodecSpec s = hop300_spec(VariantId::v2);
    s.init = InitConfig{};
    CodecModel a(s, 7), b(s, 7), c(s, 8);
    CHECK(a.params().digest() == b.params().digest());
    CHECK(a.params().digest() != c.params().digest());
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    for (const auto& [name, p] : a.params().entries()) {
        if (name.size() < 2 || name.compare(name.size() - 2, 2, ".w") != 0) continue;
        for (float v : p->value.storage()) {
            sum += v;
            sq += double(v) * v;
            ++n;
        }
    }
    REQUIRE(n > 1000);
    CHECK(std::fabs(sum / n) < 1e-3);
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("forward passes are deterministic") {
    CodecModel m(test::tiny_spec(VariantId::v1), 12);
    std::mt19937_64 rng(37);
    const Waveform w = test::random_wave(rng, 240, 8000);
    CHECK(m.reconstruct(w).samples == m.reconstruct(w).samples);
}

TEST_CASE("config validation") {
    EncoderConfig e;
    CHECK(e.hop() == 300);
    e.downsample_factors = {2, 0};
    CHECK_THROWS_AS(e.validate(), Error);
    e = EncoderConfig{};
    e.code_dim = 0;
    CHECK_THROWS_AS(e.validate(), Error);
    GeneratorConfig g;
    g.variant = VariantId::v0;
    g.branch_kernels = {3, 3, 11};
    CHECK_THROWS_AS(g.validate(), Error);
    CHECK_THROWS_AS(parse_variant("v9"), Error);
    CHECK(parse_variant("v2") == VariantId::v2);
    CHECK(to_string(VariantId::v1) == "v1");
}

TEST_CASE("grouped kernel defaults follow the variant") {
    GeneratorConfig g;
    g.variant = VariantId::v1;
    CHECK(g.grouped_kernel() == 11);
    g.variant = VariantId::v2;
    CHECK(g.grouped_kernel() == 3);
    g.group_kernel = 5;
    CHECK(g.grouped_kernel() == 5);
    g.group_kernel = -1;
    CHECK_THROWS_AS(g.validate(), Error);
}
