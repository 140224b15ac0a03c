#include "doctest.h"
#include "ncodec/autograd.hpp"
#include "ncodec/error.hpp"
#include "test_util.hpp"

using namespace ncodec;

namespace {

// Checks d(loss)/d(x) for a handful of elements against central differences.
void check_grad(const std::function<ag::Var(const ag::Var&)>& loss, Tensor init, double tol = 2e-3) {
    ag::Var x = ag::parameter(std::move(init));
    ag::backward(loss(x));
    auto f = [&] {
        ag::NoGradGuard ng;
        return double(loss(x)->value.item());
    };
    const int64_t n = x->value.numel();
    for (int64_t i = 0; i < n; i += std::max<int64_t>(1, n / 7)) {
        const double fd = test::finite_diff(f, x->value[i], 1e-2);
        CHECK(x->grad[i] == doctest::Approx(fd).epsilon(tol).scale(1e-2));
    }
}

}  // namespace

TEST_CASE("elementwise ops differentiate correctly") {
    std::mt19937_64 rng(21);
    const Tensor probe = test::random_tensor({2, 3, 5}, rng);
    auto weigh = [&](const ag::Var& y) { return ag::mean(ag::mul(y, ag::constant(probe))); };
    check_grad([&](const ag::Var& x) { return weigh(ag::tanh(x)); }, test::random_tensor({2, 3, 5}, rng));
    check_grad([&](const ag::Var& x) { return weigh(ag::elu(x, 1.0f)); }, test::random_tensor({2, 3, 5}, rng));
    check_grad([&](const ag::Var& x) { return weigh(ag::leaky_relu(x, 0.2f)); }, test::random_tensor({2, 3, 5}, rng));
    check_grad([&](const ag::Var& x) { return weigh(ag::square(x)); }, test::random_tensor({2, 3, 5}, rng));
    check_grad([&](const ag::Var& x) { return weigh(ag::add_scalar(ag::scale(x, 3.0f), 1.0f)); },
               test::random_tensor({2, 3, 5}, rng));
    check_grad([&](const ag::Var& x) { return weigh(ag::sub(ag::mul(x, x), ag::neg(x))); },
               test::random_tensor({2, 3, 5}, rng));
}

TEST_CASE("losses and reshaping ops differentiate correctly") {
    std::mt19937_64 rng(22);
    const Tensor target = test::random_tensor({2, 4, 6}, rng);
    check_grad([&](const ag::Var& x) { return ag::mse(x, ag::constant(target)); }, test::random_tensor({2, 4, 6}, rng));
    check_grad([&](const ag::Var& x) { return ag::l1_mean(x, ag::constant(target)); }, test::random_tensor({2, 4, 6}, rng));
    const Tensor p1 = test::random_tensor({6, 4, 2}, rng);
    check_grad([&](const ag::Var& x) { return ag::mean(ag::mul(ag::period_fold(x, 3), ag::constant(p1))); },
               test::random_tensor({2, 4, 5}, rng));
    const Tensor p2 = test::random_tensor({2, 4, 3}, rng);
    check_grad([&](const ag::Var& x) { return ag::mean(ag::mul(ag::avg_pool2(x), ag::constant(p2))); },
               test::random_tensor({2, 4, 7}, rng));
    const Tensor p3 = test::random_tensor({1, 6, 4}, rng);
    check_grad([&](const ag::Var& x) { return ag::mean(ag::mul(ag::repeat_channels(x, 3), ag::constant(p3))); },
               test::random_tensor({1, 2, 4}, rng));
    const Tensor p4 = test::random_tensor({1, 2, 4}, rng);
    check_grad([&](const ag::Var& x) { return ag::mean(ag::mul(ag::group_mean(x, 3), ag::constant(p4))); },
               test::random_tensor({1, 6, 4}, rng));
}

TEST_CASE("forward values of structural ops") {
    Tensor x({1, 1, 7}, std::vector<float>{0, 1, 2, 3, 4, 5, 6});
    const Tensor f = ag::period_fold(ag::constant(x), 3)->value;
    REQUIRE(f.shape() == Shape{3, 1, 3});
    // Row w holds samples w, w+3, w+6 with zero right-padding.
    CHECK(f.storage() == std::vector<float>{0, 3, 6, 1, 4, 0, 2, 5, 0});
    const Tensor p = ag::avg_pool2(ag::constant(x))->value;
    CHECK(p.storage() == std::vector<float>{0.5f, 2.5f, 4.5f});
    const Tensor r = ag::repeat_channels(ag::constant(x), 2)->value;
    CHECK(r.shape() == Shape{1, 2, 7});
    const Tensor m = ag::group_mean(ag::constant(r), 2)->value;
    CHECK(m.storage() == x.storage());
}

TEST_CASE("straight-through passes gradients as identity") {
    ag::Var z = ag::parameter(Tensor({1, 1, 3}, std::vector<float>{0.1f, 0.2f, 0.3f}));
    const Tensor q({1, 1, 3}, std::vector<float>{1.0f, 2.0f, 3.0f});
    ag::Var y = ag::straight_through(z, q);
    CHECK(y->value.storage() == q.storage());
    ag::backward(ag::mean(ag::scale(y, 3.0f)));
    for (int i = 0; i < 3; ++i) CHECK(z->grad[i] == doctest::Approx(1.0));
}

TEST_CASE("detach and no-grad stop gradient flow") {
    ag::Var a = ag::parameter(Tensor({1}, std::vector<float>{2.0f}));
    ag::Var b = ag::parameter(Tensor({1}, std::vector<float>{3.0f}));
    ag::Var loss = ag::add(ag::mul(a, b), ag::square(ag::detach(a)));
    ag::backward(loss);
    CHECK(a->grad[0] == doctest::Approx(3.0));
    CHECK(b->grad[0] == doctest::Approx(2.0));
    {
        ag::NoGradGuard ng;
        CHECK_FALSE(ag::grad_enabled());
        ag::Var c = ag::mul(a, b);
        CHECK_FALSE(c->requires_grad);
    }
    CHECK(ag::grad_enabled());
}

TEST_CASE("gradients accumulate over shared subexpressions") {
    ag::Var a = ag::parameter(Tensor({1}, std::vector<float>{1.5f}));
    ag::Var s = ag::mul(a, a);
    ag::backward(ag::add(s, s));
    CHECK(a->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("shape mismatches throw") {
    ag::Var a = ag::constant(Tensor({2, 3}));
    ag::Var b = ag::constant(Tensor({3, 2}));
    CHECK_THROWS_AS(ag::add(a, b), Error);
    CHECK_THROWS_AS(ag::backward(ag::parameter(Tensor({2}))), Error);
}
