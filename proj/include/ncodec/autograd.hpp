#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ncodec/conv.hpp"
#include "ncodec/tensor.hpp"

// Minimal tape-free reverse-mode differentiation over Tensor values. Each op
// produces a Node that remembers its parents and a closure that pushes the
// node's gradient into them; backward() visits nodes in reverse topological
// order. Nodes whose parents do not require gradients are plain constants, so
// frozen sub-networks cost nothing on the backward pass.
namespace ncodec::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
    const Shape& shape() const { return value.shape(); }
};

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
// node that requires them. root must hold a single element.
void backward(const Var& root);

// Stop-gradient barrier: same value, no path back to x.
Var detach(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
Var neg(const Var& a);

Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var elu(const Var& x, float alpha = 1.0f);
Var tanh(const Var& x);
Var square(const Var& x);

Var mean(const Var& x);
Var sum(const std::vector<Var>& scalars);
Var l1_mean(const Var& a, const Var& b);
Var mse(const Var& a, const Var& b);

// x: [B, Cin, T], w: [Cout, Cin/groups, K], b: [Cout] or null.
Var conv1d(const Var& x, const Var& w, const Var& b, const ConvGeometry& geom);
// x: [B, Cin, N], w: [Cin, Cout, K]; output [B, Cout, out_len].
Var conv_transpose1d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t out_len);

// [B, C, T] -> [B, G*C, T] by stacking G copies along channels.
Var repeat_channels(const Var& x, int64_t groups);
// [B, G*C, T] -> [B, C, T], mean over the G channel groups.
Var group_mean(const Var& x, int64_t groups);
// y[t] = (x[2t] + x[2t+1]) / 2, length floor(T/2).
Var avg_pool2(const Var& x);
// [B, C, T] -> right-pad to a multiple of p -> [B*p, C, T/p] with
// y[b*p + w][c][h] = x[b][c][h*p + w].
Var period_fold(const Var& x, int64_t period);
Var reshape(const Var& x, Shape shape);

// Forward value is q; backward treats the op as identity in z.
Var straight_through(const Var& z, const Tensor& q);

// w = g * v / ||v|| with the norm taken per output channel (dim 0).
Var weight_norm(const Var& v, const Var& g);
// w = v / sigma, sigma estimated by one power iteration on the persistent
// vector u (updated in place when gradients are enabled).
Var spectral_norm(const Var& v, Tensor& u);

}  // namespace ncodec::ag
