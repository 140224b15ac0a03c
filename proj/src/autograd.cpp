#include "ncodec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ncodec/error.hpp"

namespace ncodec::ag {

namespace {

thread_local bool g_grad_enabled = true;

bool any_requires_grad(const std::vector<Var>& parents) {
    for (const auto& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

void check_same(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw Error(ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_str(a->shape()) + " vs " +
                                    shape_str(b->shape()));
}

template <class F, class G>
Var unary(const Var& x, F&& f, G&& dfdx) {
    Tensor out(x->shape());
    const float* xv = x->value.data();
    float* ov = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = f(xv[i]);
    return make_op(std::move(out), {x}, [x, dfdx](Node& self) {
        if (!x->requires_grad) return;
        float* gx = x->ensure_grad().data();
        const float* g = self.grad.data();
        const float* xv = x->value.data();
        const float* yv = self.value.data();
        for (int64_t i = 0; i < self.value.numel(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
    });
}

}  // namespace

Tensor& Node::ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape(), 0.0f);
    return grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled && any_requires_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) throw Error(ErrorKind::shape, "backward: root must be a scalar");
    if (!root->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && p->backward_fn && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->grad.numel() == 0) continue;
        n->backward_fn(*n);
    }
    // Release interior gradients; leaves keep theirs.
    for (Node* n : order) n->grad = Tensor();
}

Var detach(const Var& x) { return constant(x->value); }

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor out(a->shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        for (const Var& p : {a, b}) {
            if (!p->requires_grad) continue;
            float* g = p->ensure_grad().data();
            for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor out(a->shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            float* g = a->ensure_grad().data();
            for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
        }
        if (b->requires_grad) {
            float* g = b->ensure_grad().data();
            for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor out(a->shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            float* g = a->ensure_grad().data();
            for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            float* g = b->ensure_grad().data();
            for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, float s) {
    return unary(a, [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Var add_scalar(const Var& a, float s) {
    return unary(a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Var neg(const Var& a) { return scale(a, -1.0f); }

Var relu(const Var& x) {
    return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var leaky_relu(const Var& x, float slope) {
    return unary(
        x, [slope](float v) { return v > 0.0f ? v : slope * v; },
        [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Var elu(const Var& x, float alpha) {
    return unary(
        x, [alpha](float v) { return v > 0.0f ? v : alpha * std::expm1(v); },
        [alpha](float v, float y) { return v > 0.0f ? 1.0f : y + alpha; });
}

Var tanh(const Var& x) {
    return unary(x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Var square(const Var& x) {
    return unary(x, [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Var mean(const Var& x) {
    double s = 0.0;
    for (float v : x->value.values()) s += v;
    const int64_t n = x->value.numel();
    return make_op(Tensor::scalar(static_cast<float>(s / n)), {x}, [x, n](Node& self) {
        if (!x->requires_grad) return;
        const float g = self.grad[0] / static_cast<float>(n);
        float* gx = x->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

Var sum(const std::vector<Var>& scalars) {
    double s = 0.0;
    for (const auto& v : scalars) s += v->value.item();
    return make_op(Tensor::scalar(static_cast<float>(s)), scalars, [scalars](Node& self) {
        for (const auto& p : scalars)
            if (p->requires_grad) p->ensure_grad()[0] += self.grad[0];
    });
}

Var l1_mean(const Var& a, const Var& b) {
    check_same(a, b, "l1_mean");
    const int64_t n = a->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::fabs(a->value[i] - b->value[i]);
    return make_op(Tensor::scalar(static_cast<float>(s / n)), {a, b}, [a, b, n](Node& self) {
        const float g = self.grad[0] / static_cast<float>(n);
        for (int sign = 0; sign < 2; ++sign) {
            const Var& p = sign ? b : a;
            if (!p->requires_grad) continue;
            float* gp = p->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) {
                const float d = a->value[i] - b->value[i];
                const float sg = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
                gp[i] += (sign ? -sg : sg) * g;
            }
        }
    });
}

Var mse(const Var& a, const Var& b) {
    check_same(a, b, "mse");
    const int64_t n = a->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a->value[i] - b->value[i];
        s += d * d;
    }
    return make_op(Tensor::scalar(static_cast<float>(s / n)), {a, b}, [a, b, n](Node& self) {
        const float g = 2.0f * self.grad[0] / static_cast<float>(n);
        if (a->requires_grad) {
            float* gp = a->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) gp[i] += g * (a->value[i] - b->value[i]);
        }
        if (b->requires_grad) {
            float* gp = b->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) gp[i] -= g * (a->value[i] - b->value[i]);
        }
    });
}

Var conv1d(const Var& x, const Var& w, const Var& b, const ConvGeometry& geom) {
    const auto& xs = x->shape();
    const auto& ws = w->shape();
    if (xs.size() != 3 || ws.size() != 3 || xs[1] != ws[1] * geom.groups)
        throw Error(ErrorKind::shape, "conv1d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws) +
                                    " groups " + std::to_string(geom.groups));
    if (b && b->value.numel() != ws[0]) throw Error(ErrorKind::shape, "conv1d: bias size mismatch");
    const int64_t B = xs[0], Cin = xs[1], T = xs[2], Cout = ws[0], K = ws[2];
    Tensor out({B, Cout, geom.out_len});
    for (int64_t i = 0; i < B; ++i)
        conv1d_forward(x->value.data() + i * Cin * T, Cin, T, w->value.data(), Cout, K, b ? b->value.data() : nullptr,
                       geom, out.data() + i * Cout * geom.out_len);
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [x, w, b, geom, B, Cin, T, Cout, K](Node& self) {
        float* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
        float* gw = w->requires_grad ? w->ensure_grad().data() : nullptr;
        float* gb = (b && b->requires_grad) ? b->ensure_grad().data() : nullptr;
        for (int64_t i = 0; i < B; ++i)
            conv1d_backward(x->value.data() + i * Cin * T, Cin, T, w->value.data(), Cout, K, geom,
                            self.grad.data() + i * Cout * geom.out_len, gx ? gx + i * Cin * T : nullptr, gw, gb);
    });
}

Var conv_transpose1d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t out_len) {
    const auto& xs = x->shape();
    const auto& ws = w->shape();
    if (xs.size() != 3 || ws.size() != 3 || xs[1] != ws[0])
        throw Error(ErrorKind::shape, "conv_transpose1d: input " + shape_str(xs) + " incompatible with weight " +
                                    shape_str(ws));
    const int64_t B = xs[0], Cin = xs[1], N = xs[2], Cout = ws[1], K = ws[2];
    Tensor out({B, Cout, out_len});
    for (int64_t i = 0; i < B; ++i)
        conv_transpose1d_forward(x->value.data() + i * Cin * N, Cin, N, w->value.data(), Cout, K,
                                 b ? b->value.data() : nullptr, stride, out_len, out.data() + i * Cout * out_len);
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [x, w, b, stride, out_len, B, Cin, N, Cout, K](Node& self) {
        float* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
        float* gw = w->requires_grad ? w->ensure_grad().data() : nullptr;
        float* gb = (b && b->requires_grad) ? b->ensure_grad().data() : nullptr;
        for (int64_t i = 0; i < B; ++i)
            conv_transpose1d_backward(x->value.data() + i * Cin * N, Cin, N, w->value.data(), Cout, K, stride, out_len,
                                      self.grad.data() + i * Cout * out_len, gx ? gx + i * Cin * N : nullptr, gw, gb);
    });
}

Var repeat_channels(const Var& x, int64_t groups) {
    const int64_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);
    Tensor out({B, groups * C, T});
    for (int64_t i = 0; i < B; ++i)
        for (int64_t g = 0; g < groups; ++g)
            std::copy_n(x->value.row(i, 0), C * T, out.row(i, g * C));
    return make_op(std::move(out), {x}, [x, groups, B, C, T](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < B; ++i)
            for (int64_t g = 0; g < groups; ++g) {
                const float* src = self.grad.row(i, g * C);
                float* dst = gx.row(i, 0);
                for (int64_t j = 0; j < C * T; ++j) dst[j] += src[j];
            }
    });
}

Var group_mean(const Var& x, int64_t groups) {
    const int64_t B = x->value.dim(0), GC = x->value.dim(1), T = x->value.dim(2);
    if (GC % groups) throw Error(ErrorKind::shape, "group_mean: channels not divisible by groups");
    const int64_t C = GC / groups;
    const float inv = 1.0f / static_cast<float>(groups);
    Tensor out({B, C, T});
    for (int64_t i = 0; i < B; ++i) {
        float* dst = out.row(i, 0);
        for (int64_t g = 0; g < groups; ++g) {
            const float* src = x->value.row(i, g * C);
            for (int64_t j = 0; j < C * T; ++j) dst[j] += src[j];
        }
        for (int64_t j = 0; j < C * T; ++j) dst[j] *= inv;
    }
    return make_op(std::move(out), {x}, [x, groups, B, C, T, inv](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < B; ++i)
            for (int64_t g = 0; g < groups; ++g) {
                const float* src = self.grad.row(i, 0);
                float* dst = gx.row(i, g * C);
                for (int64_t j = 0; j < C * T; ++j) dst[j] += src[j] * inv;
            }
    });
}

Var avg_pool2(const Var& x) {
    const int64_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2), H = T / 2;
    if (H < 1) throw Error(ErrorKind::shape, "avg_pool2: input too short (" + std::to_string(T) + " samples)");
    Tensor out({B, C, H});
    for (int64_t i = 0; i < B; ++i)
        for (int64_t c = 0; c < C; ++c) {
            const float* src = x->value.row(i, c);
            float* dst = out.row(i, c);
            for (int64_t t = 0; t < H; ++t) dst[t] = 0.5f * (src[2 * t] + src[2 * t + 1]);
        }
    return make_op(std::move(out), {x}, [x, B, C, H](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < B; ++i)
            for (int64_t c = 0; c < C; ++c) {
                const float* g = self.grad.row(i, c);
                float* dst = gx.row(i, c);
                for (int64_t t = 0; t < H; ++t) {
                    dst[2 * t] += 0.5f * g[t];
                    dst[2 * t + 1] += 0.5f * g[t];
                }
            }
    });
}

Var period_fold(const Var& x, int64_t period) {
    if (period < 1) throw Error(ErrorKind::shape, "period_fold: period must be >= 1");
    const int64_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);
    const int64_t H = (T + period - 1) / period;
    Tensor out({B * period, C, H});
    for (int64_t i = 0; i < B; ++i)
        for (int64_t c = 0; c < C; ++c) {
            const float* src = x->value.row(i, c);
            for (int64_t t = 0; t < T; ++t) out.at(i * period + t % period, c, t / period) = src[t];
        }
    return make_op(std::move(out), {x}, [x, period, B, C, T](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < B; ++i)
            for (int64_t c = 0; c < C; ++c) {
                float* dst = gx.row(i, c);
                for (int64_t t = 0; t < T; ++t) dst[t] += self.grad.at(i * period + t % period, c, t / period);
            }
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make_op(std::move(out), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        float* gx = x->ensure_grad().data();
        for (int64_t i = 0; i < self.grad.numel(); ++i) gx[i] += self.grad[i];
    });
}

Var straight_through(const Var& z, const Tensor& q) {
    if (!z->value.same_shape(q)) throw Error(ErrorKind::shape, "straight_through: shape mismatch");
    return make_op(q, {z}, [z](Node& self) {
        if (!z->requires_grad) return;
        float* gz = z->ensure_grad().data();
        for (int64_t i = 0; i < self.grad.numel(); ++i) gz[i] += self.grad[i];
    });
}

Var weight_norm(const Var& v, const Var& g) {
    const int64_t O = v->value.dim(0), per = v->value.numel() / O;
    if (g->value.numel() != O) throw Error(ErrorKind::shape, "weight_norm: gain size mismatch");
    Tensor out(v->shape());
    std::vector<float> norms(O);
    for (int64_t o = 0; o < O; ++o) {
        const float* vr = v->value.data() + o * per;
        double s = 0.0;
        for (int64_t j = 0; j < per; ++j) s += double(vr[j]) * vr[j];
        norms[o] = static_cast<float>(std::sqrt(std::max(s, 1e-24)));
        const float f = g->value[o] / norms[o];
        for (int64_t j = 0; j < per; ++j) out[o * per + j] = vr[j] * f;
    }
    return make_op(std::move(out), {v, g}, [v, g, O, per, norms](Node& self) {
        for (int64_t o = 0; o < O; ++o) {
            const float* vr = v->value.data() + o * per;
            const float* gr = self.grad.data() + o * per;
            double gv = 0.0;
            for (int64_t j = 0; j < per; ++j) gv += double(gr[j]) * vr[j];
            const float n = norms[o];
            if (g->requires_grad) g->ensure_grad()[o] += static_cast<float>(gv / n);
            if (v->requires_grad) {
                float* gvv = v->ensure_grad().data() + o * per;
                const float a = g->value[o] / n;
                const float c = static_cast<float>(gv / (double(n) * n));
                for (int64_t j = 0; j < per; ++j) gvv[j] += a * (gr[j] - c * vr[j]);
            }
        }
    });
}

Var spectral_norm(const Var& v, Tensor& u) {
    const int64_t O = v->value.dim(0), per = v->value.numel() / O;
    if (u.numel() != O) throw Error(ErrorKind::shape, "spectral_norm: power-iteration vector size mismatch");
    const float* W = v->value.data();
    std::vector<double> vv(per, 0.0), uu(O, 0.0);
    for (int64_t o = 0; o < O; ++o)
        for (int64_t j = 0; j < per; ++j) vv[j] += double(W[o * per + j]) * u[o];
    double nv = 0.0;
    for (double a : vv) nv += a * a;
    nv = std::sqrt(std::max(nv, 1e-24));
    for (double& a : vv) a /= nv;
    for (int64_t o = 0; o < O; ++o) {
        double s = 0.0;
        for (int64_t j = 0; j < per; ++j) s += double(W[o * per + j]) * vv[j];
        uu[o] = s;
    }
    double nu = 0.0;
    for (double a : uu) nu += a * a;
    nu = std::sqrt(std::max(nu, 1e-24));
    for (double& a : uu) a /= nu;
    double sigma = 0.0;
    for (int64_t o = 0; o < O; ++o)
        for (int64_t j = 0; j < per; ++j) sigma += uu[o] * W[o * per + j] * vv[j];
    sigma = std::max(sigma, 1e-12);
    if (grad_enabled())
        for (int64_t o = 0; o < O; ++o) u[o] = static_cast<float>(uu[o]);
    Tensor out(v->shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<float>(W[i] / sigma);
    return make_op(std::move(out), {v}, [v, O, per, uu, vv, sigma](Node& self) {
        if (!v->requires_grad) return;
        const float* W = v->value.data();
        const float* G = self.grad.data();
        double gw = 0.0;
        for (int64_t i = 0; i < O * per; ++i) gw += double(G[i]) * W[i];
        float* gv = v->ensure_grad().data();
        for (int64_t o = 0; o < O; ++o)
            for (int64_t j = 0; j < per; ++j) {
                const int64_t i = o * per + j;
                gv[i] += static_cast<float>(G[i] / sigma - gw / (sigma * sigma) * uu[o] * vv[j]);
            }
    });
}

}  // namespace ncodec::ag
