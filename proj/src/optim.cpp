#include "ncodec/optim.hpp"

#include <cmath>

#include "ncodec/error.hpp"

namespace ncodec {

Adam::Adam(std::vector<std::pair<std::string, ag::Var>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.emplace_back(p.second->shape());
        v_.emplace_back(p.second->shape());
    }
}

double Adam::step() {
    double sq = 0.0;
    for (auto& p : params_)
        for (float g : p.second->ensure_grad().values()) sq += double(g) * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw Error(ErrorKind::state, "non-finite gradient norm");
    const double clip = cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
    const float step = static_cast<float>(cfg_.lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2), fclip = static_cast<float>(clip);
    const float eps = static_cast<float>(cfg_.eps);
    for (size_t i = 0; i < params_.size(); ++i) {
        float* w = params_[i].second->value.data();
        float* g = params_[i].second->grad.data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        const int64_t n = params_[i].second->value.numel();
        for (int64_t j = 0; j < n; ++j) {
            const float gj = g[j] * fclip;
            m[j] = fb1 * m[j] + (1.0f - fb1) * gj;
            v[j] = fb2 * v[j] + (1.0f - fb2) * gj * gj;
            w[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
            g[j] = 0.0f;
        }
    }
    return norm;
}

void Adam::zero_grad() {
    for (auto& p : params_) p.second->ensure_grad().fill(0.0f);
}

void Adam::save(Container& c, const std::string& prefix) const {
    for (size_t i = 0; i < params_.size(); ++i) {
        c.add(prefix + ".m." + params_[i].first, m_[i]);
        c.add(prefix + ".v." + params_[i].first, v_[i]);
    }
    c.meta["optimizers"][prefix] = {{"steps", t_}, {"lr", cfg_.lr}};
}

void Adam::load(const Container& c, const std::string& prefix) {
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto& m = c.require(prefix + ".m." + params_[i].first);
        const auto& v = c.require(prefix + ".v." + params_[i].first);
        if (m.shape != m_[i].shape() || v.shape != v_[i].shape())
            throw Error(ErrorKind::compatibility, "optimizer state shape mismatch for " + params_[i].first);
        m_[i] = Tensor(m.shape, m.f32);
        v_[i] = Tensor(v.shape, v.f32);
    }
    const auto& meta = c.meta.at("optimizers").at(prefix);
    t_ = meta.at("steps").get<int64_t>();
    cfg_.lr = meta.at("lr").get<double>();
}

}  // namespace ncodec
