#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ncodec/autograd.hpp"
#include "ncodec/container.hpp"

namespace ncodec {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
    double grad_clip = 0.0;  // global L2 norm clip, 0 disables
};

// Adam with bias correction over a fixed list of named parameters.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<std::pair<std::string, ag::Var>> params, AdamConfig cfg);

    // Applies one update from the accumulated gradients, then clears them.
    // Returns the pre-clip global gradient norm.
    double step();
    void zero_grad();

    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }
    int64_t steps() const { return t_; }

    // Moments are stored as "<prefix>.m.<param>" / "<prefix>.v.<param>".
    void save(Container& c, const std::string& prefix) const;
    void load(const Container& c, const std::string& prefix);

private:
    std::vector<std::pair<std::string, ag::Var>> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace ncodec
