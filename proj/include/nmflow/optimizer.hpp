// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nmflow/common.hpp"
#include "nmflow/model.hpp"

namespace nmflow {

struct AdamWConfig {
    double lr_peak = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;      // decoupled; applied to every parameter
    double warmup_fraction = 0.03;   // linear ramp to lr_peak
    double cosine_floor = 0.1;       // final lr as a fraction of peak
    double clip_norm = 0.0;          // global-norm clip; 0 disables

    void validate() const {
        if (lr_peak <= 0.0) throw ConfigError("adamw: lr_peak must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("adamw: betas must lie in [0,1)");
        if (eps <= 0.0) throw ConfigError("adamw: eps must be positive");
        if (weight_decay < 0.0) throw ConfigError("adamw: weight_decay must be nonnegative");
        if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
            throw ConfigError("adamw: warmup_fraction must lie in [0,1)");
        if (cosine_floor < 0.0 || cosine_floor > 1.0)
            throw ConfigError("adamw: cosine_floor must lie in [0,1]");
        if (clip_norm < 0.0) throw ConfigError("adamw: clip_norm must be nonnegative");
    }

    // Step-`step` learning rate (0-based) for a run of `total` steps: linear
    // warmup to the peak, then cosine down to cosine_floor * peak.
    double lr_at(std::size_t step, std::size_t total) const {
        if (total == 0) throw ConfigError("lr_at: total must be positive");
        const auto warmup =
            static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total)));
        if (step < warmup)
            return lr_peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
        const double floor_lr = cosine_floor * lr_peak;
        if (total <= warmup + 1) return lr_peak;
        const double progress =
            static_cast<double>(step - warmup) / static_cast<double>(total - 1 - warmup);
        return floor_lr + (lr_peak - floor_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
    }
};

// Scales all gradients by min(1, max_norm/||g||) over the concatenation of
// every parameter's gradient.
inline double clip_global_norm(std::vector<NamedParam>& params, double max_norm) {
    double sq = 0.0;
    for (auto& p : params)
        for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& p : params)
            for (double& g : p.tensor.grad()) g *= f;
    }
    return norm;
}

// Decoupled-weight-decay Adam with bias correction:
//   m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
//   w <- w - lr * ( (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps) + wd*w )
class AdamW {
public:
    AdamW(AdamWConfig cfg, const std::vector<NamedParam>& params) : cfg_(cfg) {
        cfg_.validate();
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.emplace_back(p.tensor.numel(), 0.0);
            v_.emplace_back(p.tensor.numel(), 0.0);
        }
    }

    void step(std::vector<NamedParam>& params, double lr) {
        if (params.size() != m_.size()) throw ConfigError("adamw: parameter count changed");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i].tensor.data();
            const auto& g = params[i].tensor.grad();
            auto& m = m_[i];
            auto& v = v_[i];
            if (g.size() != w.size()) throw ShapeError("adamw: grad/param size mismatch");
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]);
            }
        }
    }

    std::size_t t() const { return t_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace nmflow
