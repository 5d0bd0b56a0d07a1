// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nmflow/ops.hpp"
#include "nmflow/tensor.hpp"

namespace nmflow {

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

// N:M structured sparsity: at most N nonzero weights in every aligned block of
// M consecutive weights along the reduction axis.
struct SparsityPattern {
    std::size_t n = 0;
    std::size_t m = 0;

    SparsityPattern() = default;
    SparsityPattern(std::size_t n_, std::size_t m_) : n(n_), m(m_) {
        if (n == 0 || m == 0 || n > m)
            throw ConfigError("pattern " + std::string(*this) + " invalid: need 1 <= n <= m");
    }

    double density() const { return static_cast<double>(n) / static_cast<double>(m); }
    bool is_dense() const { return n == m; }

    operator std::string() const { return std::to_string(n) + ":" + std::to_string(m); }
    std::string str() const { return static_cast<std::string>(*this); }

    friend bool operator==(const SparsityPattern& a, const SparsityPattern& b) {
        return a.n == b.n && a.m == b.m;
    }
};

// Parses "N:M" with both fields positive decimal integers; anything else is a
// configuration error.
inline SparsityPattern parse_pattern(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
        throw ConfigError("pattern '" + s + "' is not of the form N:M");
    auto parse_field = [&](const std::string& f) -> std::size_t {
        if (f.empty() || !std::all_of(f.begin(), f.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw ConfigError("pattern '" + s + "' is not of the form N:M");
        std::size_t v = 0;
        for (char c : f) {
            v = v * 10 + static_cast<std::size_t>(c - '0');
            if (v > 1'000'000) throw ConfigError("pattern '" + s + "' field too large");
        }
        return v;
    };
    std::size_t n = parse_field(s.substr(0, colon));
    std::size_t m = parse_field(s.substr(colon + 1));
    if (n == 0 || m == 0 || n > m)
        throw ConfigError("pattern '" + s + "' invalid: need 1 <= n <= m");
    return SparsityPattern(n, m);
}

// ---------------------------------------------------------------------------
// Mask computation
// ---------------------------------------------------------------------------

// Binary keep-mask for an N:M pattern. Blocks of M run contiguously along the
// last axis (the reduction axis of [out,in]-stored weights). Within each
// block the N largest-magnitude entries are kept; magnitude ties keep the
// lowest flat index, so the result is deterministic for any input.
inline std::vector<double> compute_nm_mask_data(const std::vector<double>& w, const Shape& shape,
                                                const SparsityPattern& p) {
    if (shape.empty()) throw ShapeError("nm_mask: rank-0 input");
    const std::size_t cols = shape.back();
    if (cols % p.m != 0)
        throw ConfigError("nm_mask: last dim " + std::to_string(cols) + " of " + shape_str(shape) +
                          " not divisible by block size " + std::to_string(p.m));
    const std::size_t total = numel(shape);
    std::vector<double> mask(total, 0.0);
    std::vector<std::size_t> idx(p.m);
    for (std::size_t base = 0; base < total; base += p.m) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(w[base + a]) > std::abs(w[base + b]);
        });
        for (std::size_t k = 0; k < p.n; ++k) mask[base + idx[k]] = 1.0;
    }
    return mask;
}

inline Tensor compute_nm_mask(const Tensor& w, const SparsityPattern& p) {
    return Tensor::from_data(w.shape(), compute_nm_mask_data(w.data(), w.shape(), p));
}

// ---------------------------------------------------------------------------
// Recipes and decay laws
// ---------------------------------------------------------------------------

enum class RecipeKind {
    Dense,          // no sparsification
    SrSte,          // masked forward, straight-through grad + decay-style regularizer
    MdgfLinear,     // mask-decay, multiplier 1 - k*j clamped at 0
    MdgfExp,        // mask-decay, multiplier exp(-k*j)
    SdgfStepwise,   // structure-decay, M fixed, N halves stage by stage
    SdgfGeometric,  // structure-decay, N:M scale halves stage by stage
};

inline std::string recipe_label(RecipeKind k) {
    switch (k) {
        case RecipeKind::Dense: return "dense";
        case RecipeKind::SrSte: return "sr-ste";
        case RecipeKind::MdgfLinear: return "mdgf-linear";
        case RecipeKind::MdgfExp: return "mdgf-exp";
        case RecipeKind::SdgfStepwise: return "sdgf-stepwise";
        case RecipeKind::SdgfGeometric: return "sdgf-geometric";
    }
    throw ConfigError("unknown recipe kind");
}

inline RecipeKind parse_recipe(const std::string& s) {
    for (RecipeKind k : {RecipeKind::Dense, RecipeKind::SrSte, RecipeKind::MdgfLinear,
                         RecipeKind::MdgfExp, RecipeKind::SdgfStepwise, RecipeKind::SdgfGeometric})
        if (recipe_label(k) == s) return k;
    throw ConfigError("unknown recipe '" + s +
                      "' (expect dense|sr-ste|mdgf-linear|mdgf-exp|sdgf-stepwise|sdgf-geometric)");
}

inline bool is_mask_decay(RecipeKind k) {
    return k == RecipeKind::MdgfLinear || k == RecipeKind::MdgfExp;
}
inline bool is_structure_decay(RecipeKind k) {
    return k == RecipeKind::SdgfStepwise || k == RecipeKind::SdgfGeometric;
}

struct RecipeConfig {
    RecipeKind kind = RecipeKind::Dense;
    SparsityPattern target{1, 1};

    // Mask-decay rates. Unset fields are resolved against the decay-phase
    // length: linear reaches 0 exactly at phase end, exponential reaches 1e-3.
    std::optional<double> k_tau;  // linear: multiplier = max(1 - k_tau*j, 0)
    std::optional<double> k_eta;  // exponential: multiplier = exp(-k_eta*j)

    std::size_t k_geo = 16;      // geometric schedule start scale (power of two)
    double lambda_w = 2e-4;      // sr-ste regularizer strength

    // Pruned-weight multiplier at decay-phase step j (0-based).
    double decay_factor(std::size_t j) const {
        switch (kind) {
            case RecipeKind::MdgfLinear: {
                if (!k_tau) throw ConfigError("mdgf-linear decay rate unresolved");
                return std::max(1.0 - *k_tau * static_cast<double>(j), 0.0);
            }
            case RecipeKind::MdgfExp: {
                if (!k_eta) throw ConfigError("mdgf-exp decay rate unresolved");
                return std::exp(-*k_eta * static_cast<double>(j));
            }
            default:
                throw ConfigError("decay_factor: recipe " + recipe_label(kind) +
                                  " has no pruned-weight decay");
        }
    }

    // Fills unset decay rates from the decay-phase length.
    void resolve(std::size_t decay_steps) {
        if (decay_steps == 0 && (kind != RecipeKind::Dense))
            throw ConfigError("recipe " + recipe_label(kind) + " needs a nonempty decay phase");
        const double L = static_cast<double>(decay_steps);
        if (kind == RecipeKind::MdgfLinear && !k_tau) k_tau = 1.0 / L;
        if (kind == RecipeKind::MdgfExp && !k_eta) k_eta = std::log(1e3) / L;
        if (kind == RecipeKind::SdgfGeometric) {
            if (k_geo == 0 || (k_geo & (k_geo - 1)) != 0)
                throw ConfigError("sdgf-geometric start scale " + std::to_string(k_geo) +
                                  " must be a power of two");
        }
    }
};

// ---------------------------------------------------------------------------
// Structure-decay schedules
// ---------------------------------------------------------------------------

// Stepwise: hold M, walk N down. First stage densifies only one slot
// ((m-1):m), then N halves until it reaches the target. Requires the target
// to be reachable by halving, i.e. m = n * 2^k.
inline std::vector<SparsityPattern> stepwise_schedule(const SparsityPattern& target) {
    if (target.is_dense())
        throw ConfigError("stepwise schedule needs a sparse target, got " + target.str());
    std::size_t ratio = target.m / target.n;
    if (target.n * ratio != target.m || (ratio & (ratio - 1)) != 0)
        throw ConfigError("stepwise schedule needs m = n*2^k, got " + target.str());
    std::vector<SparsityPattern> stages;
    if (target.n + 1 == target.m) {
        // (m-1):m is already the target; single stage.
        stages.push_back(target);
        return stages;
    }
    stages.emplace_back(target.m - 1, target.m);
    for (std::size_t n = target.m / 2; n > target.n; n /= 2) stages.emplace_back(n, target.m);
    stages.push_back(target);
    return stages;
}

// Geometric: scale both N and M by k, then halve the scale each stage. The
// density is the target's from the very first stage; only the block
// granularity tightens.
inline std::vector<SparsityPattern> geometric_schedule(const SparsityPattern& target,
                                                       std::size_t k_geo = 16) {
    if (target.is_dense())
        throw ConfigError("geometric schedule needs a sparse target, got " + target.str());
    if (k_geo == 0 || (k_geo & (k_geo - 1)) != 0)
        throw ConfigError("geometric schedule scale " + std::to_string(k_geo) +
                          " must be a power of two");
    std::vector<SparsityPattern> stages;
    for (std::size_t k = k_geo; k >= 1; k /= 2) stages.emplace_back(target.n * k, target.m * k);
    return stages;
}

// Splits `total` steps into `stages` contiguous intervals as evenly as
// possible; any remainder goes to the front intervals.
inline std::vector<std::size_t> interval_partition(std::size_t total, std::size_t stages) {
    if (stages == 0) throw ConfigError("interval_partition: zero stages");
    if (stages > total)
        throw ConfigError("interval_partition: " + std::to_string(stages) + " stages exceed " +
                          std::to_string(total) + " steps");
    std::vector<std::size_t> out(stages, total / stages);
    for (std::size_t i = 0; i < total % stages; ++i) ++out[i];
    return out;
}

// ---------------------------------------------------------------------------
// Forward transforms and gradient refinement
// ---------------------------------------------------------------------------

// Decayed-mask forward: w_tilde = w .* (mask + delta*(1-mask)). Kept weights
// pass through untouched; pruned weights are scaled by delta. Differentiable
// in w, so pruned weights keep receiving (delta-scaled) gradient.
inline Tensor apply_decayed_mask(const Tensor& w, const Tensor& mask, double delta) {
    if (!(delta >= 0.0 && delta <= 1.0))
        throw ConfigError("decay factor " + detail::fmt_g17(delta) + " outside [0,1]");
    std::vector<double> mult(mask.data());
    for (double& m : mult) m = m + delta * (1.0 - m);
    return hadamard(w, Tensor::from_data(w.shape(), std::move(mult)));
}

// Gradient refinement for the straight-through recipe: pulls pruned weights
// toward zero in proportion to their magnitude. Applied to raw gradients
// before the optimizer runs:  g <- g + lambda * (1-mask) .* w.
inline void sr_ste_refine_grad(std::vector<double>& grad, const std::vector<double>& w,
                               const std::vector<double>& mask, double lambda) {
    if (grad.size() != w.size() || mask.size() != w.size())
        throw ShapeError("sr_ste_refine_grad: size mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += lambda * (1.0 - mask[i]) * w[i];
}

}  // namespace nmflow
