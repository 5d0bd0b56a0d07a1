// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nmflow/common.hpp"
#include "nmflow/phases.hpp"
#include "nmflow/sparsity.hpp"

namespace nmflow {

// ---------------------------------------------------------------------------
// Analytic per-image compute/parameter model for an encoder transformer.
//
// Conventions (reverse-engineered from the reference tables and documented in
// the README):
//   - 1 MAC = 2 FLOPs; every figure below is one image (batch 1).
//   - flops fields are giga-FLOPs: 2 * (matmul MAC count) * layers / 1e9.
//   - weight sparsity scales the owning operator's FLOPs linearly by density;
//     the attention einsums (logit, attend) touch activations only and never
//     scale.
//   - parameter "MB" figures are count/1e6, matching the reference tables'
//     numerals (their byte label does not survive a 4-bytes-per-float check;
//     the counts do).
// ---------------------------------------------------------------------------

struct CostSpec {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t embed_dim = 0;
    std::size_t ff_dim = 0;
    std::size_t seq_len = 0;

    // Per-group density fractions in (0,1].
    double s_ff = 1.0;
    double s_q = 1.0;
    double s_k = 1.0;
    double s_v = 1.0;
    double s_o = 1.0;

    static CostSpec vit_base() {
        CostSpec s;
        s.layers = 12;
        s.heads = 12;
        s.embed_dim = 768;
        s.ff_dim = 3072;
        s.seq_len = 196;  // 224/16 patches squared
        return s;
    }

    CostSpec with_ff(double density) const {
        CostSpec s = *this;
        s.s_ff = density;
        return s;
    }
    CostSpec with_qkvo(double density) const {
        CostSpec s = *this;
        s.s_q = s.s_k = s.s_v = s.s_o = density;
        return s;
    }
    CostSpec with_qk(double density) const {
        CostSpec s = *this;
        s.s_q = s.s_k = density;
        return s;
    }

    void validate() const {
        if (layers == 0 || heads == 0 || embed_dim == 0 || ff_dim == 0 || seq_len == 0)
            throw ConfigError("cost spec: all dims must be positive");
        if (embed_dim % heads != 0)
            throw ConfigError("cost spec: embed_dim " + std::to_string(embed_dim) +
                              " not divisible by heads " + std::to_string(heads));
        for (double d : {s_ff, s_q, s_k, s_v, s_o})
            if (!(d > 0.0 && d <= 1.0))
                throw ConfigError("cost spec: density " + std::to_string(d) + " outside (0,1]");
    }
};

struct CostBreakdown {
    // Effective (density-scaled) giga-FLOPs per operator, summed over layers.
    double flops_q = 0, flops_k = 0, flops_v = 0, flops_o = 0;
    double flops_logit = 0, flops_attend = 0;
    double flops_ff1 = 0, flops_ff2 = 0;

    double flops_sa = 0;            // q+k+v+o+logit+attend, density-scaled
    double flops_ff = 0;            // dense FF reference (both matmuls)
    double flops_ff_effective = 0;  // flops_ff * s_ff
    double flops_total = 0;         // flops_sa + flops_ff_effective

    std::size_t params_projections = 0;  // dense counts
    std::size_t params_ff = 0;
    double params_projections_mb = 0;  // count / 1e6
    double params_ff_mb = 0;
    double params_projections_effective = 0;  // density-scaled counts
    double params_ff_effective = 0;
};

inline CostBreakdown compute_cost(const CostSpec& spec) {
    spec.validate();
    const double L = static_cast<double>(spec.layers);
    const double E = static_cast<double>(spec.embed_dim);
    const double F = static_cast<double>(spec.ff_dim);
    const double S = static_cast<double>(spec.seq_len);
    const double giga = 1e-9;
    // One projection is an S x E by E x E matmul; the attention einsums
    // contract over head dims and sum to S*S*E MACs apiece across heads.
    const double proj = 2.0 * S * E * E * L * giga;
    const double einsum = 2.0 * S * S * E * L * giga;
    const double ff_mat = 2.0 * S * E * F * L * giga;

    CostBreakdown b;
    b.flops_q = proj * spec.s_q;
    b.flops_k = proj * spec.s_k;
    b.flops_v = proj * spec.s_v;
    b.flops_o = proj * spec.s_o;
    b.flops_logit = einsum;
    b.flops_attend = einsum;
    b.flops_ff1 = ff_mat * spec.s_ff;
    b.flops_ff2 = ff_mat * spec.s_ff;

    b.flops_sa = b.flops_q + b.flops_k + b.flops_v + b.flops_o + b.flops_logit + b.flops_attend;
    b.flops_ff = 2.0 * ff_mat;
    b.flops_ff_effective = b.flops_ff1 + b.flops_ff2;
    b.flops_total = b.flops_sa + b.flops_ff_effective;

    b.params_projections = 4 * spec.embed_dim * spec.embed_dim * spec.layers;
    b.params_ff = 2 * spec.embed_dim * spec.ff_dim * spec.layers;
    b.params_projections_mb = static_cast<double>(b.params_projections) / 1e6;
    b.params_ff_mb = static_cast<double>(b.params_ff) / 1e6;
    const double proj_count = static_cast<double>(spec.embed_dim * spec.embed_dim * spec.layers);
    b.params_projections_effective = proj_count * (spec.s_q + spec.s_k + spec.s_v + spec.s_o);
    b.params_ff_effective = static_cast<double>(b.params_ff) * spec.s_ff;
    return b;
}

// The canonical FF-sparsity sweep: dense, then 1:2 down to 1:128.
struct FfSweepRow {
    std::string label;
    double s_ff;
    double flops_sa;
    double flops_ff_effective;
    double flops_total;
};

inline std::vector<FfSweepRow> ff_sparsity_sweep(const CostSpec& base) {
    struct Entry {
        const char* label;
        double density;
    };
    static const Entry entries[] = {
        {"dense", 1.0},         {"1:2", 0.5},     {"1:4", 0.25},      {"1:8", 0.125},
        {"1:16", 0.0625},       {"1:32", 0.03125}, {"1:128", 0.0078125},
    };
    std::vector<FfSweepRow> rows;
    for (const auto& e : entries) {
        CostBreakdown b = compute_cost(base.with_ff(e.density));
        rows.push_back({e.label, e.density, b.flops_sa, b.flops_ff_effective, b.flops_total});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Whole-run training cost
// ---------------------------------------------------------------------------

// Giga-FLOPs for a full training run under `recipe` and `plan`. Per step the
// cost is `multiplier` x forward FLOPs at that step's effective density
// (multiplier 3 = forward + 2x backward; 2 also accepted).
//
// Density-over-time conventions (documented assumptions):
//   - Sparse groups are those the spec marks with density < 1; each must match
//     the recipe's target density.
//   - Dense phase: everything dense, all recipes.
//   - Decay phase: structure-decay recipes run each stage of the pattern
//     schedule at that stage's density over interval_partition; mask-decay
//     recipes compute with dense-valued decayed multipliers, so no savings;
//     the straight-through baseline keeps dense weights/gradients throughout
//     and is counted at dense-equivalent compute.
//   - Fine-tune phase: frozen binary target mask, so mask-decay and
//     structure-decay recipes run at target density; the straight-through
//     baseline stays dense-equivalent.
// Elementwise mask/regularizer work is negligible next to the matmuls and is
// excluded.
inline double training_flops(const CostSpec& spec, const RecipeConfig& recipe, const PhasePlan& plan,
                             int multiplier = 3) {
    spec.validate();
    plan.validate();
    if (multiplier != 2 && multiplier != 3)
        throw ConfigError("training flops multiplier must be 2 or 3, got " +
                          std::to_string(multiplier));

    const bool sparse_ff = spec.s_ff < 1.0;
    const bool sparse_q = spec.s_q < 1.0, sparse_k = spec.s_k < 1.0;
    const bool sparse_v = spec.s_v < 1.0, sparse_o = spec.s_o < 1.0;
    const bool any_sparse = sparse_ff || sparse_q || sparse_k || sparse_v || sparse_o;

    if (recipe.kind == RecipeKind::Dense) {
        if (any_sparse)
            throw ConfigError("training flops: dense recipe with sparse spec densities");
    } else {
        if (!any_sparse)
            throw ConfigError("training flops: sparse recipe but spec is fully dense");
        const double td = recipe.target.density();
        for (auto [flag, d] : {std::pair{sparse_ff, spec.s_ff}, std::pair{sparse_q, spec.s_q},
                               std::pair{sparse_k, spec.s_k}, std::pair{sparse_v, spec.s_v},
                               std::pair{sparse_o, spec.s_o}})
            if (flag && std::abs(d - td) > 1e-9)
                throw ConfigError("training flops: spec group density " + std::to_string(d) +
                                  " does not match recipe target " + recipe.target.str());
    }

    // Forward GFLOPs with every sparse group at density d.
    auto flops_at = [&](double d) {
        CostSpec s = spec;
        if (sparse_ff) s.s_ff = d;
        if (sparse_q) s.s_q = d;
        if (sparse_k) s.s_k = d;
        if (sparse_v) s.s_v = d;
        if (sparse_o) s.s_o = d;
        return compute_cost(s).flops_total;
    };

    const double mult = static_cast<double>(multiplier);
    const double dense_flops = flops_at(1.0);
    const double target_flops = flops_at(recipe.target.density());
    const auto dense_n = static_cast<double>(plan.dense_steps());
    const auto decay_n = static_cast<double>(plan.decay_steps());
    const auto ft_n = static_cast<double>(plan.finetune_steps());

    switch (recipe.kind) {
        case RecipeKind::Dense:
        case RecipeKind::SrSte:
            return mult * dense_flops * static_cast<double>(plan.total_steps);
        case RecipeKind::MdgfLinear:
        case RecipeKind::MdgfExp:
            return mult * (dense_flops * (dense_n + decay_n) + target_flops * ft_n);
        case RecipeKind::SdgfStepwise:
        case RecipeKind::SdgfGeometric: {
            std::vector<SparsityPattern> stages =
                recipe.kind == RecipeKind::SdgfStepwise
                    ? stepwise_schedule(recipe.target)
                    : geometric_schedule(recipe.target, recipe.k_geo);
            double decay_total = 0.0;
            if (plan.decay_steps() > 0) {
                std::vector<std::size_t> part = interval_partition(plan.decay_steps(), stages.size());
                for (std::size_t i = 0; i < stages.size(); ++i)
                    decay_total += flops_at(stages[i].density()) * static_cast<double>(part[i]);
            }
            return mult * (dense_flops * dense_n + decay_total + target_flops * ft_n);
        }
    }
    throw ConfigError("training flops: unknown recipe kind");
}

}  // namespace nmflow
