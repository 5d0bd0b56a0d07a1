// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "nmflow/common.hpp"

namespace nmflow {

enum class Phase { Dense, Decay, FineTune };

inline std::string phase_label(Phase p) {
    switch (p) {
        case Phase::Dense: return "dense";
        case Phase::Decay: return "decay";
        case Phase::FineTune: return "finetune";
    }
    throw ConfigError("unknown phase");
}

// Three-phase split of a training run: unmasked warmup, progressive
// sparsification, then training under the frozen target structure. Phase
// lengths are rounded from fractions; the decay phase absorbs the remainder
// so the three always sum to total_steps.
struct PhasePlan {
    std::size_t total_steps = 0;
    double dense_fraction = 0.05;
    double finetune_fraction = 0.10;

    PhasePlan() = default;
    PhasePlan(std::size_t total, double dense_frac, double finetune_frac)
        : total_steps(total), dense_fraction(dense_frac), finetune_fraction(finetune_frac) {
        validate();
    }

    void validate() const {
        if (total_steps == 0) throw ConfigError("phase plan: total_steps must be positive");
        if (dense_fraction < 0.0 || finetune_fraction < 0.0 ||
            dense_fraction + finetune_fraction >= 1.0 + 1e-12)
            throw ConfigError("phase plan: fractions must be nonnegative and sum below 1");
        if (dense_steps() + finetune_steps() > total_steps)
            throw ConfigError("phase plan: rounded dense+finetune exceed total_steps");
    }

    std::size_t dense_steps() const {
        return static_cast<std::size_t>(std::llround(dense_fraction * static_cast<double>(total_steps)));
    }
    std::size_t finetune_steps() const {
        return static_cast<std::size_t>(
            std::llround(finetune_fraction * static_cast<double>(total_steps)));
    }
    std::size_t decay_steps() const { return total_steps - dense_steps() - finetune_steps(); }

    Phase phase_of(std::size_t step) const {
        if (step >= total_steps)
            throw ConfigError("phase_of: step " + std::to_string(step) + " beyond plan of " +
                              std::to_string(total_steps));
        if (step < dense_steps()) return Phase::Dense;
        if (step < dense_steps() + decay_steps()) return Phase::Decay;
        return Phase::FineTune;
    }
};

}  // namespace nmflow
