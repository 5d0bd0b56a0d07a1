// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "nmflow/common.hpp"
#include "nmflow/random.hpp"
#include "nmflow/tensor.hpp"

namespace nmflow {

// Synthetic sequence-classification task: each class has a fixed mean token
// pattern; samples are that pattern plus i.i.d. Gaussian noise. Difficulty is
// the separation/noise ratio.
struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t seq_len = 16;
    std::size_t token_dim = 16;
    std::size_t train_size = 512;
    std::size_t eval_size = 256;
    double cluster_separation = 1.0;  // std of the class-mean entries
    double noise_std = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes == 0 || seq_len == 0 || token_dim == 0 || train_size == 0 || eval_size == 0)
            throw ConfigError("synthetic spec: sizes must be positive");
        if (cluster_separation < 0.0 || noise_std < 0.0)
            throw ConfigError("synthetic spec: separation/noise must be nonnegative");
    }
};

struct Dataset {
    std::size_t seq_len = 0;
    std::size_t token_dim = 0;
    std::vector<double> x;  // flat [size, seq_len, token_dim]
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
    const double* sample(std::size_t i) const { return x.data() + i * seq_len * token_dim; }

    // Materializes rows `idx` as a [batch, seq, token_dim] tensor plus labels.
    std::pair<Tensor, std::vector<int>> batch(const std::vector<std::size_t>& idx) const {
        const std::size_t st = seq_len * token_dim;
        std::vector<double> bx(idx.size() * st);
        std::vector<int> by(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= size()) throw ConfigError("batch index out of range");
            std::copy(sample(idx[i]), sample(idx[i]) + st, bx.data() + i * st);
            by[i] = y[idx[i]];
        }
        return {Tensor::from_data({idx.size(), seq_len, token_dim}, std::move(bx)), std::move(by)};
    }
};

struct SyntheticData {
    Dataset train;
    Dataset eval;
    std::vector<double> class_means;  // flat [num_classes, seq_len, token_dim]
};

// Fully seed-determined: class means first, then train samples, then eval
// samples, all from one stream. Labels are round-robin, so balance is exact
// up to the division remainder.
inline SyntheticData generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t st = spec.seq_len * spec.token_dim;

    SyntheticData out;
    out.class_means.resize(spec.num_classes * st);
    rng.fill_normal(out.class_means, 0.0, spec.cluster_separation);

    auto fill_split = [&](Dataset& ds, std::size_t n) {
        ds.seq_len = spec.seq_len;
        ds.token_dim = spec.token_dim;
        ds.x.resize(n * st);
        ds.y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            int label = static_cast<int>(i % spec.num_classes);
            ds.y[i] = label;
            const double* mean = out.class_means.data() + static_cast<std::size_t>(label) * st;
            double* xi = ds.x.data() + i * st;
            for (std::size_t j = 0; j < st; ++j) xi[j] = mean[j] + rng.normal(0.0, spec.noise_std);
        }
    };
    fill_split(out.train, spec.train_size);
    fill_split(out.eval, spec.eval_size);
    return out;
}

// Classifies by nearest true class mean (squared distance); an upper-bound
// reference establishing the task is learnable at a given separation/noise.
inline double nearest_mean_accuracy(const SyntheticData& data, const Dataset& split) {
    if (split.size() == 0) throw ConfigError("nearest_mean_accuracy: empty split");
    const std::size_t st = split.seq_len * split.token_dim;
    const std::size_t classes = data.class_means.size() / st;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const double* xi = split.sample(i);
        int best = 0;
        double best_d = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double* mu = data.class_means.data() + c * st;
            double d = 0.0;
            for (std::size_t j = 0; j < st; ++j) {
                double diff = xi[j] - mu[j];
                d += diff * diff;
            }
            if (c == 0 || d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        if (best == split.y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
}

}  // namespace nmflow
