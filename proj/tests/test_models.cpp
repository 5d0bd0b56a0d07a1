// SPDX-License-Identifier: Apache-2.0
// Model construction: parameter registration, group labeling, selection
// mapping, and forward-pass contracts.

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <vector>

#include "nmflow/model.hpp"

using namespace nmflow;
using Catch::Matchers::WithinAbs;

TEST_CASE("transformer: closed-form parameter count matches registration") {
    TinyTransformerConfig cfg;  // defaults: 3 layers, 3 heads, 192/768, seq 64
    CHECK(cfg.param_count() == 1352074u);

    Rng rng(0);
    auto model = build_tiny_vit(cfg, rng);
    CHECK(model->param_count() == cfg.param_count());

    TinyTransformerConfig small;
    small.layers = 1;
    small.heads = 2;
    small.embed_dim = 16;
    small.ff_dim = 32;
    small.seq_len = 4;
    small.token_dim = 4;
    small.num_classes = 4;
    Rng rng2(0);
    auto sm = build_tiny_vit(small, rng2);
    CHECK(sm->param_count() == small.param_count());
}

TEST_CASE("transformer: config validation") {
    TinyTransformerConfig cfg;
    cfg.embed_dim = 10;
    cfg.heads = 3;  // 10 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    TinyTransformerConfig zero;
    zero.layers = 0;
    CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("transformer: weight-tensor groups are labeled per role") {
    TinyTransformerConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 3;
    Rng rng(1);
    auto model = build_tiny_vit(cfg, rng);

    std::map<LayerGroup, std::size_t> census;
    for (const auto& p : model->params()) census[p.group]++;
    CHECK(census[LayerGroup::Q] == cfg.layers);
    CHECK(census[LayerGroup::K] == cfg.layers);
    CHECK(census[LayerGroup::V] == cfg.layers);
    CHECK(census[LayerGroup::O] == cfg.layers);
    CHECK(census[LayerGroup::FF] == 2 * cfg.layers);  // both feed-forward mats

    // Biases, norms, embeddings and head are never sparsifiable.
    for (const auto& p : model->params()) {
        if (p.name.find("bias") != std::string::npos || p.name.find("ln") != std::string::npos ||
            p.name.find("pos_embed") != std::string::npos ||
            p.name.find("head") != std::string::npos)
            CHECK(p.group == LayerGroup::None);
    }

    CHECK(model->param("block0.ff1.weight").group == LayerGroup::FF);
    CHECK(model->param("block1.attn.o.weight").group == LayerGroup::O);
    CHECK_THROWS_AS(model->param("no.such.param"), ConfigError);
}

TEST_CASE("transformer: zeroed weights route the head bias straight through") {
    TinyTransformerConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 3;
    Rng rng(3);
    auto model = build_tiny_vit(cfg, rng);
    for (auto& p : model->params())
        for (double& v : p.tensor.data()) v = 0.0;
    auto& bias = model->param("head.bias").tensor;
    bias.data() = {1.5, -2.0, 0.25};

    Tensor x = Tensor::zeros({2, 4, 4});
    Rng xr(9);
    xr.fill_normal(x.data(), 0.0, 1.0);
    Tensor logits = model->forward(x, identity_transform());
    REQUIRE(logits.shape() == Shape{2, 3});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK_THAT(logits.data()[b * 3 + c], WithinAbs(bias.data()[c], 1e-12));
}

TEST_CASE("transformer: forward validates input shape") {
    TinyTransformerConfig cfg;
    cfg.layers = 1;
    cfg.heads = 1;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 2;
    Rng rng(0);
    auto model = build_tiny_vit(cfg, rng);
    CHECK_THROWS_AS(model->forward(Tensor::zeros({2, 4}), identity_transform()), ShapeError);
    CHECK_THROWS_AS(model->forward(Tensor::zeros({2, 5, 4}), identity_transform()), ShapeError);
    CHECK_THROWS_AS(model->forward(Tensor::zeros({2, 4, 3}), identity_transform()), ShapeError);
}

TEST_CASE("transformer: weight transform sees every transformable tensor") {
    TinyTransformerConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 3;
    Rng rng(5);
    auto model = build_tiny_vit(cfg, rng);

    std::set<std::string> seen;
    WeightTransform spy = [&](const Tensor& w, const NamedParam& p) {
        seen.insert(p.name);
        return w;
    };
    Tensor x = Tensor::zeros({1, 4, 4});
    model->forward(x, spy);

    // Token projection, head, and per-block q/k/v/o/ff1/ff2: 2 + 6 per layer.
    CHECK(seen.size() == 2 + 6 * cfg.layers);
    CHECK(seen.count("token_proj.weight") == 1);
    CHECK(seen.count("head.weight") == 1);
    CHECK(seen.count("block1.ff2.weight") == 1);
    CHECK(seen.count("block0.attn.q.weight") == 1);
    CHECK(seen.count("block0.ln1.gamma") == 0);  // norms are not transformed
}

TEST_CASE("transformer: masking transform sparsifies selected groups only") {
    TinyTransformerConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 3;
    Rng rng(11);
    auto model = build_tiny_vit(cfg, rng);

    LayerGroupSelection sel;
    sel.set(SelectGroup::FF, SparsityPattern{1, 4});
    std::map<std::string, double> zero_frac;
    WeightTransform mask = [&](const Tensor& w, const NamedParam& p) {
        auto pat = sel.pattern_for(p.group);
        Tensor out = w;
        if (pat) out = apply_decayed_mask(w, compute_nm_mask(w, *pat), 0.0);
        std::size_t zeros = 0;
        for (double v : out.data()) zeros += v == 0.0 ? 1 : 0;
        zero_frac[p.name] = double(zeros) / double(out.numel());
        return out;
    };
    model->forward(Tensor::zeros({1, 4, 4}), mask);

    CHECK_THAT(zero_frac.at("block0.ff1.weight"), WithinAbs(0.75, 1e-15));
    CHECK_THAT(zero_frac.at("block0.ff2.weight"), WithinAbs(0.75, 1e-15));
    CHECK_THAT(zero_frac.at("block0.attn.q.weight"), WithinAbs(0.0, 1e-15));
    CHECK_THAT(zero_frac.at("head.weight"), WithinAbs(0.0, 1e-15));
}

TEST_CASE("selection: group mapping and conflicts") {
    LayerGroupSelection sel;
    CHECK(sel.empty());
    sel.set(SelectGroup::FF, {1, 8});
    sel.set(SelectGroup::QK, {2, 4});
    sel.set(SelectGroup::O, {1, 4});
    CHECK_FALSE(sel.empty());

    CHECK(sel.pattern_for(LayerGroup::FF) == SparsityPattern{1, 8});
    CHECK(sel.pattern_for(LayerGroup::Q) == SparsityPattern{2, 4});
    CHECK(sel.pattern_for(LayerGroup::K) == SparsityPattern{2, 4});
    CHECK(sel.pattern_for(LayerGroup::O) == SparsityPattern{1, 4});
    CHECK_FALSE(sel.pattern_for(LayerGroup::V).has_value());  // qk leaves v alone
    CHECK_FALSE(sel.pattern_for(LayerGroup::None).has_value());

    CHECK_THROWS_AS(sel.set(SelectGroup::QKV, {2, 4}), ConfigError);

    LayerGroupSelection all;
    all.set(SelectGroup::QKV, {2, 4});
    CHECK(all.pattern_for(LayerGroup::Q) == SparsityPattern{2, 4});
    CHECK(all.pattern_for(LayerGroup::V) == SparsityPattern{2, 4});
    CHECK_THROWS_AS(all.set(SelectGroup::QK, {1, 4}), ConfigError);

    CHECK(parse_select_group("ff") == SelectGroup::FF);
    CHECK(parse_select_group("qkv") == SelectGroup::QKV);
    CHECK_THROWS_AS(parse_select_group("mlp"), ConfigError);
}

TEST_CASE("mlp: construction, groups, and forward") {
    Rng rng(2);
    auto mlp = build_mlp({6, 8, 4}, rng);
    REQUIRE(mlp->params().size() == 4);
    CHECK(mlp->param("layer0.weight").tensor.shape() == Shape{8, 6});
    CHECK(mlp->param("layer0.weight").group == LayerGroup::FF);
    CHECK(mlp->param("layer1.weight").group == LayerGroup::None);  // output layer
    CHECK(mlp->param_count() == 8 * 6 + 8 + 4 * 8 + 4);

    Tensor x = Tensor::zeros({3, 6});
    Rng xr(4);
    xr.fill_normal(x.data(), 0.0, 1.0);
    Tensor y = mlp->forward(x, identity_transform());
    CHECK(y.shape() == Shape{3, 4});

    // Rank-3 inputs are flattened over the trailing axes.
    Tensor x3 = reshape(x, {3, 2, 3});
    Tensor y3 = mlp->forward(x3, identity_transform());
    CHECK(y3.data() == y.data());

    CHECK_THROWS_AS(mlp->forward(Tensor::zeros({3, 5}), identity_transform()), ShapeError);
    CHECK_THROWS_AS(build_mlp({6}, rng), ConfigError);
    CHECK_THROWS_AS(build_mlp({6, 0, 4}, rng), ConfigError);
}

TEST_CASE("models: initialization is seed-deterministic") {
    TinyTransformerConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 3;
    Rng a(42), b(42), c(43);
    auto ma = build_tiny_vit(cfg, a);
    auto mb = build_tiny_vit(cfg, b);
    auto mc = build_tiny_vit(cfg, c);
    bool same = true, diff = false;
    for (std::size_t i = 0; i < ma->params().size(); ++i) {
        same = same && ma->params()[i].tensor.data() == mb->params()[i].tensor.data();
        diff = diff || ma->params()[i].tensor.data() != mc->params()[i].tensor.data();
    }
    CHECK(same);
    CHECK(diff);

    // Initial scale: truncated normal keeps every weight within two sigma.
    // (Norm scales start at one and biases at zero, so only check weights.)
    for (const auto& p : ma->params()) {
        const bool trunc = p.name.find(".weight") != std::string::npos || p.name == "pos_embed";
        if (!trunc) continue;
        for (double v : p.tensor.data()) CHECK(std::abs(v) <= 2.0 * 0.02 + 1e-12);
    }
}
