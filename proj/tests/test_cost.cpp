// SPDX-License-Identifier: Apache-2.0
// Analytic cost model: per-operator FLOPs, parameter counts, the FF-sparsity
// sweep, and whole-run training cost under each recipe.

#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "nmflow/cost.hpp"

using namespace nmflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RecipeConfig recipe_of(RecipeKind kind, SparsityPattern target) {
    RecipeConfig rc;
    rc.kind = kind;
    rc.target = target;
    return rc;
}

}  // namespace

TEST_CASE("cost: spec validation") {
    CostSpec s = CostSpec::vit_base();
    s.validate();

    CostSpec zero = s;
    zero.layers = 0;
    CHECK_THROWS_AS(zero.validate(), ConfigError);

    CostSpec odd = s;
    odd.embed_dim = 770;  // not divisible by 12 heads
    CHECK_THROWS_AS(odd.validate(), ConfigError);

    CostSpec d0 = s.with_ff(0.0);
    CHECK_THROWS_AS(d0.validate(), ConfigError);
    CostSpec d2 = s.with_qkvo(1.5);
    CHECK_THROWS_AS(d2.validate(), ConfigError);
    CHECK_THROWS_AS(compute_cost(d2), ConfigError);
}

TEST_CASE("cost: dense 12x768 encoder breakdown, frozen values") {
    CostBreakdown b = compute_cost(CostSpec::vit_base());

    // Each projection: 2*196*768^2*12 MAC-derived FLOPs = 2.774532096 G.
    CHECK_THAT(b.flops_q, WithinRel(2.7745320960000002, 1e-12));
    CHECK_THAT(b.flops_k, WithinRel(2.7745320960000002, 1e-12));
    CHECK_THAT(b.flops_v, WithinRel(2.7745320960000002, 1e-12));
    CHECK_THAT(b.flops_o, WithinRel(2.7745320960000002, 1e-12));
    // Each attention einsum: 2*196^2*768*12 = 0.708083712 G.
    CHECK_THAT(b.flops_logit, WithinRel(0.70808371199999998, 1e-12));
    CHECK_THAT(b.flops_attend, WithinRel(0.70808371199999998, 1e-12));
    // Each FF matmul: 2*196*768*3072*12 = 11.098128384 G.
    CHECK_THAT(b.flops_ff1, WithinRel(11.098128384, 1e-12));
    CHECK_THAT(b.flops_ff2, WithinRel(11.098128384, 1e-12));

    CHECK_THAT(b.flops_sa, WithinRel(12.514295808, 1e-12));
    CHECK_THAT(b.flops_ff, WithinRel(22.196256768000001, 1e-12));
    CHECK_THAT(b.flops_ff_effective, WithinRel(22.196256768000001, 1e-12));
    CHECK_THAT(b.flops_total, WithinRel(34.710552575999998, 1e-12));

    CHECK(b.params_projections == 28311552u);  // 4 * 768^2 * 12
    CHECK(b.params_ff == 56623104u);           // 2 * 768 * 3072 * 12
    CHECK_THAT(b.params_projections_mb, WithinRel(28.311552, 1e-12));
    CHECK_THAT(b.params_ff_mb, WithinRel(56.623104, 1e-12));
    CHECK_THAT(b.params_projections_effective, WithinRel(28311552.0, 1e-12));
    CHECK_THAT(b.params_ff_effective, WithinRel(56623104.0, 1e-12));
}

TEST_CASE("cost: feed-forward density scales only the feed-forward terms") {
    CostBreakdown dense = compute_cost(CostSpec::vit_base());
    CostBreakdown b = compute_cost(CostSpec::vit_base().with_ff(0.125));

    CHECK(b.flops_sa == dense.flops_sa);
    CHECK(b.flops_logit == dense.flops_logit);
    CHECK_THAT(b.flops_ff1, WithinRel(11.098128384 * 0.125, 1e-12));
    CHECK_THAT(b.flops_ff2, WithinRel(11.098128384 * 0.125, 1e-12));
    CHECK_THAT(b.flops_total, WithinRel(15.288827904, 1e-12));
    CHECK(b.params_ff == dense.params_ff);  // raw counts stay dense
    CHECK_THAT(b.params_ff_effective, WithinRel(56623104.0 * 0.125, 1e-12));
}

TEST_CASE("cost: projection densities scale their own operators") {
    CostBreakdown half = compute_cost(CostSpec::vit_base().with_qkvo(0.5));
    CHECK_THAT(half.flops_q, WithinRel(2.774532096 * 0.5, 1e-12));
    CHECK_THAT(half.flops_o, WithinRel(2.774532096 * 0.5, 1e-12));
    CHECK_THAT(half.flops_logit, WithinRel(0.708083712, 1e-12));  // activations only
    CHECK_THAT(half.params_projections_effective, WithinRel(28311552.0 * 0.5, 1e-12));

    CostBreakdown qk = compute_cost(CostSpec::vit_base().with_qk(0.25));
    CHECK_THAT(qk.flops_q, WithinRel(2.774532096 * 0.25, 1e-12));
    CHECK_THAT(qk.flops_k, WithinRel(2.774532096 * 0.25, 1e-12));
    CHECK_THAT(qk.flops_v, WithinRel(2.774532096, 1e-12));
    CHECK_THAT(qk.flops_o, WithinRel(2.774532096, 1e-12));
}

TEST_CASE("cost: total decomposes as attention plus effective feed-forward") {
    for (double d : {1.0, 0.5, 0.25, 0.125, 0.0078125}) {
        CostBreakdown b = compute_cost(CostSpec::vit_base().with_ff(d));
        CHECK_THAT(b.flops_total, WithinRel(b.flops_sa + b.flops_ff_effective, 1e-15));
        CHECK_THAT(b.flops_ff_effective, WithinRel(b.flops_ff * d, 1e-15));
    }
}

TEST_CASE("cost: the canonical FF sweep reproduces the reference totals") {
    auto rows = ff_sparsity_sweep(CostSpec::vit_base());
    REQUIRE(rows.size() == 7);

    const char* labels[] = {"dense", "1:2", "1:4", "1:8", "1:16", "1:32", "1:128"};
    const double densities[] = {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.0078125};
    const double totals[] = {34.71, 23.61, 18.06, 15.29, 13.90, 13.20, 12.69};
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(rows[i].label == labels[i]);
        CHECK(rows[i].s_ff == densities[i]);
        CHECK_THAT(rows[i].flops_total, WithinAbs(totals[i], 0.01));
        CHECK_THAT(rows[i].flops_sa, WithinRel(12.514295808, 1e-12));  // never scales
        if (i > 0) CHECK(rows[i].flops_total < rows[i - 1].flops_total);
    }
}

TEST_CASE("training cost: dense and straight-through run at dense compute") {
    PhasePlan plan(100000, 0.05, 0.10);
    const double dense3 =
        training_flops(CostSpec::vit_base(), recipe_of(RecipeKind::Dense, {1, 1}), plan, 3);
    CHECK_THAT(dense3, WithinRel(10413165.772799999, 1e-12));

    const double srste3 = training_flops(CostSpec::vit_base().with_ff(0.125),
                                         recipe_of(RecipeKind::SrSte, {1, 8}), plan, 3);
    CHECK_THAT(srste3, WithinRel(10413165.772799999, 1e-12));

    const double dense2 =
        training_flops(CostSpec::vit_base(), recipe_of(RecipeKind::Dense, {1, 1}), plan, 2);
    CHECK_THAT(dense2, WithinRel(dense3 * 2.0 / 3.0, 1e-14));
}

TEST_CASE("training cost: decaying-mask recipes save only in fine-tune") {
    PhasePlan plan(100000, 0.05, 0.10);
    const double got = training_flops(CostSpec::vit_base().with_ff(0.125),
                                      recipe_of(RecipeKind::MdgfExp, {1, 8}), plan, 3);
    CHECK_THAT(got, WithinRel(9830514.0326399989, 1e-12));
    const double lin = training_flops(CostSpec::vit_base().with_ff(0.125),
                                      recipe_of(RecipeKind::MdgfLinear, {1, 8}), plan, 3);
    CHECK(lin == got);  // identical phase densities, identical totals
}

TEST_CASE("training cost: structure decay saves across its stages") {
    PhasePlan plan(100000, 0.05, 0.10);
    const double got = training_flops(CostSpec::vit_base().with_ff(0.125),
                                      recipe_of(RecipeKind::SdgfStepwise, {1, 8}), plan, 3);
    CHECK_THAT(got, WithinRel(6646738.4524799995, 1e-12));

    // Geometric stages all sit at target density, so only dense+finetune
    // phases differ from running the decay span at the target.
    const double geo = training_flops(CostSpec::vit_base().with_ff(0.125),
                                      recipe_of(RecipeKind::SdgfGeometric, {1, 8}), plan, 3);
    const double dense_f = 34.710552575999998, target_f = 15.288827904;
    CHECK_THAT(geo, WithinRel(3.0 * (dense_f * 5000 + target_f * 95000), 1e-12));

    // Ordering: stepwise < mask-decay < dense-equivalent.
    const double mdgf = training_flops(CostSpec::vit_base().with_ff(0.125),
                                       recipe_of(RecipeKind::MdgfExp, {1, 8}), plan, 3);
    const double dense = training_flops(CostSpec::vit_base(), recipe_of(RecipeKind::Dense, {1, 1}),
                                        plan, 3);
    CHECK(got < mdgf);
    CHECK(mdgf < dense);
    CHECK(geo < got);
}

TEST_CASE("training cost: degenerate phase plans collapse cleanly") {
    PhasePlan all_dense(100, 1.0, 0.0);
    const double base = 3.0 * 34.710552575999998 * 100.0;
    CHECK_THAT(training_flops(CostSpec::vit_base().with_ff(0.125),
                              recipe_of(RecipeKind::MdgfExp, {1, 8}), all_dense, 3),
               WithinRel(base, 1e-12));
    CHECK_THAT(training_flops(CostSpec::vit_base().with_ff(0.125),
                              recipe_of(RecipeKind::SdgfStepwise, {1, 8}), all_dense, 3),
               WithinRel(base, 1e-12));
}

TEST_CASE("training cost: misconfiguration is rejected") {
    PhasePlan plan(1000, 0.05, 0.10);
    CHECK_THROWS_AS(training_flops(CostSpec::vit_base(), recipe_of(RecipeKind::Dense, {1, 1}),
                                   plan, 4),
                    ConfigError);
    // Dense recipe cannot be costed against a sparsified spec.
    CHECK_THROWS_AS(training_flops(CostSpec::vit_base().with_ff(0.5),
                                   recipe_of(RecipeKind::Dense, {1, 1}), plan, 3),
                    ConfigError);
    // Sparse recipe needs at least one sparse group in the spec.
    CHECK_THROWS_AS(training_flops(CostSpec::vit_base(), recipe_of(RecipeKind::SrSte, {1, 8}),
                                   plan, 3),
                    ConfigError);
    // Spec density must match the recipe target.
    CHECK_THROWS_AS(training_flops(CostSpec::vit_base().with_ff(0.25),
                                   recipe_of(RecipeKind::SrSte, {1, 8}), plan, 3),
                    ConfigError);
    // Unreachable stepwise target propagates the schedule error.
    CHECK_THROWS_AS(training_flops(CostSpec::vit_base().with_ff(0.375),
                                   recipe_of(RecipeKind::SdgfStepwise, {3, 8}), plan, 3),
                    ConfigError);
}
