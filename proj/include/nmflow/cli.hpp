// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmflow/nmflow.hpp"

namespace nmflow::cli {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration (JSON file, flags override)
// ---------------------------------------------------------------------------

struct RecipeSpec {
    RecipeConfig recipe;
    LayerGroupSelection selection;

    std::string slug() const {
        std::string s = recipe_label(recipe.kind);
        if (recipe.kind == RecipeKind::Dense) return s;
        for (const auto& [g, p] : selection.entries())
            s += "_" + select_group_label(g) + "-" + std::to_string(p.n) + "-" + std::to_string(p.m);
        return s;
    }
};

struct ExperimentConfig {
    TinyTransformerConfig model;
    SyntheticSpec data;
    PhasePlan plan{1000, 0.05, 0.10};
    AdamWConfig optimizer;
    TrainerOptions trainer;
    std::vector<RecipeSpec> recipes;
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "runs/out";

    void validate() const {
        model.validate();
        data.validate();
        plan.validate();
        optimizer.validate();
        if (model.seq_len != data.seq_len || model.token_dim != data.token_dim)
            throw ConfigError("config: model seq_len/token_dim must match the data spec");
        if (recipes.empty()) throw ConfigError("config: at least one recipe required");
        if (seeds.empty()) throw ConfigError("config: at least one seed required");
    }
};

namespace detail_cli {

template <typename T>
void get_to_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

inline RecipeSpec parse_recipe_spec(const json& j) {
    RecipeSpec rs;
    if (j.is_string()) {
        rs.recipe.kind = parse_recipe(j.get<std::string>());
    } else {
        rs.recipe.kind = parse_recipe(j.at("recipe").get<std::string>());
        if (j.contains("groups"))
            for (const auto& [g, p] : j.at("groups").items())
                rs.selection.set(parse_select_group(g), parse_pattern(p.get<std::string>()));
        if (j.contains("k_tau")) rs.recipe.k_tau = j.at("k_tau").get<double>();
        if (j.contains("k_eta")) rs.recipe.k_eta = j.at("k_eta").get<double>();
        get_to_if(j, "k_geo", rs.recipe.k_geo);
        get_to_if(j, "lambda_w", rs.recipe.lambda_w);
    }
    if (rs.recipe.kind != RecipeKind::Dense) {
        if (rs.selection.empty())
            throw ConfigError("recipe '" + recipe_label(rs.recipe.kind) +
                              "' needs a groups map (e.g. {\"ff\": \"1:16\"})");
        rs.recipe.target = rs.selection.entries().begin()->second;
    }
    return rs;
}

inline json recipe_spec_to_json(const RecipeSpec& rs) {
    json j;
    j["recipe"] = recipe_label(rs.recipe.kind);
    if (rs.recipe.kind == RecipeKind::Dense) return j;
    json groups = json::object();
    for (const auto& [g, p] : rs.selection.entries()) groups[select_group_label(g)] = p.str();
    j["groups"] = groups;
    if (rs.recipe.k_tau) j["k_tau"] = *rs.recipe.k_tau;
    if (rs.recipe.k_eta) j["k_eta"] = *rs.recipe.k_eta;
    j["k_geo"] = rs.recipe.k_geo;
    j["lambda_w"] = rs.recipe.lambda_w;
    return j;
}

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    if (j.contains("model")) {
        const json& m = j.at("model");
        get_to_if(m, "layers", c.model.layers);
        get_to_if(m, "heads", c.model.heads);
        get_to_if(m, "embed_dim", c.model.embed_dim);
        get_to_if(m, "ff_dim", c.model.ff_dim);
        get_to_if(m, "seq_len", c.model.seq_len);
        get_to_if(m, "token_dim", c.model.token_dim);
        get_to_if(m, "num_classes", c.model.num_classes);
    }
    // Data dims track the model unless the config pins them explicitly.
    c.data.seq_len = c.model.seq_len;
    c.data.token_dim = c.model.token_dim;
    c.data.num_classes = c.model.num_classes;
    if (j.contains("data")) {
        const json& d = j.at("data");
        get_to_if(d, "num_classes", c.data.num_classes);
        get_to_if(d, "seq_len", c.data.seq_len);
        get_to_if(d, "token_dim", c.data.token_dim);
        get_to_if(d, "train_size", c.data.train_size);
        get_to_if(d, "eval_size", c.data.eval_size);
        get_to_if(d, "cluster_separation", c.data.cluster_separation);
        get_to_if(d, "noise_std", c.data.noise_std);
        get_to_if(d, "seed", c.data.seed);
    }
    if (j.contains("plan")) {
        const json& p = j.at("plan");
        get_to_if(p, "total_steps", c.plan.total_steps);
        get_to_if(p, "dense_fraction", c.plan.dense_fraction);
        get_to_if(p, "finetune_fraction", c.plan.finetune_fraction);
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        get_to_if(o, "lr_peak", c.optimizer.lr_peak);
        get_to_if(o, "beta1", c.optimizer.beta1);
        get_to_if(o, "beta2", c.optimizer.beta2);
        get_to_if(o, "eps", c.optimizer.eps);
        get_to_if(o, "weight_decay", c.optimizer.weight_decay);
        get_to_if(o, "warmup_fraction", c.optimizer.warmup_fraction);
        get_to_if(o, "cosine_floor", c.optimizer.cosine_floor);
        get_to_if(o, "clip_norm", c.optimizer.clip_norm);
    }
    if (j.contains("trainer")) {
        const json& t = j.at("trainer");
        get_to_if(t, "batch_size", c.trainer.batch_size);
        get_to_if(t, "log_every", c.trainer.log_every);
        get_to_if(t, "eval_every", c.trainer.eval_every);
        get_to_if(t, "diag_sample_every", c.trainer.diag.sample_every);
        get_to_if(t, "diag_ema_coeff", c.trainer.diag.ema_coeff);
    }
    if (j.contains("recipes"))
        for (const auto& r : j.at("recipes")) c.recipes.push_back(parse_recipe_spec(r));
    if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
    get_to_if(j, "out_dir", c.out_dir);
    return c;
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["model"] = {{"layers", c.model.layers},       {"heads", c.model.heads},
                  {"embed_dim", c.model.embed_dim}, {"ff_dim", c.model.ff_dim},
                  {"seq_len", c.model.seq_len},     {"token_dim", c.model.token_dim},
                  {"num_classes", c.model.num_classes}};
    j["data"] = {{"num_classes", c.data.num_classes},
                 {"seq_len", c.data.seq_len},
                 {"token_dim", c.data.token_dim},
                 {"train_size", c.data.train_size},
                 {"eval_size", c.data.eval_size},
                 {"cluster_separation", c.data.cluster_separation},
                 {"noise_std", c.data.noise_std},
                 {"seed", c.data.seed}};
    j["plan"] = {{"total_steps", c.plan.total_steps},
                 {"dense_fraction", c.plan.dense_fraction},
                 {"finetune_fraction", c.plan.finetune_fraction}};
    j["optimizer"] = {{"lr_peak", c.optimizer.lr_peak},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},
                      {"weight_decay", c.optimizer.weight_decay},
                      {"warmup_fraction", c.optimizer.warmup_fraction},
                      {"cosine_floor", c.optimizer.cosine_floor},
                      {"clip_norm", c.optimizer.clip_norm}};
    j["trainer"] = {{"batch_size", c.trainer.batch_size},
                    {"log_every", c.trainer.log_every},
                    {"eval_every", c.trainer.eval_every},
                    {"diag_sample_every", c.trainer.diag.sample_every},
                    {"diag_ema_coeff", c.trainer.diag.ema_coeff}};
    j["recipes"] = json::array();
    for (const auto& r : c.recipes) j["recipes"].push_back(recipe_spec_to_json(r));
    j["seeds"] = c.seeds;
    j["out_dir"] = c.out_dir;
    return j;
}

inline std::string g17(double v) { return nmflow::detail::fmt_g17(v); }

}  // namespace detail_cli

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> recipe;
    std::optional<std::string> pattern;
    std::optional<std::string> group;
    std::optional<std::size_t> steps;
};

inline int cmd_train(const std::string& config_path, const TrainOverrides& ov,
                     std::ostream& log = std::cout) {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open config '" + config_path + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config '" + config_path + "': " + e.what());
        }
        cfg = detail_cli::parse_config(j);
    }
    if (ov.seed) cfg.seeds = {*ov.seed};
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (ov.steps) cfg.plan.total_steps = *ov.steps;
    if (ov.recipe) {
        RecipeSpec rs;
        rs.recipe.kind = parse_recipe(*ov.recipe);
        if (rs.recipe.kind != RecipeKind::Dense) {
            if (!ov.pattern) throw ConfigError("--recipe " + *ov.recipe + " needs --pattern N:M");
            SparsityPattern p = parse_pattern(*ov.pattern);
            rs.selection.set(ov.group ? parse_select_group(*ov.group) : SelectGroup::FF, p);
            rs.recipe.target = p;
        }
        cfg.recipes = {rs};
    } else if (ov.pattern || ov.group) {
        throw ConfigError("--pattern/--group require --recipe");
    }
    if (cfg.recipes.empty()) cfg.recipes.push_back(RecipeSpec{});  // dense
    cfg.validate();

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "resolved_config.json");
        if (!out) throw IoError("cannot write resolved config in '" + cfg.out_dir + "'");
        out << detail_cli::config_to_json(cfg).dump(2) << "\n";
    }

    const SyntheticData data = generate(cfg.data);

    struct Summary {
        std::vector<double> accs;
        std::vector<double> losses;
        std::size_t aborts = 0;
    };
    std::map<std::string, Summary> summaries;
    std::vector<std::string> order;
    bool any_abort = false;

    for (const auto& rs : cfg.recipes) {
        const std::string slug = rs.slug();
        if (!summaries.count(slug)) order.push_back(slug);
        for (std::uint64_t seed : cfg.seeds) {
            Rng init_rng(seed);
            auto model = build_tiny_vit(cfg.model, init_rng);
            TrainerOptions topt = cfg.trainer;
            topt.seed = seed;
            TrainingReport rep =
                run_training(*model, rs.recipe, rs.selection, cfg.plan, data, cfg.optimizer, topt);
            const std::string csv = slug + "_seed" + std::to_string(seed) + ".csv";
            rep.write_csv((fs::path(cfg.out_dir) / csv).string());
            auto& s = summaries[slug];
            if (rep.nan_abort) {
                ++s.aborts;
                any_abort = true;
                log << "run " << slug << " seed " << seed << ": ABORTED, non-finite loss at step "
                    << rep.nan_step << "\n";
                continue;
            }
            s.accs.push_back(rep.final_eval_acc);
            s.losses.push_back(rep.final_eval_loss);
            log << "run " << slug << " seed " << seed << ": final eval acc "
                << detail_cli::g17(rep.final_eval_acc) << ", eval loss "
                << detail_cli::g17(rep.final_eval_loss) << ", achieved sparsity "
                << detail_cli::g17(rep.overall_achieved_sparsity()) << " -> " << csv << "\n";
        }
    }

    {
        std::ofstream out(fs::path(cfg.out_dir) / "summary.csv");
        if (!out) throw IoError("cannot write summary in '" + cfg.out_dir + "'");
        out << "# nmflow-summary v1\n";
        out << "recipe,runs,mean_final_acc,std_final_acc,mean_final_loss,nan_aborts\n";
        for (const auto& slug : order) {
            const Summary& s = summaries[slug];
            double mean = 0.0, sd = 0.0, mloss = 0.0;
            if (!s.accs.empty()) {
                for (double a : s.accs) mean += a;
                mean /= static_cast<double>(s.accs.size());
                for (double a : s.accs) sd += (a - mean) * (a - mean);
                sd = std::sqrt(sd / static_cast<double>(s.accs.size()));
                for (double l : s.losses) mloss += l;
                mloss /= static_cast<double>(s.losses.size());
            }
            out << slug << ',' << (s.accs.size() + s.aborts) << ',' << detail_cli::g17(mean) << ','
                << detail_cli::g17(sd) << ',' << detail_cli::g17(mloss) << ',' << s.aborts << '\n';
        }
    }
    return any_abort ? 1 : 0;
}

// ---------------------------------------------------------------------------
// cost
// ---------------------------------------------------------------------------

struct CostArgs {
    std::string preset;
    std::size_t layers = 0, heads = 0, embed_dim = 0, ff_dim = 0, seq_len = 0;
    std::optional<double> sff;
    std::optional<std::string> pattern;
    std::string group = "ff";
    bool table11 = false;
    bool csv = false;
    bool training = false;
    std::string recipe = "mdgf-exp";
    std::size_t steps = 100000;
    double dense_fraction = 0.05, finetune_fraction = 0.10;
    int flops_multiplier = 3;
    std::size_t k_geo = 16;
};

inline CostSpec cost_spec_from_args(const CostArgs& a) {
    CostSpec spec;
    if (!a.preset.empty()) {
        if (a.preset == "vit-base")
            spec = CostSpec::vit_base();
        else
            throw ConfigError("unknown preset '" + a.preset + "' (expect vit-base)");
    }
    if (a.layers) spec.layers = a.layers;
    if (a.heads) spec.heads = a.heads;
    if (a.embed_dim) spec.embed_dim = a.embed_dim;
    if (a.ff_dim) spec.ff_dim = a.ff_dim;
    if (a.seq_len) spec.seq_len = a.seq_len;
    if (a.sff) {
        if (!(*a.sff > 0.0 && *a.sff <= 1.0))
            throw ConfigError("--sff " + std::to_string(*a.sff) + " outside (0,1]");
        spec.s_ff = *a.sff;
    }
    if (a.pattern) {
        const double d = parse_pattern(*a.pattern).density();
        switch (parse_select_group(a.group)) {
            case SelectGroup::FF: spec.s_ff = d; break;
            case SelectGroup::QK: spec = spec.with_qk(d); break;
            case SelectGroup::QKV:
                spec = spec.with_qk(d);
                spec.s_v = d;
                break;
            case SelectGroup::O: spec.s_o = d; break;
        }
    }
    return spec;
}

inline int cmd_cost(const CostArgs& a, std::ostream& out = std::cout) {
    const CostSpec spec = cost_spec_from_args(a);

    if (a.table11) {
        auto rows = ff_sparsity_sweep(spec);
        if (a.csv) {
            out << "# nmflow-cost-sweep v1\n";
            out << "label,s_ff,flops_sa_g,flops_ff_g,flops_total_g\n";
            for (const auto& r : rows)
                out << r.label << ',' << detail_cli::g17(r.s_ff) << ','
                    << detail_cli::g17(r.flops_sa) << ',' << detail_cli::g17(r.flops_ff_effective)
                    << ',' << detail_cli::g17(r.flops_total) << '\n';
        } else {
            out << "FF sparsity sweep (GFLOPs, one image)\n";
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%-8s %-10s %10s %10s %10s\n", "label", "s_ff", "sa",
                          "ff", "total");
            out << buf;
            for (const auto& r : rows) {
                std::snprintf(buf, sizeof(buf), "%-8s %-10.7g %10.2f %10.2f %10.2f\n",
                              r.label.c_str(), r.s_ff, r.flops_sa, r.flops_ff_effective,
                              r.flops_total);
                out << buf;
            }
        }
        return 0;
    }

    const CostBreakdown b = compute_cost(spec);
    if (a.csv) {
        out << "# nmflow-cost v1\n";
        out << "field,value\n";
        auto row = [&](const char* k, double v) { out << k << ',' << detail_cli::g17(v) << '\n'; };
        row("flops_q_g", b.flops_q);
        row("flops_k_g", b.flops_k);
        row("flops_v_g", b.flops_v);
        row("flops_o_g", b.flops_o);
        row("flops_logit_g", b.flops_logit);
        row("flops_attend_g", b.flops_attend);
        row("flops_ff1_g", b.flops_ff1);
        row("flops_ff2_g", b.flops_ff2);
        row("flops_sa_g", b.flops_sa);
        row("flops_ff_dense_g", b.flops_ff);
        row("flops_ff_effective_g", b.flops_ff_effective);
        row("flops_total_g", b.flops_total);
        out << "params_projections," << b.params_projections << '\n';
        out << "params_ff," << b.params_ff << '\n';
        row("params_projections_m", b.params_projections_mb);
        row("params_ff_m", b.params_ff_mb);
        row("params_projections_effective", b.params_projections_effective);
        row("params_ff_effective", b.params_ff_effective);
    } else {
        char buf[160];
        out << "Per-image compute (GFLOPs), densities: ff " << spec.s_ff << " q " << spec.s_q
            << " k " << spec.s_k << " v " << spec.s_v << " o " << spec.s_o << "\n";
        auto row = [&](const char* k, double v) {
            std::snprintf(buf, sizeof(buf), "  %-22s %12.4f\n", k, v);
            out << buf;
        };
        row("q projection", b.flops_q);
        row("k projection", b.flops_k);
        row("v projection", b.flops_v);
        row("o projection", b.flops_o);
        row("attention logits", b.flops_logit);
        row("attention values", b.flops_attend);
        row("ff matmul 1", b.flops_ff1);
        row("ff matmul 2", b.flops_ff2);
        row("self-attention total", b.flops_sa);
        row("ff total (dense)", b.flops_ff);
        row("ff total (effective)", b.flops_ff_effective);
        row("TOTAL", b.flops_total);
        std::snprintf(buf, sizeof(buf), "  %-22s %12zu (%.2f M, effective %.2f M)\n",
                      "projection params", b.params_projections, b.params_projections_mb,
                      b.params_projections_effective / 1e6);
        out << buf;
        std::snprintf(buf, sizeof(buf), "  %-22s %12zu (%.2f M, effective %.2f M)\n", "ff params",
                      b.params_ff, b.params_ff_mb, b.params_ff_effective / 1e6);
        out << buf;
    }

    if (a.training) {
        RecipeConfig rc;
        rc.kind = parse_recipe(a.recipe);
        rc.k_geo = a.k_geo;
        if (rc.kind != RecipeKind::Dense) {
            if (!a.pattern)
                throw ConfigError("--training with a sparse recipe needs --pattern N:M");
            rc.target = parse_pattern(*a.pattern);
        }
        PhasePlan plan(a.steps, a.dense_fraction, a.finetune_fraction);
        const double g = training_flops(spec, rc, plan, a.flops_multiplier);
        if (a.csv)
            out << "training_flops_g," << detail_cli::g17(g) << '\n';
        else
            out << "Training compute: " << detail_cli::g17(g) << " GFLOPs (" << a.recipe << ", "
                << a.steps << " steps, multiplier " << a.flops_multiplier << ")\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

struct ScheduleArgs {
    std::string recipe;
    std::string pattern = "1:8";
    std::size_t steps = 1000;
    double dense_fraction = 0.05, finetune_fraction = 0.10;
    std::size_t k_geo = 16;
    std::optional<double> k_tau, k_eta;
};

inline int cmd_schedule(const ScheduleArgs& a, std::ostream& out = std::cout) {
    RecipeConfig rc;
    rc.kind = parse_recipe(a.recipe);
    rc.k_geo = a.k_geo;
    rc.k_tau = a.k_tau;
    rc.k_eta = a.k_eta;
    PhasePlan plan(a.steps, a.dense_fraction, a.finetune_fraction);
    if (rc.kind != RecipeKind::Dense) rc.target = parse_pattern(a.pattern);
    rc.resolve(plan.decay_steps());

    const std::size_t d0 = plan.dense_steps(), dc = plan.decay_steps(), ft = plan.finetune_steps();
    out << "recipe " << recipe_label(rc.kind);
    if (rc.kind != RecipeKind::Dense) out << " target " << rc.target.str();
    out << ", " << plan.total_steps << " steps\n";
    out << "phases: dense [0," << d0 << "), decay [" << d0 << "," << d0 + dc << "), finetune ["
        << d0 + dc << "," << plan.total_steps << ")\n";

    switch (rc.kind) {
        case RecipeKind::Dense:
            out << "no sparsification; every step is unmasked\n";
            break;
        case RecipeKind::SrSte:
            out << "masked forward + straight-through gradient from step " << d0
                << " on; refinement lambda " << detail_cli::g17(rc.lambda_w) << "\n";
            break;
        case RecipeKind::MdgfLinear:
        case RecipeKind::MdgfExp: {
            const double rate =
                rc.kind == RecipeKind::MdgfLinear ? *rc.k_tau : *rc.k_eta;
            out << (rc.kind == RecipeKind::MdgfLinear ? "linear" : "exponential")
                << " mask decay, rate " << detail_cli::g17(rate) << "\n";
            out << "decay factor checkpoints (step: multiplier):\n";
            for (int pct : {0, 25, 50, 75, 100}) {
                std::size_t j = dc == 0 ? 0 : (dc - 1) * static_cast<std::size_t>(pct) / 100;
                out << "  " << d0 + j << ": " << detail_cli::g17(rc.decay_factor(j)) << "\n";
            }
            out << "  " << d0 + dc << ": 0 (frozen binary mask from fine-tune on)\n";
            break;
        }
        case RecipeKind::SdgfStepwise:
        case RecipeKind::SdgfGeometric: {
            auto stages = rc.kind == RecipeKind::SdgfStepwise
                              ? stepwise_schedule(rc.target)
                              : geometric_schedule(rc.target, rc.k_geo);
            auto part = interval_partition(dc, stages.size());
            out << "pattern stages:\n";
            std::size_t start = d0;
            for (std::size_t i = 0; i < stages.size(); ++i) {
                out << "  " << stages[i].str() << "  steps [" << start << "," << start + part[i]
                    << ")\n";
                start += part[i];
            }
            out << "  " << rc.target.str() << " (frozen)  steps [" << d0 + dc << ","
                << plan.total_steps << ")\n";
            break;
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"N:M structured-sparsity training recipes and transformer cost model"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run training experiments");
    std::string config_path;
    TrainOverrides ov;
    std::uint64_t seed_flag = 0;
    std::string out_flag, recipe_flag, pattern_flag, group_flag;
    std::size_t steps_flag = 0;
    train->add_option("--config", config_path, "JSON experiment config");
    auto* seed_opt = train->add_option("--seed", seed_flag, "single seed override");
    auto* out_opt = train->add_option("--out", out_flag, "output directory override");
    auto* recipe_opt =
        train->add_option("--recipe", recipe_flag,
                          "single recipe override "
                          "(dense|sr-ste|mdgf-linear|mdgf-exp|sdgf-stepwise|sdgf-geometric)");
    auto* pattern_opt = train->add_option("--pattern", pattern_flag, "target pattern N:M");
    auto* group_opt = train->add_option("--group", group_flag, "sparsified group (ff|qk|qkv|o)");
    auto* steps_opt = train->add_option("--steps", steps_flag, "total steps override");

    // cost
    auto* cost = app.add_subcommand("cost", "analytic FLOPs/parameter model");
    CostArgs ca;
    cost->add_option("--preset", ca.preset, "dimension preset (vit-base)");
    cost->add_option("--layers", ca.layers, "encoder layers");
    cost->add_option("--heads", ca.heads, "attention heads");
    cost->add_option("--embed", ca.embed_dim, "embedding dim");
    cost->add_option("--ff", ca.ff_dim, "feed-forward dim");
    cost->add_option("--seq", ca.seq_len, "sequence length");
    double sff_flag = 0.0;
    auto* sff_opt = cost->add_option("--sff", sff_flag, "feed-forward density in (0,1]");
    std::string cost_pattern;
    auto* costpat_opt = cost->add_option("--pattern", cost_pattern, "pattern N:M for --group");
    cost->add_option("--group", ca.group, "group the pattern applies to (ff|qk|qkv|o)");
    cost->add_flag("--table11", ca.table11, "emit the canonical FF-sparsity sweep");
    cost->add_flag("--csv", ca.csv, "CSV output");
    cost->add_flag("--training", ca.training, "also print whole-run training FLOPs");
    cost->add_option("--recipe", ca.recipe, "recipe for --training");
    cost->add_option("--steps", ca.steps, "total steps for --training");
    cost->add_option("--dense-fraction", ca.dense_fraction, "dense phase fraction");
    cost->add_option("--finetune-fraction", ca.finetune_fraction, "fine-tune phase fraction");
    cost->add_option("--flops-multiplier", ca.flops_multiplier,
                     "per-step forward+backward multiplier (2 or 3)");
    cost->add_option("--k", ca.k_geo, "geometric schedule start scale");

    // schedule
    auto* sched = app.add_subcommand("schedule", "print a recipe's stage/decay timeline");
    ScheduleArgs sa;
    sched->add_option("--recipe", sa.recipe, "recipe name")->required();
    sched->add_option("--pattern", sa.pattern, "target pattern N:M");
    sched->add_option("--steps", sa.steps, "total steps");
    sched->add_option("--dense-fraction", sa.dense_fraction, "dense phase fraction");
    sched->add_option("--finetune-fraction", sa.finetune_fraction, "fine-tune phase fraction");
    sched->add_option("--k", sa.k_geo, "geometric schedule start scale");
    double ktau_flag = 0.0, keta_flag = 0.0;
    auto* ktau_opt = sched->add_option("--k-tau", ktau_flag, "linear decay rate override");
    auto* keta_opt = sched->add_option("--k-eta", keta_flag, "exponential decay rate override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed()) {
            if (*seed_opt) ov.seed = seed_flag;
            if (*out_opt) ov.out_dir = out_flag;
            if (*recipe_opt) ov.recipe = recipe_flag;
            if (*pattern_opt) ov.pattern = pattern_flag;
            if (*group_opt) ov.group = group_flag;
            if (*steps_opt) ov.steps = steps_flag;
            return cmd_train(config_path, ov);
        }
        if (cost->parsed()) {
            if (*sff_opt) ca.sff = sff_flag;
            if (*costpat_opt) ca.pattern = cost_pattern;
            return cmd_cost(ca);
        }
        if (sched->parsed()) {
            if (*ktau_opt) sa.k_tau = ktau_flag;
            if (*keta_opt) sa.k_eta = keta_flag;
            return cmd_schedule(sa);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

inline int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("nmflow");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace nmflow::cli
