// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "nmflow/data.hpp"
#include "nmflow/model.hpp"
#include "nmflow/optimizer.hpp"
#include "nmflow/phases.hpp"
#include "nmflow/sparsity.hpp"

namespace nmflow {

// ---------------------------------------------------------------------------
// Options and diagnostics
// ---------------------------------------------------------------------------

struct DiagnosticsConfig {
    std::size_t sample_every = 10;  // sampling cadence in steps
    double ema_coeff = 0.99;
};

struct TrainerOptions {
    std::size_t batch_size = 8;
    std::size_t log_every = 10;   // row cadence; the final step always logs
    std::size_t eval_every = 50;  // eval cadence; 0 = final step only
    DiagnosticsConfig diag;
    // Pins the pruned-weight multiplier to 1 and freezes schedule advancement.
    // Masks are still computed, so this isolates the masking machinery: the
    // run must reproduce a dense run bit-for-bit.
    bool pin_dense_equivalent = false;
    std::uint64_t seed = 0;
};

// Per-layer dispersion tracking: on sampling steps, the variance across a
// tracked tensor's elements of (a) |raw backprop gradient| and (b) the
// optimizer's second moment, each folded into a per-layer EMA. The EMA is
// seeded with the first sample rather than zero.
class NoiseDiagnostics {
public:
    NoiseDiagnostics() = default;
    explicit NoiseDiagnostics(DiagnosticsConfig cfg) : cfg_(cfg) {
        if (cfg_.sample_every == 0) throw ConfigError("diagnostics: sample_every must be positive");
        if (cfg_.ema_coeff < 0.0 || cfg_.ema_coeff >= 1.0)
            throw ConfigError("diagnostics: ema_coeff must lie in [0,1)");
    }

    bool is_sampling_step(std::size_t step) const { return step % cfg_.sample_every == 0; }

    static double element_variance(const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        return var / static_cast<double>(v.size());
    }

    static double abs_grad_variance(const std::vector<double>& grad) {
        std::vector<double> a(grad.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(grad[i]);
        return element_variance(a);
    }

    void fold(const std::string& layer, double grad_var_sample, double v_var_sample) {
        fold_one(grad_var_ema_, layer, grad_var_sample);
        fold_one(v_var_ema_, layer, v_var_sample);
    }

    const std::map<std::string, double>& grad_var_ema() const { return grad_var_ema_; }
    const std::map<std::string, double>& v_var_ema() const { return v_var_ema_; }

    double mean_grad_var_ema() const { return mean_of(grad_var_ema_); }
    double mean_v_var_ema() const { return mean_of(v_var_ema_); }

private:
    void fold_one(std::map<std::string, double>& ema, const std::string& k, double sample) {
        auto it = ema.find(k);
        if (it == ema.end())
            ema[k] = sample;
        else
            it->second = cfg_.ema_coeff * it->second + (1.0 - cfg_.ema_coeff) * sample;
    }
    static double mean_of(const std::map<std::string, double>& m) {
        if (m.empty()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0;
        for (const auto& [k, v] : m) s += v;
        return s / static_cast<double>(m.size());
    }

    DiagnosticsConfig cfg_;
    std::map<std::string, double> grad_var_ema_;
    std::map<std::string, double> v_var_ema_;
};

// ---------------------------------------------------------------------------
// Mask orchestration
// ---------------------------------------------------------------------------

// Owns the per-step masking regime for one training run: which recipe phase
// is live, which pattern each weight group is under, the decayed multiplier,
// frozen fine-tune masks, and the mask cache the straight-through recipe's
// gradient refinement consumes.
class MaskController {
public:
    MaskController(const RecipeConfig& recipe, const LayerGroupSelection& sel, const PhasePlan& plan,
                   bool pinned)
        : recipe_(recipe), sel_(sel), plan_(plan), pinned_(pinned) {
        if (recipe_.kind != RecipeKind::Dense) {
            if (sel_.empty()) sel_.set(SelectGroup::FF, recipe_.target);
            recipe_.resolve(plan_.decay_steps());
        }
        if (is_structure_decay(recipe_.kind)) {
            for (const auto& [g, pat] : sel_.entries()) {
                const std::string key = pat.str();
                if (schedules_.count(key)) continue;
                PatternSchedule ps;
                ps.stages = recipe_.kind == RecipeKind::SdgfStepwise
                                ? stepwise_schedule(pat)
                                : geometric_schedule(pat, recipe_.k_geo);
                if (plan_.decay_steps() > 0) {
                    auto part = interval_partition(plan_.decay_steps(), ps.stages.size());
                    std::size_t acc = 0;
                    for (std::size_t len : part) {
                        ps.stage_starts.push_back(acc);
                        acc += len;
                    }
                }
                schedules_[key] = std::move(ps);
            }
        }
    }

    const RecipeConfig& recipe() const { return recipe_; }
    const LayerGroupSelection& selection() const { return sel_; }

    // Transform for the training forward at `step`; masks are cached so
    // refine_gradients can reuse exactly what the forward saw.
    WeightTransform train_transform(std::size_t step) { return make_transform(step, true); }
    // Same regime, no cache writes; safe for evaluation mid-step.
    WeightTransform eval_transform(std::size_t step) { return make_transform(step, false); }

    // Straight-through gradient refinement: g += lambda * (1-mask) .* w on
    // every governed weight, using the masks of this step's forward.
    void refine_gradients(std::size_t step, Model& model) {
        if (pinned_ || recipe_.kind != RecipeKind::SrSte) return;
        if (!regime_for(step).ste) return;
        for (auto& p : model.params()) {
            if (!sel_.pattern_for(p.group)) continue;
            auto it = mask_cache_.find(p.name);
            if (it == mask_cache_.end())
                throw ConfigError("refine_gradients: no cached mask for '" + p.name +
                                  "' (forward not run this step?)");
            sr_ste_refine_grad(p.tensor.grad(), p.tensor.data(), it->second, recipe_.lambda_w);
        }
    }

    // Reported pruned-position multiplier at `step`: 1 before any masking or
    // when pinned, the live decay factor during mask-decay, otherwise 0.
    double report_decay_factor(std::size_t step) const {
        if (pinned_ || recipe_.kind == RecipeKind::Dense) return 1.0;
        if (plan_.phase_of(step) == Phase::Dense) return 1.0;
        Regime r = regime_for(step);
        if (r.frozen || r.ste || r.stage_masks) return 0.0;
        return r.delta;
    }

    // Pattern the primary (first-selected) group is under at `step`; 0:0
    // while unmasked.
    SparsityPattern report_active_pattern(std::size_t step) const {
        SparsityPattern none;
        if (recipe_.kind == RecipeKind::Dense || sel_.empty()) return none;
        if (plan_.phase_of(step) == Phase::Dense) return none;
        const SparsityPattern primary = sel_.entries().begin()->second;
        Regime r = regime_for(step);
        if (r.stage_masks) return stage_pattern(primary, r.decay_j);
        return primary;
    }

    // Absolute steps at which each schedule stage of `pat` begins.
    std::vector<std::size_t> stage_starts_absolute(const SparsityPattern& pat) const {
        auto it = schedules_.find(pat.str());
        if (it == schedules_.end())
            throw ConfigError("no schedule tracked for pattern " + pat.str());
        std::vector<std::size_t> out;
        for (std::size_t s : it->second.stage_starts) out.push_back(plan_.dense_steps() + s);
        return out;
    }

    // Final-state audit: block cardinality and achieved sparsity of the
    // effective (masked) weights under the last step's regime.
    struct GroupAudit {
        std::string param;
        std::string group;
        SparsityPattern target;
        bool cardinality_ok = true;
        double achieved_sparsity = 0.0;
    };

    std::vector<GroupAudit> audit(Model& model, std::size_t last_step) {
        std::vector<GroupAudit> out;
        WeightTransform wt = eval_transform(last_step);
        for (auto& p : model.params()) {
            auto pat = sel_.pattern_for(p.group);
            if (!pat) continue;
            Tensor eff = wt(p.tensor, p);
            GroupAudit a;
            a.param = p.name;
            a.group = layer_group_label(p.group);
            a.target = *pat;
            std::size_t zeros = 0;
            const auto& v = eff.data();
            bool ok = true;
            for (std::size_t base = 0; base < v.size(); base += pat->m) {
                std::size_t blk = 0;
                for (std::size_t i = 0; i < pat->m; ++i)
                    if (v[base + i] == 0.0) ++blk;
                if (blk != pat->m - pat->n) ok = false;
                zeros += blk;
            }
            a.cardinality_ok = ok;
            a.achieved_sparsity = static_cast<double>(zeros) / static_cast<double>(v.size());
            out.push_back(a);
        }
        return out;
    }

private:
    struct PatternSchedule {
        std::vector<SparsityPattern> stages;
        std::vector<std::size_t> stage_starts;  // offsets within the decay phase
    };

    struct Regime {
        bool masked = false;
        bool frozen = false;       // frozen binary target mask, delta 0
        bool ste = false;          // straight-through masked forward
        bool stage_masks = false;  // per-step stage-pattern masks, delta 0
        double delta = 1.0;
        std::size_t decay_j = 0;
    };

    Regime regime_for(std::size_t step) const {
        Regime r;
        if (recipe_.kind == RecipeKind::Dense) return r;
        const Phase ph = plan_.phase_of(step);
        if (ph == Phase::Dense) return r;
        r.masked = true;
        if (pinned_) {
            r.delta = 1.0;  // decay pinned; schedule held at its first stage
            return r;
        }
        const std::size_t j = step - plan_.dense_steps();
        r.decay_j = j;
        switch (recipe_.kind) {
            case RecipeKind::SrSte:
                r.ste = true;
                return r;
            case RecipeKind::MdgfLinear:
            case RecipeKind::MdgfExp: {
                if (ph == Phase::FineTune) {
                    r.frozen = true;
                    return r;
                }
                const double d = recipe_.decay_factor(j);
                if (d < 1e-6) {
                    r.frozen = true;  // multiplier negligible; bind the mask now
                    return r;
                }
                r.delta = d;
                return r;
            }
            case RecipeKind::SdgfStepwise:
            case RecipeKind::SdgfGeometric: {
                if (ph == Phase::FineTune) {
                    r.frozen = true;
                    return r;
                }
                r.stage_masks = true;
                return r;
            }
            case RecipeKind::Dense: break;
        }
        throw ConfigError("regime_for: unhandled recipe");
    }

    SparsityPattern stage_pattern(const SparsityPattern& pat, std::size_t j) const {
        auto it = schedules_.find(pat.str());
        if (it == schedules_.end())
            throw ConfigError("stage_pattern: no schedule for " + pat.str());
        const auto& starts = it->second.stage_starts;
        std::size_t idx = 0;
        for (std::size_t i = 0; i < starts.size(); ++i)
            if (starts[i] <= j) idx = i;
        return it->second.stages[idx];
    }

    Tensor frozen_mask(const NamedParam& p, const SparsityPattern& pat) {
        auto it = frozen_masks_.find(p.name);
        if (it != frozen_masks_.end()) return it->second;
        Tensor m = compute_nm_mask(p.tensor, pat);
        frozen_masks_.emplace(p.name, m);
        return m;
    }

    WeightTransform make_transform(std::size_t step, bool cache) {
        const Regime r = regime_for(step);
        const bool pinned = pinned_;
        MaskController* self = this;
        return [self, r, cache, pinned](const Tensor& w, const NamedParam& p) -> Tensor {
            if (!r.masked) return w;
            auto pat = self->sel_.pattern_for(p.group);
            if (!pat) return w;
            if (pinned) {
                SparsityPattern active = *pat;
                if (is_structure_decay(self->recipe_.kind))
                    active = self->schedules_.at(pat->str()).stages.front();
                return apply_decayed_mask(w, compute_nm_mask(w, active), 1.0);
            }
            if (r.frozen) {
                Tensor m = self->frozen_mask(p, *pat);
                if (cache) self->mask_cache_[p.name] = m.data();
                return apply_decayed_mask(w, m, 0.0);
            }
            const SparsityPattern active = r.stage_masks ? self->stage_pattern(*pat, r.decay_j) : *pat;
            Tensor m = compute_nm_mask(w, active);
            if (cache) self->mask_cache_[p.name] = m.data();
            if (r.ste) return ste_mask(w, m);
            return apply_decayed_mask(w, m, r.stage_masks ? 0.0 : r.delta);
        };
    }

    RecipeConfig recipe_;
    LayerGroupSelection sel_;
    PhasePlan plan_;
    bool pinned_ = false;
    std::map<std::string, PatternSchedule> schedules_;   // keyed by pattern string
    std::map<std::string, Tensor> frozen_masks_;         // keyed by param name
    std::map<std::string, std::vector<double>> mask_cache_;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

namespace detail {
// Temporarily drops requires_grad on all parameters so evaluation forwards
// build no tape.
class GradPause {
public:
    explicit GradPause(std::vector<NamedParam>& params) {
        for (auto& p : params) {
            saved_.emplace_back(p.tensor.impl(), p.tensor.requires_grad());
            p.tensor.impl()->requires_grad = false;
        }
    }
    ~GradPause() {
        for (auto& [impl, rg] : saved_) impl->requires_grad = rg;
    }
    GradPause(const GradPause&) = delete;
    GradPause& operator=(const GradPause&) = delete;

private:
    std::vector<std::pair<TensorImpl*, bool>> saved_;
};
}  // namespace detail

// Deterministic top-1 accuracy and mean loss over a split, in chunks.
inline EvalResult evaluate(Model& model, const Dataset& ds, const WeightTransform& wt,
                           std::size_t chunk = 64) {
    if (ds.size() == 0) throw ConfigError("evaluate: empty dataset");
    if (chunk == 0) throw ConfigError("evaluate: chunk must be positive");
    detail::GradPause pause(model.params());
    std::size_t hits = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t stop = std::min(start + chunk, ds.size());
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [bx, by] = ds.batch(idx);
        Tensor logits = model.forward(bx, wt);
        loss_sum += cross_entropy(logits, by).value() * static_cast<double>(idx.size());
        const std::size_t classes = logits.dim(1);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double* row = logits.data().data() + i * classes;
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = c;
            if (static_cast<int>(best) == by[i]) ++hits;
        }
    }
    return {static_cast<double>(hits) / static_cast<double>(ds.size()),
            loss_sum / static_cast<double>(ds.size())};
}

// ---------------------------------------------------------------------------
// Training report
// ---------------------------------------------------------------------------

struct StepRecord {
    std::size_t step = 0;
    Phase phase = Phase::Dense;
    double loss = 0.0;
    double eval_acc = std::numeric_limits<double>::quiet_NaN();  // NaN = not evaluated this row
    double decay_factor = 1.0;
    std::size_t active_n = 0;  // 0:0 while unmasked
    std::size_t active_m = 0;
    double grad_var_ema = std::numeric_limits<double>::quiet_NaN();
    double second_moment_var_ema = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
};

struct TrainingReport {
    std::vector<StepRecord> rows;
    bool nan_abort = false;
    std::size_t nan_step = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double final_eval_acc = std::numeric_limits<double>::quiet_NaN();
    double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
    double final_grad_var_ema = std::numeric_limits<double>::quiet_NaN();
    double final_second_moment_var_ema = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, double> grad_var_ema_by_layer;
    std::map<std::string, double> second_moment_var_ema_by_layer;
    std::map<std::string, std::size_t> phase_steps;  // executed steps per phase label
    std::vector<std::size_t> stage_starts;           // absolute, primary pattern (structure decay)
    std::vector<MaskController::GroupAudit> audit;

    double overall_achieved_sparsity() const {
        if (audit.empty()) return 0.0;
        double s = 0.0;
        for (const auto& a : audit) s += a.achieved_sparsity;
        return s / static_cast<double>(audit.size());
    }

    void to_csv(std::ostream& out) const {
        auto field = [](double v) { return std::isnan(v) ? std::string() : detail::fmt_g17(v); };
        out << "# nmflow-report v1\n";
        out << "step,phase,loss,eval_acc,decay_factor,active_n,active_m,grad_var_ema,"
               "second_moment_var_ema,lr\n";
        for (const auto& r : rows)
            out << r.step << ',' << phase_label(r.phase) << ',' << detail::fmt_g17(r.loss) << ','
                << field(r.eval_acc) << ',' << detail::fmt_g17(r.decay_factor) << ',' << r.active_n
                << ',' << r.active_m << ',' << field(r.grad_var_ema) << ','
                << field(r.second_moment_var_ema) << ',' << detail::fmt_g17(r.lr) << '\n';
        if (nan_abort) out << "# aborted: non-finite loss at step " << nan_step << "\n";
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        to_csv(out);
        if (!out) throw IoError("write to '" + path + "' failed");
    }
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline TrainingReport run_training(Model& model, const RecipeConfig& recipe,
                                   const LayerGroupSelection& sel, const PhasePlan& plan,
                                   const SyntheticData& data, const AdamWConfig& opt_cfg,
                                   const TrainerOptions& topt) {
    plan.validate();
    opt_cfg.validate();
    if (topt.batch_size == 0) throw ConfigError("trainer: batch_size must be positive");
    if (data.train.size() == 0) throw ConfigError("trainer: empty training split");
    if (data.eval.size() == 0) throw ConfigError("trainer: empty eval split");

    MaskController masks(recipe, sel, plan, topt.pin_dense_equivalent);
    AdamW opt(opt_cfg, model.params());
    NoiseDiagnostics diag(topt.diag);
    Rng rng(topt.seed);

    // FF weights are the tracked diagnostic layers; remember optimizer slots.
    std::vector<std::size_t> tracked;
    for (std::size_t i = 0; i < model.params().size(); ++i)
        if (model.params()[i].group == LayerGroup::FF) tracked.push_back(i);

    TrainingReport rep;
    for (std::size_t step = 0; step < plan.total_steps; ++step) {
        const Phase phase = plan.phase_of(step);
        ++rep.phase_steps[phase_label(phase)];

        std::vector<std::size_t> idx(topt.batch_size);
        for (auto& i : idx) i = rng.uniform_index(data.train.size());
        auto [bx, by] = data.train.batch(idx);

        Tensor loss = cross_entropy(model.forward(bx, masks.train_transform(step)), by);
        const double loss_v = loss.value();
        if (!std::isfinite(loss_v)) {
            rep.nan_abort = true;
            rep.nan_step = step;
            break;
        }
        backward(loss);

        const bool sampling = diag.is_sampling_step(step);
        std::map<std::string, double> grad_samples;
        if (sampling)
            for (std::size_t i : tracked)
                grad_samples[model.params()[i].name] =
                    NoiseDiagnostics::abs_grad_variance(model.params()[i].tensor.grad());

        masks.refine_gradients(step, model);
        if (opt_cfg.clip_norm > 0.0) clip_global_norm(model.params(), opt_cfg.clip_norm);
        const double lr = opt_cfg.lr_at(step, plan.total_steps);
        opt.step(model.params(), lr);

        if (sampling)
            for (std::size_t i : tracked)
                diag.fold(model.params()[i].name, grad_samples[model.params()[i].name],
                          NoiseDiagnostics::element_variance(opt.second_moment(i)));

        for (auto& p : model.params()) p.tensor.zero_grad();

        const bool last = step + 1 == plan.total_steps;
        const bool do_eval = (topt.eval_every > 0 && (step + 1) % topt.eval_every == 0) || last;
        double acc = std::numeric_limits<double>::quiet_NaN();
        if (do_eval) {
            EvalResult er = evaluate(model, data.eval, masks.eval_transform(step));
            acc = er.accuracy;
            rep.final_eval_acc = er.accuracy;
            rep.final_eval_loss = er.mean_loss;
        }
        const bool do_row = (topt.log_every > 0 && (step + 1) % topt.log_every == 0) || do_eval;
        if (do_row) {
            StepRecord r;
            r.step = step;
            r.phase = phase;
            r.loss = loss_v;
            r.eval_acc = acc;
            r.decay_factor = masks.report_decay_factor(step);
            SparsityPattern p = masks.report_active_pattern(step);
            r.active_n = p.n;
            r.active_m = p.m;
            r.grad_var_ema = diag.mean_grad_var_ema();
            r.second_moment_var_ema = diag.mean_v_var_ema();
            r.lr = lr;
            rep.rows.push_back(r);
        }
        rep.final_loss = loss_v;
    }

    const std::size_t last_step = rep.nan_abort ? rep.nan_step : plan.total_steps - 1;
    rep.audit = masks.audit(model, last_step);
    rep.final_grad_var_ema = diag.mean_grad_var_ema();
    rep.final_second_moment_var_ema = diag.mean_v_var_ema();
    rep.grad_var_ema_by_layer = diag.grad_var_ema();
    rep.second_moment_var_ema_by_layer = diag.v_var_ema();
    if (is_structure_decay(masks.recipe().kind) && !masks.selection().empty() &&
        !topt.pin_dense_equivalent)
        rep.stage_starts = masks.stage_starts_absolute(masks.selection().entries().begin()->second);
    return rep;
}

}  // namespace nmflow
