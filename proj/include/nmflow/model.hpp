// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nmflow/ops.hpp"
#include "nmflow/random.hpp"
#include "nmflow/sparsity.hpp"

namespace nmflow {

// Which sparsifiable family a weight tensor belongs to. Biases, embeddings,
// norm scales and the classifier head are Group::None and never sparsified.
enum class LayerGroup { None, Q, K, V, O, FF };

inline std::string layer_group_label(LayerGroup g) {
    switch (g) {
        case LayerGroup::None: return "none";
        case LayerGroup::Q: return "q";
        case LayerGroup::K: return "k";
        case LayerGroup::V: return "v";
        case LayerGroup::O: return "o";
        case LayerGroup::FF: return "ff";
    }
    throw ConfigError("unknown layer group");
}

struct NamedParam {
    std::string name;
    Tensor tensor;
    LayerGroup group = LayerGroup::None;
};

// Hook the trainer uses to rewrite sparsifiable weights on the forward pass
// (decayed masking, hard masking, or identity).
using WeightTransform = std::function<Tensor(const Tensor&, const NamedParam&)>;

inline WeightTransform identity_transform() {
    return [](const Tensor& w, const NamedParam&) { return w; };
}

// ---------------------------------------------------------------------------
// Group selection: maps user-facing selections (ff, qk, qkv, o) to patterns.
// ---------------------------------------------------------------------------

enum class SelectGroup { FF, QK, QKV, O };

inline std::string select_group_label(SelectGroup g) {
    switch (g) {
        case SelectGroup::FF: return "ff";
        case SelectGroup::QK: return "qk";
        case SelectGroup::QKV: return "qkv";
        case SelectGroup::O: return "o";
    }
    throw ConfigError("unknown selection group");
}

inline SelectGroup parse_select_group(const std::string& s) {
    for (SelectGroup g : {SelectGroup::FF, SelectGroup::QK, SelectGroup::QKV, SelectGroup::O})
        if (select_group_label(g) == s) return g;
    throw ConfigError("unknown layer group '" + s + "' (expect ff|qk|qkv|o)");
}

class LayerGroupSelection {
public:
    LayerGroupSelection() = default;

    void set(SelectGroup g, SparsityPattern p) {
        if (g == SelectGroup::QK && entries_.count(SelectGroup::QKV))
            throw ConfigError("selection conflict: qk and qkv both set; q/k would be governed twice");
        if (g == SelectGroup::QKV && entries_.count(SelectGroup::QK))
            throw ConfigError("selection conflict: qk and qkv both set; q/k would be governed twice");
        entries_[g] = p;
    }

    bool empty() const { return entries_.empty(); }
    const std::map<SelectGroup, SparsityPattern>& entries() const { return entries_; }

    // Pattern governing one weight-tensor group, if any.
    std::optional<SparsityPattern> pattern_for(LayerGroup g) const {
        auto find = [&](SelectGroup s) -> std::optional<SparsityPattern> {
            auto it = entries_.find(s);
            if (it == entries_.end()) return std::nullopt;
            return it->second;
        };
        switch (g) {
            case LayerGroup::FF: return find(SelectGroup::FF);
            case LayerGroup::Q:
            case LayerGroup::K:
                if (auto p = find(SelectGroup::QK)) return p;
                return find(SelectGroup::QKV);
            case LayerGroup::V: return find(SelectGroup::QKV);
            case LayerGroup::O: return find(SelectGroup::O);
            case LayerGroup::None: return std::nullopt;
        }
        return std::nullopt;
    }

private:
    std::map<SelectGroup, SparsityPattern> entries_;
};

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

class Model {
public:
    virtual ~Model() = default;

    // x is [batch, seq, token_dim]; returns logits [batch, num_classes].
    virtual Tensor forward(const Tensor& x, const WeightTransform& wt) = 0;

    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }

    NamedParam& param(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return p;
        throw ConfigError("model has no parameter named '" + name + "'");
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.numel();
        return n;
    }

protected:
    Tensor add_param(const std::string& name, Shape shape, std::vector<double> data, LayerGroup group) {
        Tensor t = Tensor::from_data(std::move(shape), std::move(data), /*requires_grad=*/true);
        params_.push_back({name, t, group});
        return t;
    }

    Tensor add_trunc_normal(const std::string& name, Shape shape, Rng& rng, LayerGroup group,
                            double std_dev = 0.02) {
        std::vector<double> data(numel(shape));
        rng.fill_trunc_normal(data, 0.0, std_dev);
        return add_param(name, std::move(shape), std::move(data), group);
    }

    Tensor add_const(const std::string& name, Shape shape, double value, LayerGroup group) {
        return add_param(name, std::move(shape), std::vector<double>(numel(shape), value), group);
    }

    std::vector<NamedParam> params_;
};

struct TinyTransformerConfig {
    std::size_t layers = 3;
    std::size_t heads = 3;
    std::size_t embed_dim = 192;
    std::size_t ff_dim = 768;
    std::size_t seq_len = 64;
    std::size_t token_dim = 16;  // width of the raw input tokens
    std::size_t num_classes = 10;

    void validate() const {
        if (layers == 0 || heads == 0 || embed_dim == 0 || ff_dim == 0 || seq_len == 0 ||
            token_dim == 0 || num_classes == 0)
            throw ConfigError("transformer config: all dims must be positive");
        if (embed_dim % heads != 0)
            throw ConfigError("transformer config: embed_dim " + std::to_string(embed_dim) +
                              " not divisible by heads " + std::to_string(heads));
    }

    // Closed-form parameter total; kept next to the builder so they move
    // together.
    std::size_t param_count() const {
        std::size_t n = embed_dim * token_dim + embed_dim;  // token projection
        n += seq_len * embed_dim;                           // positional embedding
        std::size_t per_layer = 2 * embed_dim                          // ln1
                                + 4 * embed_dim * embed_dim + 4 * embed_dim  // q,k,v,o
                                + 2 * embed_dim                        // ln2
                                + embed_dim * ff_dim + ff_dim          // ff1
                                + ff_dim * embed_dim + embed_dim;      // ff2
        n += layers * per_layer;
        n += num_classes * embed_dim + num_classes;  // head
        return n;
    }
};

namespace detail {

// Pre-LN encoder classifier over synthetic token sequences. Activations are
// kept as [batch*seq, embed] 2-D tensors between blocks; attention regroups
// into [batch*heads, seq, head_dim] for the batched einsums.
class TinyTransformer final : public Model {
public:
    TinyTransformer(TinyTransformerConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        tok_w_ = add_trunc_normal("token_proj.weight", {cfg_.embed_dim, cfg_.token_dim}, rng,
                                  LayerGroup::None);
        tok_b_ = add_const("token_proj.bias", {cfg_.embed_dim}, 0.0, LayerGroup::None);
        pos_ = add_trunc_normal("pos_embed", {cfg_.seq_len, cfg_.embed_dim}, rng, LayerGroup::None);
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            Block b;
            const std::string pre = "block" + std::to_string(l) + ".";
            b.ln1_g = add_const(pre + "ln1.gamma", {cfg_.embed_dim}, 1.0, LayerGroup::None);
            b.ln1_b = add_const(pre + "ln1.beta", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            b.wq = add_trunc_normal(pre + "attn.q.weight", {cfg_.embed_dim, cfg_.embed_dim}, rng,
                                    LayerGroup::Q);
            b.bq = add_const(pre + "attn.q.bias", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            b.wk = add_trunc_normal(pre + "attn.k.weight", {cfg_.embed_dim, cfg_.embed_dim}, rng,
                                    LayerGroup::K);
            b.bk = add_const(pre + "attn.k.bias", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            b.wv = add_trunc_normal(pre + "attn.v.weight", {cfg_.embed_dim, cfg_.embed_dim}, rng,
                                    LayerGroup::V);
            b.bv = add_const(pre + "attn.v.bias", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            b.wo = add_trunc_normal(pre + "attn.o.weight", {cfg_.embed_dim, cfg_.embed_dim}, rng,
                                    LayerGroup::O);
            b.bo = add_const(pre + "attn.o.bias", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            b.ln2_g = add_const(pre + "ln2.gamma", {cfg_.embed_dim}, 1.0, LayerGroup::None);
            b.ln2_b = add_const(pre + "ln2.beta", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            b.w1 = add_trunc_normal(pre + "ff1.weight", {cfg_.ff_dim, cfg_.embed_dim}, rng,
                                    LayerGroup::FF);
            b.b1 = add_const(pre + "ff1.bias", {cfg_.ff_dim}, 0.0, LayerGroup::None);
            b.w2 = add_trunc_normal(pre + "ff2.weight", {cfg_.embed_dim, cfg_.ff_dim}, rng,
                                    LayerGroup::FF);
            b.b2 = add_const(pre + "ff2.bias", {cfg_.embed_dim}, 0.0, LayerGroup::None);
            blocks_.push_back(b);
        }
        head_w_ = add_trunc_normal("head.weight", {cfg_.num_classes, cfg_.embed_dim}, rng,
                                   LayerGroup::None);
        head_b_ = add_const("head.bias", {cfg_.num_classes}, 0.0, LayerGroup::None);
    }

    const TinyTransformerConfig& config() const { return cfg_; }

    Tensor forward(const Tensor& x, const WeightTransform& wt) override {
        if (x.rank() != 3 || x.dim(1) != cfg_.seq_len || x.dim(2) != cfg_.token_dim)
            throw ShapeError("transformer forward: want [batch," + std::to_string(cfg_.seq_len) +
                             "," + std::to_string(cfg_.token_dim) + "], got " + shape_str(x.shape()));
        const std::size_t B = x.dim(0), S = cfg_.seq_len, E = cfg_.embed_dim, H = cfg_.heads;
        const std::size_t dh = E / H;

        Tensor h = linear(reshape(x, {B * S, cfg_.token_dim}), tw(tok_w_, wt), tok_b_);
        h = reshape(add(reshape(h, {B, S * E}), reshape(pos_, {S * E})), {B * S, E});

        for (const Block& blk : blocks_) {
            Tensor ln1 = layernorm_lastdim(h, blk.ln1_g, blk.ln1_b);
            Tensor q = split_heads(linear(ln1, tw(blk.wq, wt), blk.bq), B, S, H, dh);
            Tensor k = split_heads(linear(ln1, tw(blk.wk, wt), blk.bk), B, S, H, dh);
            Tensor v = split_heads(linear(ln1, tw(blk.wv, wt), blk.bv), B, S, H, dh);
            Tensor scores = scale(bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(double(dh)));
            Tensor ctx = bmm(softmax_lastdim(scores), v);  // [B*H, S, dh]
            Tensor merged = merge_heads(ctx, B, S, H, dh);
            h = add(h, linear(merged, tw(blk.wo, wt), blk.bo));

            Tensor ln2 = layernorm_lastdim(h, blk.ln2_g, blk.ln2_b);
            Tensor f = linear(gelu(linear(ln2, tw(blk.w1, wt), blk.b1)), tw(blk.w2, wt), blk.b2);
            h = add(h, f);
        }

        Tensor pooled = reduce_mean(reshape(h, {B, S, E}), 1);  // [B, E]
        return linear(pooled, tw(head_w_, wt), head_b_);
    }

private:
    struct Block {
        Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };

    Tensor tw(const Tensor& w, const WeightTransform& wt) {
        // NamedParam lookup by handle; params_ is small.
        for (auto& p : params_)
            if (p.tensor.handle() == w.handle()) return wt(w, p);
        throw ConfigError("weight transform on unregistered tensor");
    }

    static Tensor split_heads(const Tensor& t2d, std::size_t B, std::size_t S, std::size_t H,
                              std::size_t dh) {
        return reshape(permute0213(reshape(t2d, {B, S, H, dh})), {B * H, S, dh});
    }
    static Tensor merge_heads(const Tensor& t3d, std::size_t B, std::size_t S, std::size_t H,
                              std::size_t dh) {
        return reshape(permute0213(reshape(t3d, {B, H, S, dh})), {B * S, H * dh});
    }

    TinyTransformerConfig cfg_;
    Tensor tok_w_, tok_b_, pos_, head_w_, head_b_;
    std::vector<Block> blocks_;
};

// Linear+gelu stack over flattened inputs; hidden weights are sparsifiable as
// the FF group.
class Mlp final : public Model {
public:
    Mlp(std::vector<std::size_t> dims, Rng& rng) : dims_(std::move(dims)) {
        if (dims_.size() < 2) throw ConfigError("mlp needs at least [in, out] dims");
        for (std::size_t d : dims_)
            if (d == 0) throw ConfigError("mlp dims must be positive");
        for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
            const bool last = i + 2 == dims_.size();
            const std::string pre = "layer" + std::to_string(i) + ".";
            Layer l;
            l.w = add_trunc_normal(pre + "weight", {dims_[i + 1], dims_[i]}, rng,
                                   last ? LayerGroup::None : LayerGroup::FF);
            l.b = add_const(pre + "bias", {dims_[i + 1]}, 0.0, LayerGroup::None);
            l.activated = !last;
            layers_.push_back(l);
        }
    }

    Tensor forward(const Tensor& x, const WeightTransform& wt) override {
        Tensor h = x;
        if (h.rank() == 3) h = reshape(h, {h.dim(0), h.dim(1) * h.dim(2)});
        if (h.rank() != 2 || h.dim(1) != dims_.front())
            throw ShapeError("mlp forward: want trailing dim " + std::to_string(dims_.front()) +
                             ", got " + shape_str(x.shape()));
        std::size_t i = 0;
        for (const Layer& l : layers_) {
            NamedParam& p = params_[2 * i];  // weight precedes bias in registration order
            h = linear(h, wt(l.w, p), l.b);
            if (l.activated) h = gelu(h);
            ++i;
        }
        return h;
    }

private:
    struct Layer {
        Tensor w, b;
        bool activated = false;
    };
    std::vector<std::size_t> dims_;
    std::vector<Layer> layers_;
};

}  // namespace detail

inline std::unique_ptr<Model> build_tiny_vit(const TinyTransformerConfig& cfg, Rng& rng) {
    return std::make_unique<detail::TinyTransformer>(cfg, rng);
}

inline std::unique_ptr<Model> build_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
    return std::make_unique<detail::Mlp>(dims, rng);
}

}  // namespace nmflow
