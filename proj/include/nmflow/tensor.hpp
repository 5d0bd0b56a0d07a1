// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "nmflow/common.hpp"

namespace nmflow {

class Tensor;

// One node of the reverse-mode tape. Shape is fixed at construction; data is
// row-major. `grad` stays empty until backward touches the node. Non-leaf
// nodes carry the references to their inputs plus a closure applying the
// chain rule; leaves carry neither.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;

    std::vector<Tensor> parents;
    std::function<void(TensorImpl&)> backward_fn;

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// Cheap shared handle to a tape node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto impl = std::make_shared<TensorImpl>();
        impl->data.assign(nmflow::numel(shape), 0.0);
        impl->shape = std::move(shape);
        impl->requires_grad = requires_grad;
        return Tensor(impl);
    }

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (nmflow::numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        auto impl = std::make_shared<TensorImpl>();
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->requires_grad = requires_grad;
        return Tensor(impl);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::size_t rank() const { return impl_->shape.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }

    bool requires_grad() const { return impl_->requires_grad; }

    double value() const {
        if (numel() != 1) throw ShapeError("value() requires a scalar, got " + shape_str(shape()));
        return impl_->data[0];
    }

    void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

private:
    std::shared_ptr<TensorImpl> impl_;
};

namespace detail {

// Creates an op node. Gradient tracking (and the tape edge) is dropped when no
// input requires grad, so pure-inference graphs stay flat.
inline Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn) {
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), rg);
    out.impl()->leaf = false;
    if (rg) {
        out.impl()->parents = std::move(parents);
        out.impl()->backward_fn = std::move(backward_fn);
    }
    return out;
}

inline void topo_order(TensorImpl* root, std::vector<TensorImpl*>& order) {
    // Iterative post-order DFS over parents.
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorImpl* p = node->parents[idx].impl();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are rebuilt per sweep.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    std::vector<TensorImpl*> order;
    detail::topo_order(loss.impl(), order);

    for (TensorImpl* node : order) {
        if (!node->leaf)
            node->grad.assign(node->data.size(), 0.0);
        else
            node->ensure_grad();
    }
    loss.impl()->grad[0] += 1.0;

    // `order` is post-order, so children come after their parents when
    // reversed; walk from the back.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

}  // namespace nmflow
