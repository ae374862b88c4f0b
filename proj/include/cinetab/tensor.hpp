// Dense n-d tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations in ops.hpp record
// parents and a backprop closure; backward() on a scalar loss walks the
// recorded graph once in reverse topological order. Leaves created with
// requires_grad keep their .grad buffer until zero_grad, so gradients from
// several losses (gradient accumulation across a batch) add up.
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cinetab/common.hpp"

namespace cinetab {

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on demand, same length as value
    bool requires_grad = false;
    bool leaf = false;
    bool tape_used = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

}  // namespace detail

// Global switch: when false, ops record no graph (inference / data paths).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
};

// Global switch: scan op outputs for non-finite values (on by default).
// NaN/Inf appearing from finite inputs is treated as a bug, not data.
bool finite_checks_enabled();
void set_finite_checks_enabled(bool on);

template <typename T>
class Tensor {
public:
    using Node = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T fill, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
    static Tensor scalar(T v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const T> data() const { return {node_->value.data(), node_->value.size()}; }
    std::span<const T> grad() const { return {node_->grad.data(), node_->grad.size()}; }
    bool has_grad() const { return !node_->grad.empty(); }

    // Mutable access to a leaf's storage (optimizer updates, loaders).
    std::vector<T>& values_mut() { return node_->value; }

    T item() const {
        require(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    void zero_grad() { node_->grad.clear(); }

    // Reverse-mode sweep from a scalar. A graph can only be consumed once;
    // a second backward through the same interior nodes throws UsageError.
    void backward() const;

    std::shared_ptr<Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

// Builds a fresh node for an op result. Parents/backprop are recorded only
// when grad mode is on and some parent needs gradients.
template <typename T>
Tensor<T> make_op_node(const char* op_name, Shape shape, std::vector<T> value,
                       std::vector<std::shared_ptr<Node<T>>> parents,
                       std::function<void(Node<T>&)> backprop);

template <typename T>
void check_finite(const char* op_name, const std::vector<T>& v);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cinetab
