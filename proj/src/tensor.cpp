#include "cinetab/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace cinetab {

namespace {
bool g_grad_enabled = true;
bool g_finite_checks = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks_enabled(bool on) { g_finite_checks = on; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return from_data(std::move(shape), {}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
    std::vector<T> v(numel(shape), fill);
    return from_data(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
    auto n = std::make_shared<Node>();
    const std::size_t want = numel(shape);
    if (data.empty()) data.assign(want, T(0));
    require(data.size() == want,
            "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                shape_str(shape));
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->leaf = true;
    return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v) {
    return from_data({1}, {v}, false);
}

template <typename T>
void Tensor<T>::backward() const {
    require(node_ != nullptr, "backward on undefined tensor");
    require(size() == 1, "backward requires a scalar loss, got " + shape_str(shape()));
    if (!node_->requires_grad)
        throw UsageError("backward: loss does not depend on any parameter with requires_grad");
    if (node_->tape_used)
        throw UsageError("backward: this graph was already consumed; rebuild the forward pass");

    // Iterative DFS post-order over parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (!n->leaf && n->tape_used)
            throw UsageError("backward: graph shares consumed interior nodes; rebuild the pass");
    }

    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
        if (!n->leaf) n->tape_used = true;
    }
}

namespace detail {

template <typename T>
void check_finite(const char* op_name, const std::vector<T>& v) {
    if (!g_finite_checks) return;
    for (const T x : v) {
        if (!std::isfinite(x))
            throw NumericError(std::string("non-finite value produced by op '") + op_name + "'");
    }
}

template <typename T>
Tensor<T> make_op_node(const char* op_name, Shape shape, std::vector<T> value,
                       std::vector<std::shared_ptr<Node<T>>> parents,
                       std::function<void(Node<T>&)> backprop) {
    require(value.size() == numel(shape), std::string("op '") + op_name +
                                              "' produced wrong element count for shape " +
                                              shape_str(shape));
    check_finite(op_name, value);
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool needs = false;
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
        if (needs) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
    }
    return Tensor<T>(std::move(n));
}

template void check_finite<float>(const char*, const std::vector<float>&);
template void check_finite<double>(const char*, const std::vector<double>&);
template Tensor<float> make_op_node<float>(const char*, Shape, std::vector<float>,
                                           std::vector<std::shared_ptr<Node<float>>>,
                                           std::function<void(Node<float>&)>);
template Tensor<double> make_op_node<double>(const char*, Shape, std::vector<double>,
                                             std::vector<std::shared_ptr<Node<double>>>,
                                             std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cinetab
