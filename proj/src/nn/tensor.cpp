// SPDX-License-Identifier: Apache-2.0
#include "slotdet/nn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace slotdet::nn {

namespace {
thread_local bool tape_on = true;
}

bool grad_enabled() { return tape_on; }

NoGradGuard::NoGradGuard() : previous_(tape_on) { tape_on = false; }
NoGradGuard::~NoGradGuard() { tape_on = previous_; }

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad)
    : shape_(std::move(shape)), data_(numel_of(shape_), T(0)), requires_grad_(requires_grad) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
    if (data_.size() != numel_of(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

template <typename T>
TensorPtr<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

template <typename T>
TensorPtr<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
TensorPtr<T> Tensor<T>::scalar(T value) {
    return std::make_shared<Tensor>(Shape{1}, std::vector<T>{value}, false);
}

template <typename T>
TensorPtr<T> Tensor<T>::make_result(Shape shape, std::vector<T> data,
                                    std::vector<TensorPtr<T>> parents, BackwardFn backward) {
    auto out = std::make_shared<Tensor>(std::move(shape), std::move(data), false);
    bool needs = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                             [](const TensorPtr<T>& p) { return p && p->requires_grad(); });
    if (needs) {
        out->requires_grad_ = true;
        out->parents_ = std::move(parents);
        out->backward_ = std::move(backward);
    }
    return out;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
    if (grad_.empty()) grad_.assign(data_.size(), T(0));
    return grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

template <typename T>
void Tensor<T>::backward() {
    if (data_.size() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_str(shape_));
    if (!requires_grad_) return;

    // Iterative post-order DFS; reverse post-order is a valid topological order.
    std::vector<Tensor*> order;
    std::unordered_set<const Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack{{this, 0}};
    seen.insert(this);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents_.size()) {
            Tensor* parent = node->parents_[next++].get();
            if (parent->requires_grad_ && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_ && node->has_grad()) node->backward_(*node);
    }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace slotdet::nn
