// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slotdet::nn {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

/// Whether op results on this thread record backward closures.
bool grad_enabled();

/// Turns tape recording off on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

/// A dense row-major array that doubles as a node of the reverse-mode tape.
///
/// Every op result keeps its inputs alive through `parents()` and carries a
/// backward closure that reads this node's gradient and accumulates into the
/// parents. Leaves (parameters, inputs) have no closure. Dropping the root of
/// a graph releases every intermediate node.
template <typename T>
class Tensor {
public:
    using BackwardFn = std::function<void(Tensor&)>;

    Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static TensorPtr<T> zeros(Shape shape, bool requires_grad = false);
    static TensorPtr<T> from(Shape shape, std::vector<T> data, bool requires_grad = false);
    static TensorPtr<T> scalar(T value);

    /// Build an op result. `requires_grad` is inherited from the parents.
    static TensorPtr<T> make_result(Shape shape, std::vector<T> data,
                                    std::vector<TensorPtr<T>> parents, BackwardFn backward);

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }

    /// Gradient accumulator; allocated (zeroed) on first access.
    std::span<T> grad();
    std::span<const T> grad() const { return grad_; }
    bool has_grad() const { return !grad_.empty(); }
    void zero_grad();

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool flag) { requires_grad_ = flag; }

    const std::vector<TensorPtr<T>>& parents() const { return parents_; }

    T item() const;

    /// Seed d(this)/d(this) = 1 and propagate to every reachable node.
    void backward();

private:
    Shape shape_;
    std::vector<T> data_;
    std::vector<T> grad_;
    bool requires_grad_ = false;
    std::vector<TensorPtr<T>> parents_;
    BackwardFn backward_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace slotdet::nn
