// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "slotdet/nn/tensor.hpp"

// Differentiable operators over single-image tensors.
//
// Spatial tensors are laid out [channels, height, width]; batched feature
// rows are [rows, features]. Every op records its backward closure on the
// result when any input requires a gradient.

namespace slotdet::nn {

// Elementwise, same-shape operands.
template <typename T> TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T> TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T> TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T> TensorPtr<T> scale(const TensorPtr<T>& a, T factor);
template <typename T> TensorPtr<T> add_scalar(const TensorPtr<T>& a, T offset);
template <typename T> TensorPtr<T> square(const TensorPtr<T>& a);

/// log(max(a, floor)). The clamped region has zero gradient.
template <typename T> TensorPtr<T> log_clamped(const TensorPtr<T>& a, T floor);

/// Sum of every element, shape [1].
template <typename T> TensorPtr<T> sum(const TensorPtr<T>& a);

/// Weighted sum of scalar tensors: sum_i weights[i] * terms[i], shape [1].
template <typename T>
TensorPtr<T> weighted_sum(const std::vector<TensorPtr<T>>& terms, const std::vector<T>& weights);

template <typename T> TensorPtr<T> relu(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> sigmoid(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> tanh(const TensorPtr<T>& a);

/// Numerically stable softmax along `axis`.
template <typename T> TensorPtr<T> softmax(const TensorPtr<T>& a, std::size_t axis);

/// 2x2 max pooling with stride 2 on [C, H, W]; H and W must be even.
template <typename T> TensorPtr<T> maxpool2(const TensorPtr<T>& x);

/// Cross-correlation of x [C, H, W] with w [O, C, KH, KW] plus bias b [O].
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    std::size_t stride, std::size_t pad);

/// Fully connected layer: x [N, in], w [out, in], b [out] -> [N, out].
template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b);

/// Contiguous slice [begin, begin + length) along `axis`.
template <typename T>
TensorPtr<T> narrow(const TensorPtr<T>& a, std::size_t axis, std::size_t begin, std::size_t length);

template <typename T> TensorPtr<T> reshape(const TensorPtr<T>& a, Shape shape);

/// Gather size x size neighbourhoods of `map` [C, H, W] centred on each
/// (row, col) cell. Result is [N, C * size * size] with per-row layout
/// (c, dy, dx). Cells outside the map read as zero and receive no gradient.
template <typename T>
TensorPtr<T> gather_patches(const TensorPtr<T>& map, const std::vector<std::pair<int, int>>& cells,
                            std::size_t size);

}  // namespace slotdet::nn
