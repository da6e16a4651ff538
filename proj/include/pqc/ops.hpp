#pragma once

// Differentiable primitives. All take and return Var<T>; instantiated for
// float (training) and double (gradient checks).

#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "pqc/autograd.hpp"

namespace pqc {

// Optional operand; kept out of template argument deduction so that
// std::nullopt and plain Vars convert.
template <typename T>
using OptVar = std::type_identity_t<std::optional<Var<T>>>;

enum class ElementwiseOp { kAdd, kSub, kMul, kRelu, kExp, kLog, kScale };

// Binary kinds need `b` with an equal shape or a single element (broadcast).
// kScale multiplies by `scalar`. Unary kinds ignore `b`.
template <typename T>
Var<T> elementwise(ElementwiseOp op, const Var<T>& a,
                   const OptVar<T>& b = std::nullopt,
                   T scalar = T(1));

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> scale(const Var<T>& a, T s);

// Reductions to shape {1}.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
// Mean over one axis; the axis is removed (rank-1 results keep shape {n}).
template <typename T> Var<T> mean_axis(const Var<T>& a, std::size_t axis);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& axes);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin,
             std::size_t end);

// (m x k) . (k x n) -> m x n
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// Rank-3 batched product with optional transposition of the trailing two
// axes of either operand.
template <typename T>
Var<T> batched_matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false,
                      bool trans_b = false);
// Scaled dot-product attention per slice g: softmax(scale * q_g k_g^T) v_g,
// with q, k, v of shape [G, N, d]. The N x N probabilities live only in a
// per-slice scratch buffer and are recomputed during the backward pass.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, T scale);
// x[..., n] + b[n]
template <typename T> Var<T> add_bias(const Var<T>& x, const Var<T>& b);
// x[rows, in] . w[in, out] + b[out]; x of higher rank is flattened to rows.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T> Var<T> softmax(const Var<T>& logits, std::size_t axis);
// Along the last axis.
template <typename T> Var<T> log_softmax(const Var<T>& logits);
// Normalises the last axis to zero mean / unit variance, then gamma * . + beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  T eps = T(1e-5));
// Unit L2 norm along the last axis (norm floored at eps).
template <typename T>
Var<T> l2_normalize(const Var<T>& x, T eps = T(1e-12));

// input NCHW, kernel OIHW, optional per-output-channel bias.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel,
              const OptVar<T>& bias, std::size_t stride,
              std::size_t padding);
template <typename T>
Var<T> maxpool2d(const Var<T>& input, std::size_t window, std::size_t stride);

// x[B, N, d]: rows with mask[b * N + n] != 0 are replaced by token[d].
template <typename T>
Var<T> replace_rows(const Var<T>& x, const std::vector<std::uint8_t>& mask,
                    const Var<T>& token);
// x[R, d] -> x[index[i], :] stacked.
template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index);

// Count of non-differentiable points (relu input exactly 0, tied maxima in a
// pooling window) met by gradient-tracking ops on this thread.
std::size_t kink_count();
void reset_kink_count();

}  // namespace pqc
