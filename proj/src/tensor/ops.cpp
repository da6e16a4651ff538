#include "pqc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "pqc/simd/kernels.hpp"

namespace pqc {
namespace {

thread_local std::size_t t_kinks = 0;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeMismatch(msg);
}

template <typename T>
void axpy_into(Node<T>& target, const T* src, T alpha = T(1)) {
  if (!target.requires_grad) return;
  T* g = target.grad_buffer();
  const std::size_t n = target.value.size();
  for (std::size_t i = 0; i < n; ++i) g[i] += alpha * src[i];
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
Var<T> binary(ElementwiseOp op, const Var<T>& a, const Var<T>& b) {
  const bool same = a.shape() == b.shape();
  const bool b_scalar = !same && b.size() == 1;
  const bool a_scalar = !same && !b_scalar && a.size() == 1;
  if (!same && !b_scalar && !a_scalar) {
    throw ShapeMismatch("elementwise operands " + shape_string(a.shape()) +
                        " and " + shape_string(b.shape()));
  }
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const T* av = a.value().raw();
  const T* bv = b.value().raw();
  const std::size_t as = a_scalar ? 0 : 1;
  const std::size_t bs = b_scalar ? 0 : 1;

  Tensor<T> out(out_shape);
  T* o = out.raw();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i * as] + bv[i * bs];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i * as] - bv[i * bs];
      break;
    default:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i * as] * bv[i * bs];
      break;
  }
  const char* name = op == ElementwiseOp::kAdd   ? "add"
                     : op == ElementwiseOp::kSub ? "sub"
                                                 : "mul";
  return make_result<T>(name, std::move(out), {a, b}, [op, n, as, bs](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const T* g = self.grad.data();
    const T sign_b = op == ElementwiseOp::kSub ? T(-1) : T(1);
    if (pa.requires_grad) {
      T* ga = pa.grad_buffer();
      const T* bv = pb.value.raw();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i * as] += op == ElementwiseOp::kMul ? g[i] * bv[i * bs] : g[i];
      }
    }
    if (pb.requires_grad) {
      T* gb = pb.grad_buffer();
      const T* av = pa.value.raw();
      for (std::size_t i = 0; i < n; ++i) {
        gb[i * bs] += op == ElementwiseOp::kMul ? g[i] * av[i * as] : sign_b * g[i];
      }
    }
  });
}

template <typename T>
Var<T> unary(ElementwiseOp op, const Var<T>& a, T scalar) {
  const std::size_t n = a.size();
  const T* x = a.value().raw();
  Tensor<T> out(a.shape());
  T* o = out.raw();
  const char* name = "scale";
  switch (op) {
    case ElementwiseOp::kRelu:
      name = "relu";
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
      if (a.requires_grad()) {
        for (std::size_t i = 0; i < n; ++i) t_kinks += x[i] == T(0);
      }
      break;
    case ElementwiseOp::kExp:
      name = "exp";
      std::copy(x, x + n, o);
      simd::exp_inplace(o, n);
      break;
    case ElementwiseOp::kLog:
      name = "log";
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > T(0))) throw DomainError("log of non-positive value");
        o[i] = std::log(x[i]);
      }
      break;
    default:
      for (std::size_t i = 0; i < n; ++i) o[i] = scalar * x[i];
      break;
  }
  return make_result<T>(name, std::move(out), {a}, [op, n, scalar](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    T* ga = pa.grad_buffer();
    const T* g = self.grad.data();
    const T* x = pa.value.raw();
    const T* y = self.value.raw();
    switch (op) {
      case ElementwiseOp::kRelu:
        for (std::size_t i = 0; i < n; ++i) ga[i] += x[i] > T(0) ? g[i] : T(0);
        break;
      case ElementwiseOp::kExp:
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
        break;
      case ElementwiseOp::kLog:
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / x[i];
        break;
      default:
        for (std::size_t i = 0; i < n; ++i) ga[i] += scalar * g[i];
        break;
    }
  });
}

}  // namespace

std::size_t kink_count() { return t_kinks; }
void reset_kink_count() { t_kinks = 0; }

template <typename T>
Var<T> elementwise(ElementwiseOp op, const Var<T>& a,
                   const OptVar<T>& b, T scalar) {
  switch (op) {
    case ElementwiseOp::kAdd:
    case ElementwiseOp::kSub:
    case ElementwiseOp::kMul:
      if (!b) throw ShapeMismatch("binary elementwise op needs two operands");
      return binary(op, a, *b);
    default:
      return unary(op, a, scalar);
  }
}

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b) { return binary(ElementwiseOp::kAdd, a, b); }
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b) { return binary(ElementwiseOp::kSub, a, b); }
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b) { return binary(ElementwiseOp::kMul, a, b); }
template <typename T> Var<T> relu(const Var<T>& a) { return unary(ElementwiseOp::kRelu, a, T(1)); }
template <typename T> Var<T> exp(const Var<T>& a) { return unary(ElementwiseOp::kExp, a, T(1)); }
template <typename T> Var<T> log(const Var<T>& a) { return unary(ElementwiseOp::kLog, a, T(1)); }
template <typename T> Var<T> scale(const Var<T>& a, T s) { return unary(ElementwiseOp::kScale, a, s); }

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  return make_result<T>("sum", Tensor<T>::scalar(s), {a}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    T* ga = pa.grad_buffer();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < pa.value.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Var<T> mean_axis(const Var<T>& a, std::size_t axis) {
  require(axis < a.value().rank(), "mean_axis: axis out of range");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.value().rank(); ++i) {
    if (i != axis) out_shape.push_back(a.shape()[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out(out_shape);
  const T* x = a.value().raw();
  T* o = out.raw();
  const T inv = T(1) / static_cast<T>(s.extent);
  for (std::size_t p = 0; p < s.outer; ++p) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const T* src = x + (p * s.extent + e) * s.inner;
      T* dst = o + p * s.inner;
      for (std::size_t q = 0; q < s.inner; ++q) dst[q] += src[q];
    }
  }
  for (auto& v : out.storage()) v *= inv;
  return make_result<T>("mean_axis", std::move(out), {a}, [s, inv](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    T* ga = pa.grad_buffer();
    const T* g = self.grad.data();
    for (std::size_t p = 0; p < s.outer; ++p) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        T* dst = ga + (p * s.extent + e) * s.inner;
        const T* src = g + p * s.inner;
        for (std::size_t q = 0; q < s.inner; ++q) dst[q] += inv * src[q];
      }
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  require(numel(shape) == a.size(), "reshape " + shape_string(a.shape()) +
                                        " -> " + shape_string(shape));
  return make_result<T>("reshape", a.value().reshaped(std::move(shape)), {a},
                        [](Node<T>& self) {
                          axpy_into(*self.parents[0], self.grad.data());
                        });
}

template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& axes) {
  const std::size_t rank = a.value().rank();
  require(axes.size() == rank, "permute: axes rank mismatch");
  std::vector<bool> used(rank, false);
  for (std::size_t ax : axes) {
    require(ax < rank && !used[ax], "permute: invalid axes");
    used[ax] = true;
  }
  const Shape& in_shape = a.shape();
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in_shape[i];
  // stride in the input for each output axis
  auto strides = std::make_shared<std::vector<std::size_t>>(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    (*strides)[i] = in_strides[axes[i]];
  }

  // Visits output elements in order, yielding the matching input offset.
  auto walk = [rank, out_shape, strides](auto&& fn) {
    const std::size_t n = numel(out_shape);
    const std::size_t last = out_shape[rank - 1];
    const std::size_t last_stride = (*strides)[rank - 1];
    std::vector<std::size_t> idx(rank, 0);
    std::size_t base = 0;
    for (std::size_t o = 0; o < n; o += last) {
      for (std::size_t j = 0; j < last; ++j) fn(o + j, base + j * last_stride);
      for (std::size_t d = rank - 1; d-- > 0;) {
        ++idx[d];
        base += (*strides)[d];
        if (idx[d] < out_shape[d]) break;
        base -= idx[d] * (*strides)[d];
        idx[d] = 0;
      }
    }
  };

  Tensor<T> out(out_shape);
  const T* x = a.value().raw();
  T* y = out.raw();
  walk([&](std::size_t o, std::size_t i) { y[o] = x[i]; });
  return make_result<T>("permute", std::move(out), {a}, [walk](Node<T>& self) {
    T* ga = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    walk([&](std::size_t o, std::size_t i) { ga[i] += g[o]; });
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  require(!parts.empty(), "concat of nothing");
  const Shape& ref = parts[0].shape();
  require(axis < ref.size(), "concat: axis out of range");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.shape().size() == ref.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      require(i == axis || p.shape()[i] == ref[i], "concat: extent mismatch");
    }
    extents.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const AxisSplit s = split_at(out_shape, axis);
  Tensor<T> out(out_shape);
  T* y = out.raw();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* x = parts[k].value().raw();
    const std::size_t chunk = extents[k] * s.inner;
    for (std::size_t p = 0; p < s.outer; ++p) {
      std::copy(x + p * chunk, x + (p + 1) * chunk,
                y + p * total * s.inner + offset * s.inner);
    }
    offset += extents[k];
  }
  return make_result<T>("concat", std::move(out), parts, [s, extents, total](Node<T>& self) {
    const T* g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node<T>& pk = *self.parents[k];
      const std::size_t chunk = extents[k] * s.inner;
      if (pk.requires_grad) {
        T* gk = pk.grad_buffer();
        for (std::size_t p = 0; p < s.outer; ++p) {
          const T* src = g + p * total * s.inner + offset * s.inner;
          for (std::size_t q = 0; q < chunk; ++q) gk[p * chunk + q] += src[q];
        }
      }
      offset += extents[k];
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  require(axis < a.value().rank(), "slice: axis out of range");
  require(begin < end && end <= a.shape()[axis], "slice: bad range");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  Tensor<T> out(out_shape);
  const std::size_t chunk = (end - begin) * s.inner;
  const T* x = a.value().raw();
  for (std::size_t p = 0; p < s.outer; ++p) {
    const T* src = x + (p * s.extent + begin) * s.inner;
    std::copy(src, src + chunk, out.raw() + p * chunk);
  }
  return make_result<T>("slice", std::move(out), {a}, [s, begin, chunk](Node<T>& self) {
    T* ga = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    for (std::size_t p = 0; p < s.outer; ++p) {
      T* dst = ga + (p * s.extent + begin) * s.inner;
      for (std::size_t q = 0; q < chunk; ++q) dst[q] += g[p * chunk + q];
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul needs rank-2 operands");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul inner extents " + shape_string(a.shape()) +
                                 " x " + shape_string(b.shape()));
  Tensor<T> out({m, n});
  simd::gemm(false, false, m, n, k, T(1), a.value().raw(), k, b.value().raw(), n,
             T(0), out.raw(), n);
  return make_result<T>("matmul", std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const T* g = self.grad.data();
    if (pa.requires_grad) {
      simd::gemm(false, true, m, k, n, T(1), g, n, pb.value.raw(), n, T(1),
                 pa.grad_buffer(), k);
    }
    if (pb.requires_grad) {
      simd::gemm(true, false, k, n, m, T(1), pa.value.raw(), k, g, n, T(1),
                 pb.grad_buffer(), n);
    }
  });
}

template <typename T>
Var<T> batched_matmul(const Var<T>& a, const Var<T>& b, bool trans_a,
                      bool trans_b) {
  require(a.value().rank() == 3 && b.value().rank() == 3,
          "batched_matmul needs rank-3 operands");
  const std::size_t batch = a.shape()[0];
  require(b.shape()[0] == batch, "batched_matmul batch mismatch");
  const std::size_t m = trans_a ? a.shape()[2] : a.shape()[1];
  const std::size_t k = trans_a ? a.shape()[1] : a.shape()[2];
  const std::size_t kb = trans_b ? b.shape()[2] : b.shape()[1];
  const std::size_t n = trans_b ? b.shape()[1] : b.shape()[2];
  require(k == kb, "batched_matmul inner extents " + shape_string(a.shape()) +
                       " x " + shape_string(b.shape()));
  const std::size_t lda = a.shape()[2], ldb = b.shape()[2];
  const std::size_t a_step = m * k, b_step = k * n, c_step = m * n;
  Tensor<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    simd::gemm(trans_a, trans_b, m, n, k, T(1), a.value().raw() + i * a_step, lda,
               b.value().raw() + i * b_step, ldb, T(0), out.raw() + i * c_step, n);
  }
  return make_result<T>("batched_matmul", std::move(out), {a, b},
                        [=](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    for (std::size_t i = 0; i < batch; ++i) {
      const T* g = self.grad.data() + i * c_step;
      const T* av = pa.value.raw() + i * a_step;
      const T* bv = pb.value.raw() + i * b_step;
      if (pa.requires_grad) {
        T* ga = pa.grad_buffer() + i * a_step;
        if (!trans_a) {
          // dA = dC . op(B)^T
          simd::gemm(false, !trans_b, m, k, n, T(1), g, n, bv, ldb, T(1), ga, k);
        } else {
          // stored A^T: dA^T = op(B) . dC^T
          simd::gemm(trans_b, true, k, m, n, T(1), bv, ldb, g, n, T(1), ga, m);
        }
      }
      if (pb.requires_grad) {
        T* gb = pb.grad_buffer() + i * b_step;
        if (!trans_b) {
          // dB = op(A)^T . dC
          simd::gemm(!trans_a, false, k, n, m, T(1), av, lda, g, n, T(1), gb, n);
        } else {
          // stored B^T: dB^T = dC^T . op(A)
          simd::gemm(true, trans_a, n, k, m, T(1), g, n, av, lda, T(1), gb, k);
        }
      }
    }
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  const std::size_t n = x.shape().back();
  require(b.value().rank() == 1 && b.shape()[0] == n,
          "bias " + shape_string(b.shape()) + " for input " + shape_string(x.shape()));
  const std::size_t rows = x.size() / n;
  Tensor<T> out = x.value();
  T* y = out.raw();
  const T* bv = b.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] += bv[j];
  }
  return make_result<T>("add_bias", std::move(out), {x, b}, [rows, n](Node<T>& self) {
    const T* g = self.grad.data();
    axpy_into(*self.parents[0], g);
    Node<T>& pb = *self.parents[1];
    if (pb.requires_grad) {
      T* gb = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require(w.value().rank() == 2, "linear weight must be rank-2");
  const std::size_t in = w.shape()[0], outw = w.shape()[1];
  require(x.shape().back() == in, "linear input " + shape_string(x.shape()) +
                                      " vs weight " + shape_string(w.shape()));
  require(b.value().rank() == 1 && b.shape()[0] == outw, "linear bias extent");
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outw;
  Tensor<T> out(out_shape);
  T* y = out.raw();
  const T* bv = b.value().raw();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv, bv + outw, y + r * outw);
  simd::gemm(false, false, rows, outw, in, T(1), x.value().raw(), in,
             w.value().raw(), outw, T(1), y, outw);
  return make_result<T>("linear", std::move(out), {x, w, b}, [rows, in, outw](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pw = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    const T* g = self.grad.data();
    if (px.requires_grad) {
      simd::gemm(false, true, rows, in, outw, T(1), g, outw, pw.value.raw(), outw,
                 T(1), px.grad_buffer(), in);
    }
    if (pw.requires_grad) {
      simd::gemm(true, false, in, outw, rows, T(1), px.value.raw(), in, g, outw,
                 T(1), pw.grad_buffer(), outw);
    }
    if (pb.requires_grad) {
      T* gb = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < outw; ++j) gb[j] += g[r * outw + j];
      }
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, T scale) {
  require(q.value().rank() == 3 && q.shape() == k.shape() && q.shape() == v.shape(),
          "attention needs equal [G, N, d] operands, got " + shape_string(q.shape()) + ", " +
              shape_string(k.shape()) + ", " + shape_string(v.shape()));
  const std::size_t G = q.shape()[0], N = q.shape()[1], d = q.shape()[2];
  const std::size_t step = N * d;
  Tensor<T> out(q.shape());
  std::vector<T> p(N * N);
  // p = softmax(scale * q_g k_g^T), row-wise.
  auto probabilities = [N, d, scale](const T* qg, const T* kg, T* pg) {
    simd::gemm(false, true, N, N, d, scale, qg, d, kg, d, T(0), pg, N);
    simd::softmax_rows(pg, pg, N, N);
  };
  for (std::size_t g = 0; g < G; ++g) {
    probabilities(q.value().raw() + g * step, k.value().raw() + g * step, p.data());
    simd::gemm(false, false, N, d, N, T(1), p.data(), N, v.value().raw() + g * step, d, T(0),
               out.raw() + g * step, d);
  }
  return make_result<T>("attention", std::move(out), {q, k, v},
                        [=](Node<T>& self) {
    Node<T>& nq = *self.parents[0];
    Node<T>& nk = *self.parents[1];
    Node<T>& nv = *self.parents[2];
    std::vector<T> pg(N * N), dp(N * N);
    for (std::size_t g = 0; g < G; ++g) {
      const T* qg = nq.value.raw() + g * step;
      const T* kg = nk.value.raw() + g * step;
      const T* vg = nv.value.raw() + g * step;
      const T* dout = self.grad.data() + g * step;
      probabilities(qg, kg, pg.data());
      if (nv.requires_grad) {
        simd::gemm(true, false, N, d, N, T(1), pg.data(), N, dout, d, T(1),
                   nv.grad_buffer() + g * step, d);
      }
      if (!nq.requires_grad && !nk.requires_grad) continue;
      // dp = dout v^T, then the softmax Jacobian in place: ds = p * (dp - <dp, p>).
      simd::gemm(false, true, N, N, d, T(1), dout, d, vg, d, T(0), dp.data(), N);
      for (std::size_t i = 0; i < N; ++i) {
        T* dr = dp.data() + i * N;
        const T* pr = pg.data() + i * N;
        T dot = 0;
        for (std::size_t j = 0; j < N; ++j) dot += dr[j] * pr[j];
        for (std::size_t j = 0; j < N; ++j) dr[j] = pr[j] * (dr[j] - dot);
      }
      if (nq.requires_grad) {
        simd::gemm(false, false, N, d, N, scale, dp.data(), N, kg, d, T(1),
                   nq.grad_buffer() + g * step, d);
      }
      if (nk.requires_grad) {
        simd::gemm(true, false, N, d, N, scale, dp.data(), N, qg, d, T(1),
                   nk.grad_buffer() + g * step, d);
      }
    }
  });
}

template <typename T>
Var<T> softmax(const Var<T>& logits, std::size_t axis) {
  require(axis < logits.value().rank(), "softmax: axis out of range");
  const AxisSplit s = split_at(logits.shape(), axis);
  Tensor<T> out(logits.shape());
  const T* x = logits.value().raw();
  T* y = out.raw();
  if (s.inner == 1) {
    simd::softmax_rows(x, y, s.outer, s.extent);
  } else {
    for (std::size_t p = 0; p < s.outer; ++p) {
      for (std::size_t q = 0; q < s.inner; ++q) {
        const std::size_t base = p * s.extent * s.inner + q;
        T mx = x[base];
        for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, x[base + e * s.inner]);
        T total = 0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const T v = std::exp(x[base + e * s.inner] - mx);
          y[base + e * s.inner] = v;
          total += v;
        }
        for (std::size_t e = 0; e < s.extent; ++e) y[base + e * s.inner] /= total;
      }
    }
  }
  return make_result<T>("softmax", std::move(out), {logits}, [s](Node<T>& self) {
    T* gx = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    const T* y = self.value.raw();
    if (s.inner == 1) {
      for (std::size_t p = 0; p < s.outer; ++p) {
        const T* gr = g + p * s.extent;
        const T* yr = y + p * s.extent;
        T* gxr = gx + p * s.extent;
        T dot = 0;
        for (std::size_t e = 0; e < s.extent; ++e) dot += gr[e] * yr[e];
        for (std::size_t e = 0; e < s.extent; ++e) gxr[e] += yr[e] * (gr[e] - dot);
      }
      return;
    }
    for (std::size_t p = 0; p < s.outer; ++p) {
      for (std::size_t q = 0; q < s.inner; ++q) {
        const std::size_t base = p * s.extent * s.inner + q;
        T dot = 0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = base + e * s.inner;
          dot += g[i] * y[i];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = base + e * s.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& logits) {
  const std::size_t n = logits.shape().back();
  const std::size_t rows = logits.size() / n;
  Tensor<T> out(logits.shape());
  const T* x = logits.value().raw();
  T* y = out.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * n;
    const T mx = *std::max_element(xr, xr + n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(xr[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xr[j] - lse;
  }
  return make_result<T>("log_softmax", std::move(out), {logits}, [rows, n](Node<T>& self) {
    T* gx = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    const T* y = self.value.raw();
    for (std::size_t r = 0; r < rows; ++r) {
      T gsum = 0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gsum;
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const std::size_t n = x.shape().back();
  require(n > 0, "layer_norm: empty normalization axis");
  require(gamma.value().rank() == 1 && gamma.shape()[0] == n &&
              beta.value().rank() == 1 && beta.shape()[0] == n,
          "layer_norm: gamma/beta must match the normalized extent");
  const std::size_t rows = x.size() / n;
  struct Saved {
    std::vector<T> xhat;
    std::vector<T> rstd;
  };
  auto saved = std::make_shared<Saved>();
  saved->xhat.resize(x.size());
  saved->rstd.resize(rows);
  Tensor<T> out(x.shape());
  const T* xv = x.value().raw();
  const T* gv = gamma.value().raw();
  const T* bv = beta.value().raw();
  T* y = out.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(n);
    const T rstd = T(1) / std::sqrt(var + eps);
    saved->rstd[r] = rstd;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (xr[j] - mu) * rstd;
      saved->xhat[r * n + j] = h;
      y[r * n + j] = gv[j] * h + bv[j];
    }
  }
  return make_result<T>("layer_norm", std::move(out), {x, gamma, beta},
                        [rows, n, saved](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pg = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    const T* g = self.grad.data();
    const T* gv = pg.value.raw();
    const T* xhat = saved->xhat.data();
    if (pg.requires_grad) {
      T* gg = pg.grad_buffer();
      for (std::size_t i = 0; i < rows * n; ++i) gg[i % n] += g[i] * xhat[i];
    }
    if (pb.requires_grad) {
      T* gb = pb.grad_buffer();
      for (std::size_t i = 0; i < rows * n; ++i) gb[i % n] += g[i];
    }
    if (px.requires_grad) {
      T* gx = px.grad_buffer();
      const T inv_n = T(1) / static_cast<T>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        T m1 = 0, m2 = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const T gh = g[r * n + j] * gv[j];
          m1 += gh;
          m2 += gh * xhat[r * n + j];
        }
        m1 *= inv_n;
        m2 *= inv_n;
        const T rstd = saved->rstd[r];
        for (std::size_t j = 0; j < n; ++j) {
          const T gh = g[r * n + j] * gv[j];
          gx[r * n + j] += rstd * (gh - m1 - xhat[r * n + j] * m2);
        }
      }
    }
  });
}

template <typename T>
Var<T> l2_normalize(const Var<T>& x, T eps) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  auto norms = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(x.shape());
  const T* xv = x.value().raw();
  T* y = out.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[r * n + j] * xv[r * n + j];
    const T norm = std::max(std::sqrt(ss), eps);
    (*norms)[r] = norm;
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xv[r * n + j] / norm;
  }
  return make_result<T>("l2_normalize", std::move(out), {x}, [rows, n, eps, norms](Node<T>& self) {
    T* gx = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    const T* y = self.value.raw();
    for (std::size_t r = 0; r < rows; ++r) {
      const T norm = (*norms)[r];
      if (norm <= eps) {
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += g[r * n + j] / eps;
        continue;
      }
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) / norm;
      }
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw, stride, pad;
  std::size_t out_h, out_w;
  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T(0)
                          : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = dx + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel,
              const OptVar<T>& bias, std::size_t stride,
              std::size_t padding) {
  require(input.value().rank() == 4, "conv2d input must be NCHW");
  require(kernel.value().rank() == 4, "conv2d kernel must be OIHW");
  require(stride > 0, "conv2d stride must be positive");
  ConvGeometry g{};
  g.batch = input.shape()[0];
  g.channels = input.shape()[1];
  g.height = input.shape()[2];
  g.width = input.shape()[3];
  g.out_channels = kernel.shape()[0];
  g.kh = kernel.shape()[2];
  g.kw = kernel.shape()[3];
  g.stride = stride;
  g.pad = padding;
  require(kernel.shape()[1] == g.channels,
          "conv2d channels: input " + shape_string(input.shape()) + " kernel " +
              shape_string(kernel.shape()));
  if (g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw) {
    throw ShapeMismatch("conv2d kernel larger than padded input");
  }
  if (bias) {
    require(bias->value().rank() == 1 && bias->shape()[0] == g.out_channels,
            "conv2d bias extent");
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  std::vector<T> col(g.col_rows() * g.col_cols());
  const std::size_t in_step = g.channels * g.height * g.width;
  const std::size_t out_step = g.out_channels * g.col_cols();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, input.value().raw() + b * in_step, col.data());
    T* y = out.raw() + b * out_step;
    if (bias) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        std::fill(y + o * g.col_cols(), y + (o + 1) * g.col_cols(), bias->value()[o]);
      }
    }
    simd::gemm(false, false, g.out_channels, g.col_cols(), g.col_rows(), T(1),
               kernel.value().raw(), g.col_rows(), col.data(), g.col_cols(),
               bias ? T(1) : T(0), y, g.col_cols());
  }
  std::vector<Var<T>> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return make_result<T>("conv2d", std::move(out), std::move(inputs), [g, in_step, out_step](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pk = *self.parents[1];
    Node<T>* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    std::vector<T> col(g.col_rows() * g.col_cols());
    std::vector<T> dcol;
    if (px.requires_grad) dcol.resize(col.size());
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* gy = self.grad.data() + b * out_step;
      if (pk.requires_grad) {
        im2col(g, px.value.raw() + b * in_step, col.data());
        simd::gemm(false, true, g.out_channels, g.col_rows(), g.col_cols(), T(1), gy,
                   g.col_cols(), col.data(), g.col_cols(), T(1), pk.grad_buffer(),
                   g.col_rows());
      }
      if (px.requires_grad) {
        simd::gemm(true, false, g.col_rows(), g.col_cols(), g.out_channels, T(1),
                   pk.value.raw(), g.col_rows(), gy, g.col_cols(), T(0), dcol.data(),
                   g.col_cols());
        col2im(g, dcol.data(), px.grad_buffer() + b * in_step);
      }
      if (pb && pb->requires_grad) {
        T* gb = pb->grad_buffer();
        for (std::size_t o = 0; o < g.out_channels; ++o) {
          const T* row = gy + o * g.col_cols();
          T acc = 0;
          for (std::size_t i = 0; i < g.col_cols(); ++i) acc += row[i];
          gb[o] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> maxpool2d(const Var<T>& input, std::size_t window, std::size_t stride) {
  require(input.value().rank() == 4, "maxpool2d input must be NCHW");
  require(window > 0 && stride > 0, "maxpool2d window/stride must be positive");
  const std::size_t planes = input.shape()[0] * input.shape()[1];
  const std::size_t h = input.shape()[2], w = input.shape()[3];
  if (window > h || window > w) throw ShapeMismatch("maxpool2d window exceeds input");
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor<T> out({input.shape()[0], input.shape()[1], oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const T* x = input.value().raw();
  T* y = out.raw();
  const bool track = input.requires_grad();
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* plane = x + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = (oy * stride) * w + ox * stride;
        T best_v = plane[best];
        bool tie = false;
        for (std::size_t dy = 0; dy < window; ++dy) {
          const std::size_t row = (oy * stride + dy) * w + ox * stride;
          for (std::size_t dx = 0; dx < window; ++dx) {
            const T v = plane[row + dx];
            if (v > best_v) {
              best_v = v;
              best = row + dx;
              tie = false;
            } else if (v == best_v && row + dx != best) {
              tie = true;
            }
          }
        }
        y[o] = best_v;
        (*argmax)[o] = static_cast<std::uint32_t>(p * h * w + best);
        if (track && tie) ++t_kinks;
      }
    }
  }
  return make_result<T>("maxpool2d", std::move(out), {input}, [argmax](Node<T>& self) {
    T* gx = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

template <typename T>
Var<T> replace_rows(const Var<T>& x, const std::vector<std::uint8_t>& mask,
                    const Var<T>& token) {
  require(x.value().rank() == 3, "replace_rows input must be [B, N, d]");
  const std::size_t rows = x.shape()[0] * x.shape()[1], d = x.shape()[2];
  require(mask.size() == rows, "replace_rows mask length");
  require(token.size() == d, "replace_rows token width");
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r]) std::copy(token.value().raw(), token.value().raw() + d, out.raw() + r * d);
  }
  return make_result<T>("replace_rows", std::move(out), {x, token}, [mask, rows, d](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pt = *self.parents[1];
    const T* g = self.grad.data();
    T* gx = px.requires_grad ? px.grad_buffer() : nullptr;
    T* gt = pt.requires_grad ? pt.grad_buffer() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = mask[r] ? gt : (gx ? gx + r * d : nullptr);
      if (!dst) continue;
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[r * d + j];
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index) {
  require(x.value().rank() == 2, "gather_rows input must be rank-2");
  require(!index.empty(), "gather_rows needs at least one index");
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  Tensor<T> out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw ShapeMismatch("gather_rows index out of range");
    std::copy(x.value().raw() + index[i] * d, x.value().raw() + (index[i] + 1) * d,
              out.raw() + i * d);
  }
  return make_result<T>("gather_rows", std::move(out), {x}, [index, d](Node<T>& self) {
    T* gx = self.parents[0]->grad_buffer();
    const T* g = self.grad.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) gx[index[i] * d + j] += g[i * d + j];
    }
  });
}

#define PQC_INSTANTIATE_OPS(T)                                                        \
  template Var<T> elementwise<T>(ElementwiseOp, const Var<T>&,                        \
                                 const OptVar<T>&, T);                    \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> relu<T>(const Var<T>&);                                             \
  template Var<T> exp<T>(const Var<T>&);                                              \
  template Var<T> log<T>(const Var<T>&);                                              \
  template Var<T> scale<T>(const Var<T>&, T);                                         \
  template Var<T> sum<T>(const Var<T>&);                                              \
  template Var<T> mean<T>(const Var<T>&);                                             \
  template Var<T> mean_axis<T>(const Var<T>&, std::size_t);                           \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                   \
  template Var<T> permute<T>(const Var<T>&, const std::vector<std::size_t>&);         \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                 \
  template Var<T> slice<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);     \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> batched_matmul<T>(const Var<T>&, const Var<T>&, bool, bool);        \
  template Var<T> add_bias<T>(const Var<T>&, const Var<T>&);                          \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> attention<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);       \
  template Var<T> softmax<T>(const Var<T>&, std::size_t);                             \
  template Var<T> log_softmax<T>(const Var<T>&);                                      \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);      \
  template Var<T> l2_normalize<T>(const Var<T>&, T);                                  \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&,                             \
                            const OptVar<T>&, std::size_t, std::size_t);  \
  template Var<T> maxpool2d<T>(const Var<T>&, std::size_t, std::size_t);              \
  template Var<T> replace_rows<T>(const Var<T>&, const std::vector<std::uint8_t>&,    \
                                  const Var<T>&);                                     \
  template Var<T> gather_rows<T>(const Var<T>&, const std::vector<std::size_t>&);

PQC_INSTANTIATE_OPS(float)
PQC_INSTANTIATE_OPS(double)

#undef PQC_INSTANTIATE_OPS

}  // namespace pqc
