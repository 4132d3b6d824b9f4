#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tet/tape.hpp"

// Differentiable primitives over rank-2 tensors. Every op computes its output
// eagerly and records a closure that pushes the output gradient back to the
// inputs that need it.
namespace tet::ops {

/// While set, piecewise ops fold every branch they take into this hash, so
/// two evaluations with equal traces lie on the same smooth piece.
inline thread_local std::uint64_t* branch_trace = nullptr;

inline void trace_branch(std::uint64_t branch) {
  if (branch_trace) *branch_trace = (*branch_trace ^ branch) * 1099511628211ull;
}

namespace detail {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), [&] {
    return std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape());
  });
}

template <typename T>
Tensor<T> like(const Var<T>& a) {
  return Tensor<T>::matrix(a.rows(), a.cols());
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto& d = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& d = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

/// Elementwise (Hadamard) product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    const auto& y = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& d = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * x[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s;
  });
}

/// Adds a 1×c row to every row of an r×c matrix (bias broadcast).
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  require(row.rows() == 1 && row.cols() == a.cols(), [&] {
    return "add_row: row shape " + shape_string(row.shape()) + " incompatible with " +
           shape_string(a.shape());
  });
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  const auto& b = row.value();
  const std::size_t r = a.rows(), c = a.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = x(i, j) + b[j];
  const auto ia = a.id(), ib = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ib, r, c](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& d = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j);
    }
  });
}

namespace detail {

// Row-major kernels; each accumulates into c.

/// c(m×n) += a(m×k)·b(k×n)
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

/// c(m×n) += a(m×k)·b(n×k)ᵀ
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

/// c(k×n) += a(m×k)ᵀ·b(m×n)
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace detail

/// (m×k)·(k×n).
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, [&] {
    return "matmul: inner dimensions differ " + shape_string(a.shape()) + " · " + shape_string(b.shape());
  });
  Tensor<T> out = Tensor<T>::matrix(m, n);
  detail::gemm_nn(m, k, n, a.value().data().data(), b.value().data().data(), out.data().data());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, std::uint32_t self) {
    const T* g = t.grad(self).data().data();
    if (t.requires_grad(ia))  // g · yᵀ
      detail::gemm_nt(m, n, k, g, t.value(ib).data().data(), t.grad(ia).data().data());
    if (t.requires_grad(ib))  // xᵀ · g
      detail::gemm_tn(m, k, n, t.value(ia).data().data(), g, t.grad(ib).data().data());
  });
}

/// (m×k)·(n×k)ᵀ, used for attention logits and the type-scoring head.
template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, [&] {
    return "matmul_bt: inner dimensions differ " + shape_string(a.shape()) + " · " + shape_string(b.shape()) +
           "ᵀ";
  });
  Tensor<T> out = Tensor<T>::matrix(m, n);
  detail::gemm_nt(m, k, n, a.value().data().data(), b.value().data().data(), out.data().data());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, std::uint32_t self) {
    const T* g = t.grad(self).data().data();
    if (t.requires_grad(ia))  // g · y
      detail::gemm_nn(m, n, k, g, t.value(ib).data().data(), t.grad(ia).data().data());
    if (t.requires_grad(ib))  // gᵀ · x
      detail::gemm_tn(m, n, k, g, t.value(ia).data().data(), t.grad(ib).data().data());
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor<T> out = Tensor<T>::matrix(c, r);
  const auto& x = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = x(i, j);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d(i, j) += g(j, i);
  });
}

/// Stacks matrices with equal column counts vertically.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    require(p.cols() == c, [&] { return "concat_rows: column mismatch " + shape_string(p.shape()); });
    r += p.rows();
  }
  Tensor<T> out = Tensor<T>::matrix(r, c);
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + off);
    off += v.size();
    ids.push_back(p.id());
  }
  return parts.front().tape().record(std::move(out), parts, [ids](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        auto& d = t.grad(id);
        for (std::size_t i = 0; i < n; ++i) d[i] += g[off + i];
      }
      off += n;
    }
  });
}

/// Joins matrices with equal row counts side by side.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    require(p.rows() == r, [&] { return "concat_cols: row mismatch " + shape_string(p.shape()); });
    c += p.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(r, c);
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    off += v.cols();
    ids.push_back(p.id());
  }
  return parts.front().tape().record(std::move(out), parts, [ids, r](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.requires_grad(id)) {
        auto& d = t.grad(id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) d(i, j) += g(i, off + j);
      }
      off += w;
    }
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.rows() && count > 0, "slice_rows: range out of bounds");
  const std::size_t c = a.cols();
  const auto& x = a.value();
  Tensor<T> out(Shape{count, c},
                std::vector<T>(x.data().begin() + begin * c, x.data().begin() + (begin + count) * c));
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin, c](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[begin * c + i] += g[i];
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.cols() && count > 0, "slice_cols: range out of bounds");
  const std::size_t r = a.rows();
  const auto& x = a.value();
  Tensor<T> out = Tensor<T>::matrix(r, count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin, count, r](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) d(i, begin + j) += g(i, j);
  });
}

/// Gathers rows of `table` by index; the backward pass scatter-adds.
template <typename T>
Var<T> embedding(Var<T> table, std::vector<std::size_t> ids) {
  const std::size_t c = table.cols();
  const auto& w = table.value();
  Tensor<T> out = Tensor<T>::matrix(ids.size(), c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < table.rows(), [&] {
      return "embedding: index " + std::to_string(ids[i]) + " out of range for table " +
             shape_string(table.shape());
    });
    std::copy(w.row_span(ids[i]).begin(), w.row_span(ids[i]).end(), out.row_span(i).begin());
  }
  const auto it = table.id();
  return table.tape().record(std::move(out), {table},
                             [it, ids = std::move(ids), c](Tape<T>& t, std::uint32_t self) {
                               const auto& g = t.grad(self);
                               auto& d = t.grad(it);
                               for (std::size_t i = 0; i < ids.size(); ++i)
                                 for (std::size_t j = 0; j < c; ++j) d(ids[i], j) += g(i, j);
                             });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] > T{0} ? x[i] : T{0};
    trace_branch(x[i] > T{0});
  }
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > T{0}) d[i] += g[i];
  });
}

/// Tanh approximation of GELU.
template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kC * (v + 0.044715 * v * v * v))));
  }
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double u = kC * (v + 0.044715 * v * v * v);
      const double th = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * 0.044715 * v * v);
      d[i] += g[i] * static_cast<T>(0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = detail::like(a);
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x[i]);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i] * (T{1} - y[i]);
  });
}

/// Softmax along `axis` (0 = down each column, 1 = across each row), with the
/// running maximum subtracted before exponentiation.
template <typename T>
Var<T> softmax(Var<T> a, int axis) {
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t outer = axis == 1 ? r : c;
  const std::size_t inner = axis == 1 ? c : r;
  const std::size_t stride_outer = axis == 1 ? c : 1;
  const std::size_t stride_inner = axis == 1 ? 1 : c;
  const auto& x = a.value();
  Tensor<T> out = detail::like(a);
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * stride_outer;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, x[base + i * stride_inner]);
    T sum{0};
    for (std::size_t i = 0; i < inner; ++i) {
      const T e = std::exp(x[base + i * stride_inner] - mx);
      out[base + i * stride_inner] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < inner; ++i) out[base + i * stride_inner] /= sum;
  }
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia, outer, inner, stride_outer, stride_inner](Tape<T>& t, std::uint32_t self) {
                           const auto& g = t.grad(self);
                           const auto& y = t.value(self);
                           auto& d = t.grad(ia);
                           for (std::size_t o = 0; o < outer; ++o) {
                             const std::size_t base = o * stride_outer;
                             T dot{0};
                             for (std::size_t i = 0; i < inner; ++i) {
                               const std::size_t k = base + i * stride_inner;
                               dot += g[k] * y[k];
                             }
                             for (std::size_t i = 0; i < inner; ++i) {
                               const std::size_t k = base + i * stride_inner;
                               d[k] += y[k] * (g[k] - dot);
                             }
                           }
                         });
}

/// Row-wise normalisation to zero mean and unit (population) variance,
/// followed by the affine map gain ⊙ x̂ + bias. gain and bias are 1×c.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const std::size_t r = x.rows(), c = x.cols();
  require(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
          [&] { return "layer_norm: gain/bias must be 1×" + std::to_string(c); });
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor<T> out = Tensor<T>::matrix(r, c);
  Tensor<T> xhat = Tensor<T>::matrix(r, c);
  std::vector<T> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    T mean{0};
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= T(c);
    T var{0};
    for (std::size_t j = 0; j < c; ++j) {
      const T dv = xv(i, j) - mean;
      var += dv * dv;
    }
    var /= T(c);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (xv(i, j) - mean) * inv_std[i];
      out(i, j) = gv[j] * xhat(i, j) + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, gain, bias},
                         [ix, ig, ib, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                             Tape<T>& t, std::uint32_t self) {
                           const auto& g = t.grad(self);
                           const auto& gv = t.value(ig);
                           if (t.requires_grad(ig)) {
                             auto& d = t.grad(ig);
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j) * xhat(i, j);
                           }
                           if (t.requires_grad(ib)) {
                             auto& d = t.grad(ib);
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j);
                           }
                           if (t.requires_grad(ix)) {
                             auto& d = t.grad(ix);
                             for (std::size_t i = 0; i < r; ++i) {
                               T sum_g{0}, sum_gx{0};
                               for (std::size_t j = 0; j < c; ++j) {
                                 const T gh = g(i, j) * gv[j];
                                 sum_g += gh;
                                 sum_gx += gh * xhat(i, j);
                               }
                               for (std::size_t j = 0; j < c; ++j) {
                                 const T gh = g(i, j) * gv[j];
                                 d(i, j) += inv_std[i] * (gh - sum_g / T(c) - xhat(i, j) * sum_gx / T(c));
                               }
                             }
                           }
                         });
}

/// Inverted dropout: kept units are scaled by 1/(1−p) at train time, so eval
/// mode is the identity.
template <typename T>
Var<T> dropout(Var<T> a, T p, std::mt19937_64* rng, bool training) {
  require(p >= T{0} && p < T{1}, "dropout: probability must lie in [0, 1)");
  if (!training || p == T{0} || rng == nullptr) return a;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  Tensor<T> mask = detail::like(a);
  const T s = T{1} / (T{1} - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(*rng) ? s : T{0};
  return mul(a, a.tape().constant(std::move(mask)));
}

/// Sum of all elements, as a 1×1 tensor.
template <typename T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  const auto ia = a.id();
  return a.tape().record(Tensor<T>::matrix(1, 1, acc), {a}, [ia](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0];
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T{1} / T(a.value().size()));
}

/// Column sums: r×c → 1×c.
template <typename T>
Var<T> sum_rows(Var<T> a) {
  const std::size_t r = a.rows(), c = a.cols();
  const auto& x = a.value();
  Tensor<T> out = Tensor<T>::matrix(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x(i, j);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d(i, j) += g[j];
  });
}

template <typename T>
Var<T> mean_rows(Var<T> a) {
  return scale(sum_rows(a), T{1} / T(a.rows()));
}

namespace detail {

template <typename T, typename Better>
Var<T> select_rows(Var<T> a, Better better) {
  const std::size_t r = a.rows(), c = a.cols();
  require(r > 0, "row reduction over an empty matrix");
  const auto& x = a.value();
  Tensor<T> out = Tensor<T>::matrix(1, c);
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    out[j] = x(0, j);
    for (std::size_t i = 1; i < r; ++i)
      if (better(x(i, j), out[j])) {
        out[j] = x(i, j);
        arg[j] = i;
      }
    trace_branch(arg[j]);
  }
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, c, arg = std::move(arg)](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(ia);
    for (std::size_t j = 0; j < c; ++j) d(arg[j], j) += g[j];
  });
}

}  // namespace detail

/// Column maxima: r×c → 1×c. The gradient goes to the first maximising row.
template <typename T>
Var<T> max_rows(Var<T> a) {
  return detail::select_rows(a, [](T x, T best) { return x > best; });
}

template <typename T>
Var<T> min_rows(Var<T> a) {
  return detail::select_rows(a, [](T x, T best) { return x < best; });
}

}  // namespace tet::ops
