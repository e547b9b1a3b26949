#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rvos/tensor.hpp"

namespace rvos {

namespace detail {

// out[m,n] += a[m,k] * b[k,n]
inline void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

// out[m,n] += a[m,k] * b[n,k]^T
inline void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k,n] += a[m,k]^T * b[m,n]
inline void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    const double* brow = b + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a[r * k + i];
      double* orow = out + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Element-wise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (auto* gb = detail::grad_of(b)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
  }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (auto* gb = detail::grad_of(b)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  }, "sub");
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<double>& g) {
    const auto av = a.data(), bv = b.data();
    if (auto* ga = detail::grad_of(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (auto* gb = detail::grad_of(b)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  }, "mul");
}

inline Tensor scale(const Tensor& a, double s) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return detail::make_result(a.shape(), std::move(out), {a}, [a, s](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
  }, "scale");
}

inline Tensor relu(const Tensor& a) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return detail::make_result(a.shape(), std::move(out), {a}, [a](const std::vector<double>& g) {
    const auto av = a.data();
    if (auto* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) if (av[i] > 0.0) (*ga)[i] += g[i];
  }, "relu");
}

inline Tensor sigmoid(const Tensor& a) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid_scalar(av[i]);
  return detail::make_result(a.shape(), out, {a}, [a, out](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * out[i] * (1.0 - out[i]);
  }, "sigmoid");
}

inline Tensor softplus(const Tensor& a) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::softplus_scalar(av[i]);
  return detail::make_result(a.shape(), std::move(out), {a}, [a](const std::vector<double>& g) {
    const auto av = a.data();
    if (auto* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * detail::sigmoid_scalar(av[i]);
  }, "softplus");
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return detail::make_result({}, {acc}, {a}, [a](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) for (double& v : *ga) v += g[0];
  }, "sum_all");
}

inline Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

/// Mean over the leading axis: [N, ...] -> [...].
inline Tensor mean_rows(const Tensor& a) {
  if (a.rank() < 1 || a.dim(0) == 0) throw ShapeError("mean_rows: empty leading axis");
  const std::size_t rows = a.dim(0), cols = a.numel() / rows;
  const auto av = a.data();
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += av[r * cols + c];
  const double inv = 1.0 / static_cast<double>(rows);
  for (double& v : out) v *= inv;
  Shape shape(a.shape().begin() + 1, a.shape().end());
  return detail::make_result(shape, std::move(out), {a}, [a, rows, cols, inv](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*ga)[r * cols + c] += g[c] * inv;
  }, "mean_rows");
}

/// Mean over trailing axes: [C, ...] -> [C].
inline Tensor mean_per_channel(const Tensor& a) {
  const std::size_t channels = a.dim(0), plane = a.numel() / channels;
  const auto av = a.data();
  std::vector<double> out(channels, 0.0);
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += av[c * plane + i];
    out[c] = acc * inv;
  }
  return detail::make_result({channels}, std::move(out), {a}, [a, channels, plane, inv](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a))
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) (*ga)[c * plane + i] += g[c] * inv;
  }, "mean_per_channel");
}

/// Element-wise sum of equally shaped tensors. Each element is accumulated in ascending
/// value order, so the result does not depend on the order of `terms`.
inline Tensor sum_stack(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ShapeError("sum_stack: no terms");
  for (const auto& t : terms) detail::require_same_shape(terms.front(), t, "sum_stack");
  const std::size_t n = terms.front().numel();
  std::vector<double> out(n);
  std::vector<double> column(terms.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < terms.size(); ++t) column[t] = terms[t][i];
    std::sort(column.begin(), column.end());
    double acc = column[0];
    for (std::size_t t = 1; t < column.size(); ++t) acc += column[t];
    out[i] = acc;
  }
  return detail::make_result(terms.front().shape(), std::move(out), terms, [terms](const std::vector<double>& g) {
    for (const auto& t : terms)
      if (auto* gt = detail::grad_of(t)) for (std::size_t i = 0; i < g.size(); ++i) (*gt)[i] += g[i];
  }, "sum_stack");
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result(std::move(shape), std::move(out), {a}, [a](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  }, "reshape");
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return detail::make_result({n, m}, std::move(out), {a}, [a, m, n](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
  }, "transpose");
}

/// Concatenation along the leading axis.
inline Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  Shape tail(parts.front().shape().begin() + 1, parts.front().shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() != tail.size() + 1 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat0: trailing shape mismatch " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return detail::make_result(std::move(shape), std::move(out), parts, [parts](const std::vector<double>& g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (auto* gp = detail::grad_of(p))
        for (std::size_t i = 0; i < p.numel(); ++i) (*gp)[i] += g[offset + i];
      offset += p.numel();
    }
  }, "concat0");
}

/// Rows [begin, end) along the leading axis.
inline Tensor slice0(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin > end || end > a.dim(0)) {
    throw ShapeError("slice0: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     shape_str(a.shape()));
  }
  const std::size_t row = a.numel() / a.dim(0);
  std::vector<double> out(a.data().begin() + begin * row, a.data().begin() + end * row);
  Shape shape = a.shape();
  shape[0] = end - begin;
  return detail::make_result(std::move(shape), std::move(out), {a}, [a, begin, row](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[begin * row + i] += g[i];
  }, "slice0");
}

/// Drops the leading axis by picking one index.
inline Tensor select0(const Tensor& a, std::size_t index) {
  Shape tail(a.shape().begin() + 1, a.shape().end());
  return reshape(slice0(a, index, index + 1), std::move(tail));
}

/// Stacks equally shaped tensors along a new leading axis.
inline Tensor stack0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack0: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    detail::require_same_shape(parts.front(), p, "stack0");
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat0(lifted);
}

/// Rows of table[V,C] picked by index: [n, C].
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices) {
  detail::require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  std::vector<double> out(indices.size() * cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(table.data().begin() + indices[i] * cols, cols, out.begin() + i * cols);
  }
  return detail::make_result({indices.size(), cols}, std::move(out), {table}, [table, indices, cols](const std::vector<double>& g) {
    if (auto* gt = detail::grad_of(table))
      for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) (*gt)[indices[i] * cols + c] += g[i * cols + c];
  }, "gather_rows");
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) detail::gemm_nt(g.data(), b.data().data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(b)) detail::gemm_tn(a.data().data(), g.data(), gb->data(), m, k, n);
  }, "matmul");
}

/// a[m,k] * b[n,k]^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) detail::gemm_nn(g.data(), b.data().data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(b)) detail::gemm_tn(g.data(), a.data().data(), gb->data(), m, n, k);
  }, "matmul_nt");
}

/// x[N,C] + bias[C] on every row.
inline Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  detail::require_rank(x, 2, "add_row_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.numel() != cols) throw ShapeError("add_row_bias: bias width " + std::to_string(bias.numel()) +
                                             " vs " + std::to_string(cols));
  const auto xv = x.data(), bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  return detail::make_result(x.shape(), std::move(out), {x, bias}, [x, bias, rows, cols](const std::vector<double>& g) {
    if (auto* gx = detail::grad_of(x)) for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (auto* gb = detail::grad_of(bias))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += g[r * cols + c];
  }, "add_row_bias");
}

/// x[N,in] * weight[out,in]^T + bias[out]
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row_bias(matmul_nt(x, weight), bias);
}

inline Tensor linear(const Tensor& x, const Tensor& weight) { return matmul_nt(x, weight); }

/// Point-wise convolution of x[Cin,H,W] with weight[Cout,Cin] and bias[Cout].
/// Each output pixel accumulates input channels in ascending order, then adds the bias.
inline Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank(x, 3, "conv1x1");
  detail::require_rank(weight, 2, "conv1x1");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = weight.dim(0);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv1x1: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias.numel() != cout) throw ShapeError("conv1x1: bias length " + std::to_string(bias.numel()));
  const std::size_t plane = h * w;
  std::vector<double> out(cout * plane, 0.0);
  detail::gemm_nn(weight.data().data(), x.data().data(), out.data(), cout, cin, plane);
  const auto bv = bias.data();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t p = 0; p < plane; ++p) out[o * plane + p] += bv[o];
  return detail::make_result({cout, h, w}, std::move(out), {x, weight, bias},
                             [x, weight, bias, cin, cout, plane](const std::vector<double>& g) {
    if (auto* gx = detail::grad_of(x)) detail::gemm_tn(weight.data().data(), g.data(), gx->data(), cout, cin, plane);
    if (auto* gw = detail::grad_of(weight)) detail::gemm_nt(g.data(), x.data().data(), gw->data(), cout, plane, cin);
    if (auto* gb = detail::grad_of(bias))
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t p = 0; p < plane; ++p) (*gb)[o] += g[o * plane + p];
  }, "conv1x1");
}

/// Row-wise softmax of a[m,n].
inline Tensor softmax_rows(const Tensor& a) {
  detail::require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = av.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return detail::make_result({m, n}, out, {a}, [a, out, m, n](const std::vector<double>& g) {
    if (auto* ga = detail::grad_of(a)) {
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * out[i * n + j];
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += out[i * n + j] * (g[i * n + j] - dot);
      }
    }
  }, "softmax_rows");
}

// ---------------------------------------------------------------------------
// Spatial maps [C,H,W]

/// Multiplies every channel of x[C,H,W] by the plane g[H,W].
inline Tensor mul_plane(const Tensor& x, const Tensor& plane) {
  detail::require_rank(x, 3, "mul_plane");
  detail::require_rank(plane, 2, "mul_plane");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (plane.dim(0) != x.dim(1) || plane.dim(1) != x.dim(2)) {
    throw ShapeError("mul_plane: plane " + shape_str(plane.shape()) + " vs map " + shape_str(x.shape()));
  }
  const auto xv = x.data(), pv = plane.data();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] * pv[i];
  return detail::make_result(x.shape(), std::move(out), {x, plane}, [x, plane, c, hw](const std::vector<double>& g) {
    const auto xv = x.data(), pv = plane.data();
    if (auto* gx = detail::grad_of(x))
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) (*gx)[ch * hw + i] += g[ch * hw + i] * pv[i];
    if (auto* gp = detail::grad_of(plane))
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) (*gp)[i] += g[ch * hw + i] * xv[ch * hw + i];
  }, "mul_plane");
}

/// [C,H,W] -> [HW,C] token matrix.
inline Tensor tokens_from_map(const Tensor& x) {
  detail::require_rank(x, 3, "tokens_from_map");
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

/// [HW,C] token matrix -> [C,H,W].
inline Tensor map_from_tokens(const Tensor& tokens, std::size_t h, std::size_t w) {
  detail::require_rank(tokens, 2, "map_from_tokens");
  if (tokens.dim(0) != h * w) throw ShapeError("map_from_tokens: token count does not match grid");
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

/// Rearranges k x k pixel blocks into channels: [C,H,W] -> [C*k*k, H/k, W/k].
/// Channel c*k*k + dy*k + dx of token (y,x) holds pixel (y*k+dy, x*k+dx).
inline Tensor space_to_depth(const Tensor& x, std::size_t k) {
  detail::require_rank(x, 3, "space_to_depth");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k == 0 || h % k || w % k) throw ShapeError("space_to_depth: " + shape_str(x.shape()) + " not divisible by " +
                                                 std::to_string(k));
  const std::size_t oh = h / k, ow = w / k, oc = c * k * k;
  std::vector<std::size_t> index(x.numel());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const std::size_t o = ((ch * k * k + dy * k + dx) * oh + y) * ow + xx;
            index[o] = (ch * h + y * k + dy) * w + xx * k + dx;
          }
  const auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[index[i]];
  return detail::make_result({oc, oh, ow}, std::move(out), {x}, [x, index](const std::vector<double>& g) {
    if (auto* gx = detail::grad_of(x)) for (std::size_t i = 0; i < g.size(); ++i) (*gx)[index[i]] += g[i];
  }, "space_to_depth");
}

/// Inverse of space_to_depth: [C*k*k, H, W] -> [C, H*k, W*k].
inline Tensor depth_to_space(const Tensor& x, std::size_t k) {
  detail::require_rank(x, 3, "depth_to_space");
  const std::size_t ic = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k == 0 || ic % (k * k)) throw ShapeError("depth_to_space: channel count not divisible by k^2");
  const std::size_t c = ic / (k * k), oh = h * k, ow = w * k;
  std::vector<std::size_t> index(x.numel());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const std::size_t src = ((ch * k * k + dy * k + dx) * h + y) * w + xx;
            index[(ch * oh + y * k + dy) * ow + xx * k + dx] = src;
          }
  const auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[index[i]];
  return detail::make_result({c, oh, ow}, std::move(out), {x}, [x, index](const std::vector<double>& g) {
    if (auto* gx = detail::grad_of(x)) for (std::size_t i = 0; i < g.size(); ++i) (*gx)[index[i]] += g[i];
  }, "depth_to_space");
}

namespace detail {

// Source taps of a x2 align-corners-false resize along one axis.
struct ResizeTap {
  std::size_t i0, i1;
  double t;  // weight of i1
};

inline std::vector<ResizeTap> resize_taps(std::size_t n) {
  std::vector<ResizeTap> taps(2 * n);
  for (std::size_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear x2 upsampling with half-pixel centers (align_corners = false).
/// Interpolates as a + t*(b - a) so constant planes stay bit-exact.
inline Tensor resize_bilinear(const Tensor& x, std::size_t factor = 2) {
  detail::require_rank(x, 3, "resize_bilinear");
  if (factor != 2) throw ShapeError("resize_bilinear: only factor 2 is supported");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), oh = 2 * h, ow = 2 * w;
  if (h == 0 || w == 0) throw ShapeError("resize_bilinear: empty plane");
  const auto ty = detail::resize_taps(h), tx = detail::resize_taps(w);
  const auto xv = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = xv.data() + ch * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto& vy = ty[oy];
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto& vx = tx[ox];
        const double a = plane[vy.i0 * w + vx.i0], b = plane[vy.i0 * w + vx.i1];
        const double cc = plane[vy.i1 * w + vx.i0], d = plane[vy.i1 * w + vx.i1];
        const double top = a + vx.t * (b - a);
        const double bottom = cc + vx.t * (d - cc);
        out[(ch * oh + oy) * ow + ox] = top + vy.t * (bottom - top);
      }
    }
  }
  return detail::make_result({c, oh, ow}, std::move(out), {x}, [x, c, h, w, oh, ow, ty, tx](const std::vector<double>& g) {
    auto* gx = detail::grad_of(x);
    if (!gx) return;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* plane = gx->data() + ch * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const auto& vy = ty[oy];
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const auto& vx = tx[ox];
          const double go = g[(ch * oh + oy) * ow + ox];
          plane[vy.i0 * w + vx.i0] += go * (1.0 - vy.t) * (1.0 - vx.t);
          plane[vy.i0 * w + vx.i1] += go * (1.0 - vy.t) * vx.t;
          plane[vy.i1 * w + vx.i0] += go * vy.t * (1.0 - vx.t);
          plane[vy.i1 * w + vx.i1] += go * vy.t * vx.t;
        }
      }
    }
  }, "resize_bilinear");
}

/// 2x2 average pooling with stride 2.
inline Tensor avg_pool2(const Tensor& x) {
  detail::require_rank(x, 3, "avg_pool2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: odd spatial size " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  const auto xv = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* p = xv.data() + (ch * h + 2 * y) * w + 2 * xx;
        out[(ch * oh + y) * ow + xx] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  return detail::make_result({c, oh, ow}, std::move(out), {x}, [x, c, h, w, oh, ow](const std::vector<double>& g) {
    auto* gx = detail::grad_of(x);
    if (!gx) return;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double v = 0.25 * g[(ch * oh + y) * ow + xx];
          double* p = gx->data() + (ch * h + 2 * y) * w + 2 * xx;
          p[0] += v;
          p[1] += v;
          p[w] += v;
          p[w + 1] += v;
        }
  }, "avg_pool2");
}

}  // namespace rvos
