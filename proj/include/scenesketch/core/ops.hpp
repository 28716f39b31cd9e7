#pragma once

// Differentiable primitives over Graph variables.
//
// Shapes are rank 2. Binary elementwise ops accept equal shapes, or a 1xn
// right operand broadcast over the rows of the left operand (the leading
// batch dimension). Nothing else broadcasts.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenesketch/core/graph.hpp"

namespace scenesketch {

namespace detail {

inline Graph& graph_of(Var a, const char* op) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": empty operand");
  return *a.graph();
}

inline Graph& graph_of(Var a, Var b, const char* op) {
  Graph& g = graph_of(a, op);
  g.check_owned(b, op);
  return g;
}

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.shape_string() << " and " << b.shape_string();
  throw std::invalid_argument(os.str());
}

enum class Bcast { kSame, kRow };

inline Bcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  shape_error(op, a, b);
}

inline bool any_grad(Graph& g, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (g.requires_grad(v)) return true;
  return false;
}

// Adds sign*src into gb, reducing over rows when b was row-broadcast.
inline void accumulate_broadcast(Tensor& gb, const Tensor& src, Bcast kind, double sign = 1.0) {
  if (kind == Bcast::kSame) {
    for (std::size_t i = 0; i < src.size(); ++i) gb[i] += sign * src[i];
    return;
  }
  const std::size_t n = src.cols();
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) gb[c] += sign * src(r, c);
}

// Elementwise map whose derivative is expressed from (x, y).
template <class F, class D>
Var map_unary(Var a, const char* op, F f, D dydx) {
  Graph& g = graph_of(a, op);
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto out_id = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(y), g.requires_grad(a), [a, out_id, dydx](Graph& gr, const Tensor& go) {
    const Tensor& xv = gr.value(a);
    const Tensor& yv = gr.value_by_id(out_id);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * dydx(xv[i], yv[i]);
  });
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b, "matmul");
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (x.cols() != w.rows()) detail::shape_error("matmul", x, w);
  Tensor y(x.rows(), w.cols());
  kernels::gemm_nn_acc(x.storage().data(), w.storage().data(), y.storage().data(), x.rows(),
                       x.cols(), w.cols());
  const bool rg = detail::any_grad(g, {a, b});
  return g.push(std::move(y), rg, [a, b](Graph& gr, const Tensor& go) {
    const Tensor& xv = gr.value(a);
    const Tensor& wv = gr.value(b);
    if (gr.requires_grad(a)) {
      kernels::gemm_nt_acc(go.storage().data(), wv.storage().data(),
                           gr.grad_ref(a).storage().data(), go.rows(), xv.cols(), go.cols());
    }
    if (gr.requires_grad(b)) {
      kernels::gemm_tn_acc(xv.storage().data(), go.storage().data(),
                           gr.grad_ref(b).storage().data(), xv.rows(), xv.cols(), go.cols());
    }
  });
}

inline Var transpose(Var a) {
  Graph& g = detail::graph_of(a, "transpose");
  const Tensor& x = a.value();
  Tensor y(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y(c, r) = x(r, c);
  return g.push(std::move(y), g.requires_grad(a), [a](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += go(c, r);
  });
}

// ----------------------------------------------------------------------------
// Elementwise binary

inline Var add(Var a, Var b) {
  Graph& g = detail::graph_of(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const auto kind = detail::broadcast_kind("add", x, z);
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += kind == detail::Bcast::kSame ? z[i] : z[i % n];
  return g.push(std::move(y), detail::any_grad(g, {a, b}), [a, b, kind](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) detail::accumulate_broadcast(gr.grad_ref(a), go, detail::Bcast::kSame);
    if (gr.requires_grad(b)) detail::accumulate_broadcast(gr.grad_ref(b), go, kind);
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::graph_of(a, b, "sub");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const auto kind = detail::broadcast_kind("sub", x, z);
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= kind == detail::Bcast::kSame ? z[i] : z[i % n];
  return g.push(std::move(y), detail::any_grad(g, {a, b}), [a, b, kind](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) detail::accumulate_broadcast(gr.grad_ref(a), go, detail::Bcast::kSame);
    if (gr.requires_grad(b)) detail::accumulate_broadcast(gr.grad_ref(b), go, kind, -1.0);
  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const auto kind = detail::broadcast_kind("mul", x, z);
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= kind == detail::Bcast::kSame ? z[i] : z[i % n];
  return g.push(std::move(y), detail::any_grad(g, {a, b}), [a, b, kind](Graph& gr, const Tensor& go) {
    const Tensor& xv = gr.value(a);
    const Tensor& zv = gr.value(b);
    const std::size_t cols = xv.cols();
    const bool same = kind == detail::Bcast::kSame;
    if (gr.requires_grad(a)) {
      Tensor& ga = gr.grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * (same ? zv[i] : zv[i % cols]);
    }
    if (gr.requires_grad(b)) {
      Tensor& gb = gr.grad_ref(b);
      for (std::size_t i = 0; i < xv.size(); ++i) gb[same ? i : i % cols] += go[i] * xv[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Graph& g = detail::graph_of(a, "scale");
  Tensor y = a.value();
  for (auto& v : y.storage()) v *= s;
  return g.push(std::move(y), g.requires_grad(a), [a, s](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * go[i];
  });
}

inline Var add_scalar(Var a, double s) {
  Graph& g = detail::graph_of(a, "add_scalar");
  Tensor y = a.value();
  for (auto& v : y.storage()) v += s;
  return g.push(std::move(y), g.requires_grad(a), [a](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
  });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return neg(a); }

// ----------------------------------------------------------------------------
// Elementwise unary

inline Var sigmoid(Var a) {
  return detail::map_unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::map_unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(Var a) {
  return detail::map_unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::map_unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var relu(Var a) {
  return detail::map_unary(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var square(Var a) {
  return detail::map_unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ----------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  Graph& g = detail::graph_of(a, "sum");
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  return g.push(Tensor::scalar(s), g.requires_grad(a), [a](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_ref(a);
    const double d = go[0];
    for (auto& v : ga.storage()) v += d;
  });
}

inline Var mean(Var a) {
  const auto n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Row-wise log(sum(exp(x))), computed with max subtraction. Output m x 1.
inline Var logsumexp_rows(Var a) {
  Graph& g = detail::graph_of(a, "logsumexp_rows");
  const Tensor& x = a.value();
  if (x.cols() == 0) throw std::invalid_argument("logsumexp_rows: zero columns");
  Tensor y(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row_span(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    y[r] = m + std::log(s);
  }
  const auto out_id = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(y), g.requires_grad(a), [a, out_id](Graph& gr, const Tensor& go) {
    const Tensor& xv = gr.value(a);
    const Tensor& yv = gr.value_by_id(out_id);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (std::size_t c = 0; c < xv.cols(); ++c) ga(r, c) += go[r] * std::exp(xv(r, c) - yv[r]);
  });
}

inline Var softmax_rows(Var a) {
  Graph& g = detail::graph_of(a, "softmax_rows");
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row_span(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += (y(r, c) = std::exp(row[c] - m));
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= s;
  }
  const auto out_id = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(y), g.requires_grad(a), [a, out_id](Graph& gr, const Tensor& go) {
    const Tensor& yv = gr.value_by_id(out_id);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t r = 0; r < yv.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < yv.cols(); ++c) dot += go(r, c) * yv(r, c);
      for (std::size_t c = 0; c < yv.cols(); ++c) ga(r, c) += yv(r, c) * (go(r, c) - dot);
    }
  });
}

inline Var log_softmax_rows(Var a) {
  Graph& g = detail::graph_of(a, "log_softmax_rows");
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row_span(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = row[c] - lse;
  }
  const auto out_id = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(y), g.requires_grad(a), [a, out_id](Graph& gr, const Tensor& go) {
    const Tensor& yv = gr.value_by_id(out_id);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t r = 0; r < yv.rows(); ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < yv.cols(); ++c) gs += go(r, c);
      for (std::size_t c = 0; c < yv.cols(); ++c) ga(r, c) += go(r, c) - std::exp(yv(r, c)) * gs;
    }
  });
}

/// Row-wise normalization to zero mean and unit variance (no affine part).
inline Var layer_norm_rows(Var a, double eps = 1e-5) {
  Graph& g = detail::graph_of(a, "layer_norm_rows");
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  if (n == 0) throw std::invalid_argument("layer_norm_rows: zero columns");
  Tensor y(x.rows(), n);
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row_span(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) y(r, c) = (row[c] - mu) * inv_std[r];
  }
  const auto out_id = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(y), g.requires_grad(a),
                [a, out_id, inv_std = std::move(inv_std)](Graph& gr, const Tensor& go) {
                  const Tensor& yv = gr.value_by_id(out_id);
                  Tensor& ga = gr.grad_ref(a);
                  const std::size_t cols = yv.cols();
                  const double inv_n = 1.0 / static_cast<double>(cols);
                  for (std::size_t r = 0; r < yv.rows(); ++r) {
                    double mg = 0.0, mgy = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                      mg += go(r, c);
                      mgy += go(r, c) * yv(r, c);
                    }
                    mg *= inv_n;
                    mgy *= inv_n;
                    for (std::size_t c = 0; c < cols; ++c)
                      ga(r, c) += inv_std[r] * (go(r, c) - mg - yv(r, c) * mgy);
                  }
                });
}

// ----------------------------------------------------------------------------
// Structural

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Graph& g = detail::graph_of(parts[0], "concat_cols");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    g.check_owned(p, "concat_cols");
    if (p.rows() != rows) detail::shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    rg = rg || g.requires_grad(p);
  }
  Tensor y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row_span(r).begin(), v.row_span(r).end(), y.row_span(r).begin() + off);
    off += v.cols();
  }
  return g.push(std::move(y), rg, [parts](Graph& gr, const Tensor& go) {
    std::size_t o = 0;
    for (Var p : parts) {
      const std::size_t c = gr.value(p).cols();
      if (gr.requires_grad(p)) {
        Tensor& gp = gr.grad_ref(p);
        for (std::size_t r = 0; r < go.rows(); ++r)
          for (std::size_t k = 0; k < c; ++k) gp(r, k) += go(r, o + k);
      }
      o += c;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  Graph& g = detail::graph_of(parts[0], "concat_rows");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    g.check_owned(p, "concat_rows");
    if (p.cols() != cols) detail::shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    rg = rg || g.requires_grad(p);
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (Var p : parts) {
    const auto& s = p.value().storage();
    data.insert(data.end(), s.begin(), s.end());
  }
  return g.push(Tensor(rows, cols, std::move(data)), rg, [parts](Graph& gr, const Tensor& go) {
    std::size_t o = 0;
    for (Var p : parts) {
      const std::size_t n = gr.value(p).size();
      if (gr.requires_grad(p)) {
        Tensor& gp = gr.grad_ref(p);
        for (std::size_t k = 0; k < n; ++k) gp[k] += go[o + k];
      }
      o += n;
    }
  });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Graph& g = detail::graph_of(a, "slice_cols");
  const Tensor& x = a.value();
  if (start + count > x.cols()) {
    throw std::invalid_argument("slice_cols: columns [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of range for shape " +
                                x.shape_string());
  }
  Tensor y(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) y(r, c) = x(r, start + c);
  return g.push(std::move(y), g.requires_grad(a), [a, start, count](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, start + c) += go(r, c);
  });
}

inline Var slice_rows(Var a, std::size_t start, std::size_t count) {
  Graph& g = detail::graph_of(a, "slice_rows");
  const Tensor& x = a.value();
  if (start + count > x.rows()) {
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of range for shape " +
                                x.shape_string());
  }
  std::vector<double> data(x.storage().begin() + static_cast<std::ptrdiff_t>(start * x.cols()),
                           x.storage().begin() + static_cast<std::ptrdiff_t>((start + count) * x.cols()));
  return g.push(Tensor(count, x.cols(), std::move(data)), g.requires_grad(a),
                [a, start](Graph& gr, const Tensor& go) {
                  Tensor& ga = gr.grad_ref(a);
                  const std::size_t off = start * ga.cols();
                  for (std::size_t k = 0; k < go.size(); ++k) ga[off + k] += go[k];
                });
}

/// Gathers rows of `table` (V x d) at `ids`, producing ids.size() x d.
inline Var embedding(Var table, const std::vector<std::size_t>& ids) {
  Graph& g = detail::graph_of(table, "embedding");
  const Tensor& t = table.value();
  Tensor y(ids.size(), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= t.rows()) {
      throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) +
                                  " out of range for table " + t.shape_string());
    }
    std::copy(t.row_span(ids[i]).begin(), t.row_span(ids[i]).end(), y.row_span(i).begin());
  }
  return g.push(std::move(y), g.requires_grad(table), [table, ids](Graph& gr, const Tensor& go) {
    Tensor& gt = gr.grad_ref(table);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < go.cols(); ++c) gt(ids[i], c) += go(i, c);
  });
}

}  // namespace scenesketch
