#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "scenesketch/core/graph.hpp"
#include "scenesketch/core/ops.hpp"
#include "scenesketch/core/rng.hpp"

namespace scenesketch::nn {

inline Tensor uniform_init(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_init(fan_in, fan_out, bound, rng);
}

/// Affine map x W + b.
struct Dense {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Dense create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng) {
    Dense d;
    d.weight = &ps.add(name + ".w", glorot(in, out, rng));
    d.bias = &ps.add(name + ".b", Tensor(1, out));
    return d;
  }

  static Dense bind(ParamStore& ps, const std::string& name) {
    return Dense{&ps.get(name + ".w"), &ps.get(name + ".b")};
  }

  std::size_t in() const { return weight->value.rows(); }
  std::size_t out() const { return weight->value.cols(); }

  Var operator()(Graph& g, Var x) const { return add(matmul(x, g.param(*weight)), g.param(*bias)); }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParamStore& ps, const std::string& name, std::size_t dim) {
    return LayerNorm{&ps.add(name + ".gain", Tensor(1, dim, 1.0)),
                     &ps.add(name + ".bias", Tensor(1, dim))};
  }
  static LayerNorm bind(ParamStore& ps, const std::string& name) {
    return LayerNorm{&ps.get(name + ".gain"), &ps.get(name + ".bias")};
  }

  Var operator()(Graph& g, Var x) const {
    return add(mul(layer_norm_rows(x), g.param(*gain)), g.param(*bias));
  }
};

/// Gated recurrent cell with explicit cell state (gate order i, f, g, o).
struct LstmCell {
  Parameter* w_input = nullptr;
  Parameter* w_hidden = nullptr;
  Parameter* bias = nullptr;

  static LstmCell create(ParamStore& ps, const std::string& name, std::size_t input,
                         std::size_t hidden, Rng& rng) {
    LstmCell c;
    c.w_input = &ps.add(name + ".wx", glorot(input, 4 * hidden, rng));
    c.w_hidden = &ps.add(name + ".wh", glorot(hidden, 4 * hidden, rng));
    Tensor b(1, 4 * hidden);
    for (std::size_t k = hidden; k < 2 * hidden; ++k) b[k] = 1.0;  // forget gate
    c.bias = &ps.add(name + ".b", std::move(b));
    return c;
  }
  static LstmCell bind(ParamStore& ps, const std::string& name) {
    return LstmCell{&ps.get(name + ".wx"), &ps.get(name + ".wh"), &ps.get(name + ".b")};
  }

  std::size_t hidden() const { return w_hidden->value.rows(); }
  std::size_t input() const { return w_input->value.rows(); }

  /// Returns {h, c}.
  std::pair<Var, Var> step(Graph& g, Var x, Var h, Var c) const {
    const std::size_t n = hidden();
    Var gates = add(add(matmul(x, g.param(*w_input)), matmul(h, g.param(*w_hidden))),
                    g.param(*bias));
    Var i = sigmoid(slice_cols(gates, 0, n));
    Var f = sigmoid(slice_cols(gates, n, n));
    Var cand = tanh(slice_cols(gates, 2 * n, n));
    Var o = sigmoid(slice_cols(gates, 3 * n, n));
    Var c_next = add(mul(f, c), mul(i, cand));
    Var h_next = mul(o, tanh(c_next));
    return {h_next, c_next};
  }
};

/// Multi-head scaled dot-product attention assembled from primitives.
struct MultiHeadAttention {
  Dense query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamStore& ps, const std::string& name, std::size_t d_model,
                                   std::size_t heads, Rng& rng) {
    MultiHeadAttention a;
    a.query = Dense::create(ps, name + ".q", d_model, d_model, rng);
    a.key = Dense::create(ps, name + ".k", d_model, d_model, rng);
    a.value = Dense::create(ps, name + ".v", d_model, d_model, rng);
    a.output = Dense::create(ps, name + ".o", d_model, d_model, rng);
    a.heads = heads;
    return a;
  }
  static MultiHeadAttention bind(ParamStore& ps, const std::string& name, std::size_t heads) {
    return MultiHeadAttention{Dense::bind(ps, name + ".q"), Dense::bind(ps, name + ".k"),
                              Dense::bind(ps, name + ".v"), Dense::bind(ps, name + ".o"), heads};
  }

  /// `mask`, when given, is added to the (queries x keys) scores.
  Var operator()(Graph& g, Var queries, Var keys_values, const Tensor* mask = nullptr) const {
    const std::size_t d = query.out();
    const std::size_t dh = d / heads;
    Var q = query(g, queries);
    Var k = key(g, keys_values);
    Var v = value(g, keys_values);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    Var mask_var;
    if (mask) mask_var = g.constant(*mask);
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = slice_cols(q, h * dh, dh);
      Var kh = slice_cols(k, h * dh, dh);
      Var vh = slice_cols(v, h * dh, dh);
      Var scores = scale(matmul(qh, transpose(kh)), inv);
      if (mask) scores = add(scores, mask_var);
      outs.push_back(matmul(softmax_rows(scores), vh));
    }
    return output(g, heads == 1 ? outs[0] : concat_cols(outs));
  }
};

inline Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor t(length, dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      t(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

/// Additive mask forbidding attention from position i to any j > i.
inline Tensor causal_mask(std::size_t length) {
  Tensor m(length, length);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = i + 1; j < length; ++j) m(i, j) = -1e30;
  return m;
}

}  // namespace scenesketch::nn
