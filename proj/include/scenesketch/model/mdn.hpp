#pragma once

// Bivariate Gaussian mixture heads.
//
// A head emits 6M raw values per row, laid out as
//   [pi logits (M) | mu_x (M) | mu_y (M) | log sigma_x (M) | log sigma_y (M) | rho pre-tanh (M)]
// Activations: softmax for the weights, exp for the scales, tanh for the
// correlations.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "scenesketch/core/ops.hpp"
#include "scenesketch/core/rng.hpp"

namespace scenesketch {

struct MdnParams {
  std::vector<double> pi;
  std::vector<double> mu_x, mu_y;
  std::vector<double> sigma_x, sigma_y;
  std::vector<double> rho;

  std::size_t components() const { return pi.size(); }

  void validate() const {
    const std::size_t m = pi.size();
    if (m == 0 || mu_x.size() != m || mu_y.size() != m || sigma_x.size() != m ||
        sigma_y.size() != m || rho.size() != m)
      throw std::invalid_argument("MdnParams: inconsistent component counts");
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (pi[i] < 0) throw std::invalid_argument("MdnParams: negative weight");
      if (!(sigma_x[i] > 0 && sigma_y[i] > 0)) throw std::invalid_argument("MdnParams: sigma <= 0");
      if (!(std::abs(rho[i]) < 1)) throw std::invalid_argument("MdnParams: |rho| >= 1");
      s += pi[i];
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("MdnParams: weights do not sum to 1");
  }
};

inline constexpr std::size_t mdn_width(std::size_t components) { return 6 * components; }

/// Applies the head activations to one raw row.
inline MdnParams mdn_from_raw(std::span<const double> raw, std::size_t m) {
  if (raw.size() != 6 * m) throw std::invalid_argument("mdn_from_raw: expected 6M values");
  MdnParams p;
  const double mx = *std::max_element(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(m));
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    p.pi.push_back(std::exp(raw[i] - mx));
    s += p.pi.back();
  }
  for (auto& v : p.pi) v /= s;
  for (std::size_t i = 0; i < m; ++i) {
    p.mu_x.push_back(raw[m + i]);
    p.mu_y.push_back(raw[2 * m + i]);
    p.sigma_x.push_back(std::exp(raw[3 * m + i]));
    p.sigma_y.push_back(std::exp(raw[4 * m + i]));
    p.rho.push_back(std::tanh(raw[5 * m + i]));
  }
  return p;
}

inline double bivariate_normal_log_density(double x, double y, double mx, double my, double sx,
                                           double sy, double rho) {
  const double zx = (x - mx) / sx;
  const double zy = (y - my) / sy;
  const double omr = 1.0 - rho * rho;
  const double z = zx * zx + zy * zy - 2.0 * rho * zx * zy;
  return -std::log(2.0 * std::numbers::pi) - std::log(sx) - std::log(sy) - 0.5 * std::log(omr) -
         0.5 * z / omr;
}

inline double mixture_density(const MdnParams& p, double x, double y) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.components(); ++i)
    d += p.pi[i] * std::exp(bivariate_normal_log_density(x, y, p.mu_x[i], p.mu_y[i], p.sigma_x[i],
                                                         p.sigma_y[i], p.rho[i]));
  return d;
}

/// -log sum_i pi_i N(target; mu_i, sigma_i, rho_i), evaluated with log-sum-exp.
inline double mdn_nll(const MdnParams& p, double x, double y) {
  std::vector<double> terms;
  for (std::size_t i = 0; i < p.components(); ++i) {
    terms.push_back(std::log(p.pi[i]) + bivariate_normal_log_density(x, y, p.mu_x[i], p.mu_y[i],
                                                                      p.sigma_x[i], p.sigma_y[i],
                                                                      p.rho[i]));
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return -m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return -(m + std::log(s));
}

/// Differentiable mixture NLL summed over rows with mask 1.
///
/// raw: N x 6M head output; targets: N x 2; mask: N x 1 of 0/1.
inline Var mdn_nll(Var raw, const Tensor& targets, const Tensor& mask, std::size_t m) {
  Graph& g = *raw.graph();
  const std::size_t n = raw.rows();
  if (raw.cols() != 6 * m) {
    throw std::invalid_argument("mdn_nll: head width " + std::to_string(raw.cols()) +
                                " does not match 6M = " + std::to_string(6 * m));
  }
  if (targets.rows() != n || targets.cols() != 2 || mask.rows() != n || mask.cols() != 1) {
    throw std::invalid_argument("mdn_nll: targets " + targets.shape_string() + " / mask " +
                                mask.shape_string() + " do not match " + std::to_string(n) +
                                " rows");
  }
  Tensor tx(n, m), ty(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      tx(r, c) = targets(r, 0);
      ty(r, c) = targets(r, 1);
    }
  }
  Var log_pi = log_softmax_rows(slice_cols(raw, 0, m));
  Var mux = slice_cols(raw, m, m);
  Var muy = slice_cols(raw, 2 * m, m);
  Var lsx = slice_cols(raw, 3 * m, m);
  Var lsy = slice_cols(raw, 4 * m, m);
  Var rho = tanh(slice_cols(raw, 5 * m, m));
  Var zx = mul(sub(g.constant(std::move(tx)), mux), exp(neg(lsx)));
  Var zy = mul(sub(g.constant(std::move(ty)), muy), exp(neg(lsy)));
  Var log_omr = log(add_scalar(neg(square(rho)), 1.0));
  Var z = sub(add(square(zx), square(zy)), scale(mul(rho, mul(zx, zy)), 2.0));
  Var log_n = sub(sub(add_scalar(neg(add(lsx, lsy)), -std::log(2.0 * std::numbers::pi)),
                      scale(log_omr, 0.5)),
                  scale(mul(z, exp(neg(log_omr))), 0.5));
  Var log_mix = logsumexp_rows(add(log_pi, log_n));
  return neg(sum(mul(log_mix, g.constant(mask))));
}

/// Draws one point. Temperature divides the weight logits and scales each
/// sigma by sqrt(temperature).
inline std::pair<double, double> sample_mdn(const MdnParams& p, double temperature, Rng& rng) {
  if (!(temperature > 0)) throw std::invalid_argument("sample_mdn: temperature must be positive");
  std::vector<double> logw(p.components());
  for (std::size_t i = 0; i < logw.size(); ++i) logw[i] = std::log(p.pi[i]) / temperature;
  const double mx = *std::max_element(logw.begin(), logw.end());
  for (auto& v : logw) v = std::exp(v - mx);
  const std::size_t k = rng.categorical(logw);
  const double st = std::sqrt(temperature);
  const double n1 = rng.normal();
  const double n2 = rng.normal();
  const double sx = p.sigma_x[k] * st;
  const double sy = p.sigma_y[k] * st;
  const double x = p.mu_x[k] + sx * n1;
  const double y = p.mu_y[k] + sy * (p.rho[k] * n1 + std::sqrt(1.0 - p.rho[k] * p.rho[k]) * n2);
  return {x, y};
}

/// Sum over rows of -log softmax(logits)[target]; rows with mask 0 are skipped.
inline Var categorical_cross_entropy(Var logits, const std::vector<std::size_t>& targets,
                                     const std::vector<double>* mask = nullptr) {
  Graph& g = *logits.graph();
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  if (targets.size() != n || (mask && mask->size() != n)) {
    throw std::invalid_argument("categorical_cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  }
  Tensor onehot(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= k) throw std::invalid_argument("categorical_cross_entropy: target out of range");
    onehot(r, targets[r]) = mask ? (*mask)[r] : 1.0;
  }
  return neg(sum(mul(log_softmax_rows(logits), g.constant(std::move(onehot)))));
}

/// Softmax with temperature over a subset of logits; entries outside `allowed` get 0.
inline std::vector<double> tempered_softmax(std::span<const double> logits, double temperature,
                                            const std::vector<bool>* allowed = nullptr) {
  std::vector<double> p(logits.size(), 0.0);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!allowed || (*allowed)[i]) mx = std::max(mx, logits[i] / temperature);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed && !(*allowed)[i]) continue;
    p[i] = std::exp(logits[i] / temperature - mx);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace scenesketch
