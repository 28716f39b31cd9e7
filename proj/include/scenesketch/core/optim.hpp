#pragma once

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenesketch/core/graph.hpp"

namespace scenesketch {

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter " + param), param_(param) {}
  const std::string& parameter() const { return param_; }

 private:
  std::string param_;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update from the gradients held in `params`.
///
/// A parameter tensor whose gradient is identically zero keeps its value;
/// only its moments decay. Gradients are checked for NaN/inf before anything
/// is modified.
inline void adam_step(ParamStore& params, AdamState& state) {
  for (const auto& p : params) {
    for (double g : p.grad.storage())
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& p : params) {
    auto [m_it, m_new] = state.first_moment.try_emplace(p.name, p.value.rows(), p.value.cols());
    auto [v_it, v_new] = state.second_moment.try_emplace(p.name, p.value.rows(), p.value.cols());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (!m.same_shape(p.value) || !v.same_shape(p.value)) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + p.name);
    }
    bool all_zero = true;
    for (double g : p.grad.storage()) {
      if (g != 0.0) {
        all_zero = false;
        break;
      }
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      if (all_zero) continue;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

inline double global_norm(std::span<const Tensor* const> grads) {
  double s = 0.0;
  for (const Tensor* g : grads)
    for (double v : g->storage()) s += v * v;
  return std::sqrt(s);
}

/// Rescales the gradients so their global L2 norm does not exceed max_norm.
/// Returns the norm before clipping. Clipping an already clipped set is a no-op.
inline double clip_gradients(std::span<Tensor* const> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  std::vector<const Tensor*> view(grads.begin(), grads.end());
  const double norm = global_norm(view);
  if (norm > max_norm) {
    // The (1 + 1e-12) margin keeps the clipped norm strictly below max_norm
    // after rounding, which makes a second pass leave the values untouched.
    const double factor = max_norm / (norm * (1.0 + 1e-12));
    for (Tensor* g : grads)
      for (double& v : g->storage()) v *= factor;
  }
  return norm;
}

inline double clip_gradients(ParamStore& params, double max_norm) {
  std::vector<Tensor*> grads;
  for (auto& p : params) grads.push_back(&p.grad);
  return clip_gradients(std::span<Tensor* const>(grads), max_norm);
}

}  // namespace scenesketch
