#pragma once

// Factorised potential U(x) = sum_j U_j(x), control-variate stochastic
// gradient estimator and the ADAM fitter used to place the anchor point.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sgpdmp/rng.hpp"

namespace sgpdmp {

using Vector = Eigen::VectorXd;

// A target defined through N per-datum potential factors. The gradient
// oracle is mandatory; the potential oracle is optional and only used by
// consistency checks and diagnostics. Immutable after construction and
// safe to share across chains.
struct FactorModel {
  int n_factors = 0;  // N
  int dim = 0;        // d
  std::function<Vector(int j, const Vector& x)> factor_grad;
  std::function<double(int j, const Vector& x)> factor_potential;  // optional

  bool has_potential() const { return static_cast<bool>(factor_potential); }

  void check_point(const Vector& x) const {
    if (x.size() != dim)
      throw std::invalid_argument("FactorModel: point has dimension " +
                                  std::to_string(x.size()) + ", expected " +
                                  std::to_string(dim));
  }
};

inline Vector full_gradient(const FactorModel& model, const Vector& x) {
  model.check_point(x);
  Vector g = Vector::Zero(model.dim);
  for (int j = 0; j < model.n_factors; ++j) g += model.factor_grad(j, x);
  return g;
}

inline double full_potential(const FactorModel& model, const Vector& x) {
  model.check_point(x);
  double u = 0.0;
  for (int j = 0; j < model.n_factors; ++j) u += model.factor_potential(j, x);
  return u;
}

// Anchor point plus the exactly-computed full gradient there. Per-factor
// gradients at the anchor are recomputed on demand, keeping memory O(d).
struct ControlVariate {
  Vector anchor;
  Vector full_grad_at_anchor;

  static ControlVariate at(const FactorModel& model, Vector anchor_point) {
    model.check_point(anchor_point);
    ControlVariate cv;
    cv.full_grad_at_anchor = full_gradient(model, anchor_point);
    cv.anchor = std::move(anchor_point);
    return cv;
  }
};

// Mini-batch control-variate estimator of the full gradient:
// average over j in batch of N*(grad U_j(x) - grad U_j(anchor)) + G_hat.
// Unbiased for any batch; exact at x = anchor and for batch = all factors.
inline Vector cv_gradient(const FactorModel& model, const ControlVariate& cv,
                          std::span<const int> batch, const Vector& x) {
  model.check_point(x);
  if (batch.empty()) throw std::invalid_argument("cv_gradient: empty batch");
  Vector diff = Vector::Zero(model.dim);
  for (int j : batch) {
    if (j < 0 || j >= model.n_factors)
      throw std::invalid_argument("cv_gradient: factor index " +
                                  std::to_string(j) + " out of range");
    diff += model.factor_grad(j, x) - model.factor_grad(j, cv.anchor);
  }
  const double scale =
      static_cast<double>(model.n_factors) / static_cast<double>(batch.size());
  return scale * diff + cv.full_grad_at_anchor;
}

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  int iterations = 100000;
  double minibatch_fraction = 0.01;

  void validate() const {
    if (!(alpha > 0)) throw std::invalid_argument("AdamConfig: alpha <= 0");
    if (!(beta1 > 0 && beta1 < 1))
      throw std::invalid_argument("AdamConfig: beta1 outside (0,1)");
    if (!(beta2 > 0 && beta2 < 1))
      throw std::invalid_argument("AdamConfig: beta2 outside (0,1)");
    if (!(delta > 0)) throw std::invalid_argument("AdamConfig: delta <= 0");
    if (iterations < 1)
      throw std::invalid_argument("AdamConfig: iterations < 1");
    if (!(minibatch_fraction > 0 && minibatch_fraction <= 1))
      throw std::invalid_argument("AdamConfig: minibatch_fraction outside (0,1]");
  }
};

// One bias-corrected ADAM update; t is the 1-based iteration index.
inline void adam_step(Vector& x, Vector& m, Vector& v, const Vector& grad,
                      int t, const AdamConfig& cfg) {
  if (x.size() != grad.size() || m.size() != grad.size() ||
      v.size() != grad.size())
    throw std::invalid_argument("adam_step: dimension mismatch");
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double m_corr = 1.0 - std::pow(cfg.beta1, t);
  const double v_corr = 1.0 - std::pow(cfg.beta2, t);
  x -= cfg.alpha * (m / m_corr).cwiseQuotient(
           ((v / v_corr).cwiseSqrt().array() + cfg.delta).matrix());
}

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// ADAM on mini-batch stochastic gradients (uniform sampling without
// replacement within a batch); returns the final iterate as anchor with
// its exactly-computed full gradient.
inline ControlVariate fit_control_variate(const FactorModel& model,
                                          const AdamConfig& cfg,
                                          std::uint64_t seed,
                                          const Vector& init) {
  cfg.validate();
  model.check_point(init);
  Rng rng(seed);
  const int n = std::max(
      1, static_cast<int>(cfg.minibatch_fraction * model.n_factors));
  Vector x = init;
  Vector m = Vector::Zero(model.dim);
  Vector v = Vector::Zero(model.dim);
  std::vector<int> batch(n);
  std::vector<int> pool(model.n_factors);
  for (int j = 0; j < model.n_factors; ++j) pool[j] = j;
  for (int t = 1; t <= cfg.iterations; ++t) {
    // Partial Fisher-Yates draws n distinct factors.
    for (int k = 0; k < n; ++k) {
      const auto pick =
          k + static_cast<int>(rng.uniform_index(model.n_factors - k));
      std::swap(pool[k], pool[pick]);
      batch[k] = pool[k];
    }
    Vector grad = Vector::Zero(model.dim);
    for (int j : batch) grad += model.factor_grad(j, x);
    grad *= static_cast<double>(model.n_factors) / n;
    if (!grad.allFinite())
      throw DivergenceError("fit_control_variate: non-finite gradient at iteration " +
                            std::to_string(t));
    adam_step(x, m, v, grad, t, cfg);
    if (!x.allFinite())
      throw DivergenceError("fit_control_variate: non-finite iterate at iteration " +
                            std::to_string(t));
  }
  return ControlVariate::at(model, x);
}

inline ControlVariate fit_control_variate(const FactorModel& model,
                                          const AdamConfig& cfg,
                                          std::uint64_t seed) {
  return fit_control_variate(model, cfg, seed, Vector::Zero(model.dim));
}

}  // namespace sgpdmp
