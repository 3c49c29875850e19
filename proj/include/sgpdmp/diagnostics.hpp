#pragma once

// Trajectory post-processing and evaluation metrics: exact path moments,
// relative standard-deviation error, kernel Stein discrepancy with the
// inverse-multiquadric kernel, autocorrelation and predictive losses.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sgpdmp/gradient_model.hpp"
#include "sgpdmp/targets.hpp"
#include "sgpdmp/trajectory.hpp"

namespace sgpdmp {

struct SampleMatrix {
  Matrix samples;  // K x d
  double delta = 0.0;

  int n_samples() const { return static_cast<int>(samples.rows()); }
};

struct MetricsReport {
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double ksd = std::numeric_limits<double>::quiet_NaN();
  double predictive_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vector> acf;  // per coordinate, lag 0..max_lag
  bool divergence_flag = false;
  double wall_time_s = 0.0;
  std::uint64_t gradient_evaluations = 0;
};

// Evaluates the exact piecewise-linear path at times t0, t0+delta, ...,
// appending the final time if the grid does not land on it.
inline SampleMatrix discretize_trajectory(const Trajectory& traj,
                                          double delta) {
  if (!(delta > 0)) throw std::invalid_argument("discretize: delta <= 0");
  if (traj.skeleton.empty())
    throw std::invalid_argument("discretize: empty trajectory");
  const double t0 = traj.skeleton.front().t;
  const double t1 = traj.skeleton.back().t;
  std::vector<double> times;
  for (double t = t0; t <= t1 + 1e-12 * std::max(1.0, std::abs(t1));
       t += delta)
    times.push_back(std::min(t, t1));
  if (times.back() < t1 - 1e-12 * std::max(1.0, std::abs(t1)))
    times.push_back(t1);
  SampleMatrix out;
  out.delta = delta;
  out.samples = Matrix(times.size(), traj.skeleton.front().x.size());
  for (std::size_t k = 0; k < times.size(); ++k)
    out.samples.row(k) = traj.at(times[k]).transpose();
  return out;
}

// Time-averaged mean and standard deviation via exact per-segment
// integrals of x and x^2 along the piecewise-linear path.
inline std::pair<Vector, Vector> path_moments(const Trajectory& traj) {
  if (traj.skeleton.size() < 2 || traj.duration() <= 0)
    throw std::invalid_argument("path_moments: zero-duration path");
  const long d = traj.skeleton.front().x.size();
  Vector sum = Vector::Zero(d);
  Vector sum_sq = Vector::Zero(d);
  for (std::size_t k = 0; k + 1 < traj.skeleton.size(); ++k) {
    const auto& a = traj.skeleton[k];
    const auto& b = traj.skeleton[k + 1];
    const double dt = b.t - a.t;
    if (dt <= 0) continue;
    sum += 0.5 * dt * (a.x + b.x);
    // int of (linear)^2 over the segment
    sum_sq += (dt / 3.0) *
              (a.x.cwiseProduct(a.x) + a.x.cwiseProduct(b.x) +
               b.x.cwiseProduct(b.x));
  }
  const double total = traj.duration();
  Vector mean = sum / total;
  Vector var = sum_sq / total - mean.cwiseProduct(mean);
  return {mean, var.cwiseMax(0.0).cwiseSqrt()};
}

// Mean over coordinates of the squared relative error in the standard
// deviation.
inline double std_error_metric(const Vector& estimated, const Vector& truth) {
  if (estimated.size() != truth.size())
    throw std::invalid_argument("std_error_metric: length mismatch");
  double acc = 0.0;
  for (long i = 0; i < truth.size(); ++i) {
    if (!(truth[i] > 0))
      throw std::invalid_argument("std_error_metric: non-positive true std");
    const double rel = (estimated[i] - truth[i]) / truth[i];
    acc += rel * rel;
  }
  return acc / static_cast<double>(truth.size());
}

// Kernel Stein discrepancy with kernel (c^2 + ||x-y||^2)^beta and score
// -grad U. Per coordinate k the Stein kernel is
//   s_k(x) s_k(y) kern + s_k(x) d_{y_k} kern + s_k(y) d_{x_k} kern
//   + d_{x_k} d_{y_k} kern,
// and the reported value sums sqrt(mean over pairs) across coordinates.
inline double ksd(const SampleMatrix& samples,
                  const std::function<Vector(const Vector&)>& grad_u, double c,
                  double beta) {
  if (!(beta > -1.0 && beta < 0.0))
    throw std::invalid_argument("ksd: beta outside (-1,0)");
  if (!(c > 0)) throw std::invalid_argument("ksd: c <= 0");
  const int n = samples.n_samples();
  if (n < 1) throw std::invalid_argument("ksd: no samples");
  const long d = samples.samples.cols();
  Matrix scores(n, d);
  for (int i = 0; i < n; ++i)
    scores.row(i) = -grad_u(samples.samples.row(i)).transpose();

  Vector acc = Vector::Zero(d);
  const double c2 = c * c;
  Vector diff(d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      diff = samples.samples.row(i) - samples.samples.row(j);
      const double base = c2 + diff.squaredNorm();
      const double kern = std::pow(base, beta);
      const double k1 = beta * kern / base;              // beta*(base)^(b-1)
      const double k2 = (beta - 1.0) * k1 / base;        // b(b-1) base^(b-2)
      for (long k = 0; k < d; ++k) {
        const double dk = diff[k];
        const double dx = 2.0 * k1 * dk;    // d kern / d x_k
        const double dy = -dx;              // d kern / d y_k
        const double dxy = -4.0 * k2 * dk * dk - 2.0 * k1;
        acc[k] += scores(i, k) * scores(j, k) * kern + scores(i, k) * dy +
                  scores(j, k) * dx + dxy;
      }
    }
  }
  double result = 0.0;
  const double nn = static_cast<double>(n) * n;
  for (long k = 0; k < d; ++k) result += std::sqrt(std::max(acc[k] / nn, 0.0));
  return result;
}

// Standard biased autocorrelation estimate, lags 0..max_lag.
inline Vector acf(const Vector& series, int max_lag) {
  const long n = series.size();
  if (n <= max_lag)
    throw std::invalid_argument("acf: series shorter than max lag");
  const double mean = series.mean();
  const Vector centered = series.array() - mean;
  const double c0 = centered.squaredNorm() / n;
  if (c0 <= 0) throw std::invalid_argument("acf: constant series");
  Vector out(max_lag + 1);
  for (int lag = 0; lag <= max_lag; ++lag) {
    out[lag] = centered.head(n - lag).dot(centered.tail(n - lag)) / n / c0;
  }
  return out;
}

enum class LossKind { LogisticNLL, MSE };

// Mean per-datum loss over a test set at parameter x. The logistic loss
// is the negative log-likelihood (nonnegative); MSE uses the supplied
// predictor, defaulting to the linear one.
inline double predictive_loss(
    LossKind kind, const Dataset& test, const Vector& x,
    const std::function<double(const Vector&, const Vector&)>& predict = {},
    bool* clamp_flag = nullptr) {
  test.validate();
  double acc = 0.0;
  for (int i = 0; i < test.n_rows(); ++i) {
    const Vector row = test.covariates.row(i);
    if (kind == LossKind::LogisticNLL) {
      double p = sigmoid(row.dot(x));
      if (p < 1e-12 || p > 1.0 - 1e-12) {
        p = std::clamp(p, 1e-12, 1.0 - 1e-12);
        if (clamp_flag) *clamp_flag = true;
      }
      const double y = test.responses[i];
      acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    } else {
      const double pred = predict ? predict(x, row) : row.dot(x);
      const double resid = test.responses[i] - pred;
      acc += resid * resid;
    }
  }
  return acc / test.n_rows();
}

inline double predictive_loss(
    LossKind kind, const Dataset& test, const SampleMatrix& samples,
    const std::function<double(const Vector&, const Vector&)>& predict = {}) {
  double acc = 0.0;
  for (int k = 0; k < samples.n_samples(); ++k)
    acc += predictive_loss(kind, test, samples.samples.row(k), predict);
  return acc / samples.n_samples();
}

// ----- distributional checks shared by tests and the acceptance suite -----

// One-sample Kolmogorov-Smirnov test against a cdf; returns the
// asymptotic p-value.
inline double ks_test_pvalue(std::vector<double> data,
                             const std::function<double(double)>& cdf) {
  if (data.empty()) throw std::invalid_argument("ks_test: no data");
  std::sort(data.begin(), data.end());
  const double n = static_cast<double>(data.size());
  double d_stat = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double f = cdf(data[i]);
    d_stat = std::max(d_stat, std::abs(f - static_cast<double>(i) / n));
    d_stat = std::max(d_stat, std::abs(static_cast<double>(i + 1) / n - f));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d_stat;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += 2.0 * sign * term;
    sign = -sign;
    if (term < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace sgpdmp
