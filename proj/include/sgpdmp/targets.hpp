#pragma once

// Concrete factor models (linear regression with conjugate posterior,
// logistic regression, two-layer Bayesian neural network), synthetic data
// generators, spike-and-slab rate computation and CSV dataset ingestion.
//
// Prior handling: each model's Gaussian prior potential is split evenly
// across the N factors, U_j <- U_j + prior/N, keeping the single factor
// family of the sum decomposition.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sgpdmp/gradient_model.hpp"
#include "sgpdmp/rng.hpp"
#include "sgpdmp/samplers.hpp"

namespace sgpdmp {

using Matrix = Eigen::MatrixXd;

struct Dataset {
  Matrix covariates;           // N x p
  Vector responses;            // length N
  std::vector<std::string> feature_names;

  int n_rows() const { return static_cast<int>(covariates.rows()); }
  int n_features() const { return static_cast<int>(covariates.cols()); }

  void validate() const {
    if (covariates.rows() != responses.size())
      throw std::invalid_argument("Dataset: row/response count mismatch");
    if (!covariates.allFinite() || !responses.allFinite())
      throw std::invalid_argument("Dataset: non-finite entries");
  }
};

struct GaussianPosterior {
  Vector mean;
  Matrix covariance;
  Matrix precision;

  GaussianTarget target() const { return {mean, precision}; }
};

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  int replicate = 0;
};

// ----- synthetic generators -----

namespace detail {

// Symmetrize and clip eigenvalues; the paper-style correlation recipes do
// not guarantee positive definiteness.
inline Matrix project_to_pd(const Matrix& m, double floor = 1e-6) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix correlated_rows(int n, int p, const Matrix& cov, Rng& rng) {
  const Matrix chol = Eigen::LLT<Matrix>(cov).matrixL();
  Matrix rows(n, p);
  Vector z(p);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p; ++k) z[k] = rng.normal();
    rows.row(i) = (chol * z).transpose();
  }
  return rows;
}

// Pairwise Unif(lo,hi)^|i-j| draws, unit diagonal.
inline Matrix pairwise_power_covariance(int p, double lo, double hi, Rng& rng) {
  Matrix cov = Matrix::Identity(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double u = rng.uniform(lo, hi);
      cov(i, j) = cov(j, i) = std::pow(u, j - i);
    }
  return project_to_pd(cov);
}

}  // namespace detail

// Linear regression data: intercept column of ones, correlated Gaussian
// covariates, true intercept coefficient zero, noise N(0, N c I).
inline std::pair<Dataset, Vector> synth_linear_regression(int n, int d,
                                                          double c,
                                                          std::uint64_t seed) {
  if (n < 1 || d < 2 || !(c > 0))
    throw std::invalid_argument("synth_linear_regression: bad parameters");
  Rng rng(seed);
  const Matrix cov = detail::pairwise_power_covariance(d - 1, 0.4, 0.8, rng);
  Dataset data;
  data.covariates = Matrix(n, d);
  data.covariates.col(0).setOnes();
  data.covariates.rightCols(d - 1) = detail::correlated_rows(n, d - 1, cov, rng);
  Vector truth(d);
  truth[0] = 0.0;
  for (int i = 1; i < d; ++i) truth[i] = rng.normal();
  const double noise_sd = std::sqrt(static_cast<double>(n) * c);
  data.responses = data.covariates * truth;
  for (int i = 0; i < n; ++i) data.responses[i] += noise_sd * rng.normal();
  return {std::move(data), std::move(truth)};
}

inline std::pair<Dataset, Vector> synth_logistic(int n, int p, double rho,
                                                 std::uint64_t seed,
                                                 bool sparse = false) {
  if (n < 1 || p < 1 || rho < 0 || rho >= 1)
    throw std::invalid_argument("synth_logistic: bad parameters");
  Rng rng(seed);
  Matrix cov = rho == 0.0
                   ? Matrix::Identity(p, p)
                   : detail::pairwise_power_covariance(p, -rho, rho, rng);
  Dataset data;
  data.covariates = detail::correlated_rows(n, p, cov, rng);
  Vector truth(p);
  for (int i = 0; i < p; ++i) truth[i] = rng.normal();
  if (sparse)
    for (int i = 0; i < p; ++i)
      if (rng.uniform() < 0.5) truth[i] = 0.0;
  data.responses = Vector(n);
  for (int i = 0; i < n; ++i) {
    const double prob =
        1.0 / (1.0 + std::exp(-data.covariates.row(i).dot(truth)));
    data.responses[i] = rng.uniform() < prob ? 1.0 : 0.0;
  }
  return {std::move(data), std::move(truth)};
}

// ----- analytic linear-regression posterior -----

inline GaussianPosterior linear_posterior_analytic(const Dataset& data,
                                                   double c,
                                                   double prior_variance) {
  data.validate();
  const double nc = static_cast<double>(data.n_rows()) * c;
  const Matrix& a = data.covariates;
  GaussianPosterior post;
  post.precision = a.transpose() * a / nc +
                   Matrix::Identity(a.cols(), a.cols()) / prior_variance;
  Eigen::LLT<Matrix> llt(post.precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("linear_posterior_analytic: precision not PD");
  post.covariance = llt.solve(Matrix::Identity(a.cols(), a.cols()));
  post.mean = post.covariance * (a.transpose() * data.responses) / nc;
  return post;
}

// ----- factor models -----

inline FactorModel linear_regression_model(std::shared_ptr<const Dataset> data,
                                           double c, double prior_variance) {
  data->validate();
  const int n = data->n_rows();
  const int d = data->n_features();
  const double nc = static_cast<double>(n) * c;
  FactorModel model;
  model.n_factors = n;
  model.dim = d;
  model.factor_grad = [data, nc, prior_variance, n](int j, const Vector& x) {
    const auto row = data->covariates.row(j);
    const double resid = data->responses[j] - row.dot(x);
    return Vector(-resid / nc * row.transpose() + x / (prior_variance * n));
  };
  model.factor_potential = [data, nc, prior_variance, n](int j,
                                                         const Vector& x) {
    const double resid = data->responses[j] - data->covariates.row(j).dot(x);
    return resid * resid / (2.0 * nc) +
           x.squaredNorm() / (2.0 * prior_variance * n);
  };
  return model;
}

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline FactorModel logistic_model(std::shared_ptr<const Dataset> data,
                                  double prior_variance) {
  data->validate();
  const int n = data->n_rows();
  FactorModel model;
  model.n_factors = n;
  model.dim = data->n_features();
  model.factor_grad = [data, prior_variance, n](int j, const Vector& x) {
    const auto row = data->covariates.row(j);
    const double p = sigmoid(row.dot(x));
    return Vector((p - data->responses[j]) * row.transpose() +
                  x / (prior_variance * n));
  };
  model.factor_potential = [data, prior_variance, n](int j, const Vector& x) {
    const double t = data->covariates.row(j).dot(x);
    // log(1 + e^t) - y t, evaluated stably
    const double log1pe = std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
    return log1pe - data->responses[j] * t +
           x.squaredNorm() / (2.0 * prior_variance * n);
  };
  return model;
}

// ----- two-layer Bayesian neural network -----

// Flat parameter layout: W1 (hidden x p, row-major), b1 (hidden),
// W2 (hidden), b2 (scalar). ReLU hidden layer, identity output,
// unit observation noise.
struct BnnShape {
  int n_inputs = 0;
  int hidden = 50;

  int param_dim() const { return hidden * n_inputs + 2 * hidden + 1; }
  int w1_offset() const { return 0; }
  int b1_offset() const { return hidden * n_inputs; }
  int w2_offset() const { return hidden * n_inputs + hidden; }
  int b2_offset() const { return hidden * n_inputs + 2 * hidden; }
};

inline double bnn_predict(const BnnShape& shape, const Vector& params,
                          const Vector& input) {
  const int h = shape.hidden;
  const int p = shape.n_inputs;
  double out = params[shape.b2_offset()];
  for (int k = 0; k < h; ++k) {
    double pre = params[shape.b1_offset() + k];
    for (int i = 0; i < p; ++i)
      pre += params[shape.w1_offset() + k * p + i] * input[i];
    if (pre > 0.0) out += params[shape.w2_offset() + k] * pre;
  }
  return out;
}

inline FactorModel bnn_model(std::shared_ptr<const Dataset> data,
                             double prior_variance, int hidden = 50) {
  data->validate();
  const BnnShape shape{data->n_features(), hidden};
  const int n = data->n_rows();
  FactorModel model;
  model.n_factors = n;
  model.dim = shape.param_dim();
  model.factor_potential = [data, shape, prior_variance, n](int j,
                                                            const Vector& x) {
    const double resid =
        data->responses[j] - bnn_predict(shape, x, data->covariates.row(j));
    return 0.5 * resid * resid +
           x.squaredNorm() / (2.0 * prior_variance * n);
  };
  model.factor_grad = [data, shape, prior_variance, n](int j, const Vector& x) {
    const int h = shape.hidden;
    const int p = shape.n_inputs;
    const Vector input = data->covariates.row(j);
    // forward
    Vector pre(h);
    double out = x[shape.b2_offset()];
    for (int k = 0; k < h; ++k) {
      double s = x[shape.b1_offset() + k];
      for (int i = 0; i < p; ++i) s += x[shape.w1_offset() + k * p + i] * input[i];
      pre[k] = s;
      if (s > 0.0) out += x[shape.w2_offset() + k] * s;  // ReLU'(0) := 0
    }
    // reverse
    Vector grad = x / (prior_variance * n);
    const double delta = out - data->responses[j];  // d(0.5 resid^2)/d out
    grad[shape.b2_offset()] += delta;
    for (int k = 0; k < h; ++k) {
      if (pre[k] > 0.0) {
        grad[shape.w2_offset() + k] += delta * pre[k];
        const double back = delta * x[shape.w2_offset() + k];
        grad[shape.b1_offset() + k] += back;
        for (int i = 0; i < p; ++i)
          grad[shape.w1_offset() + k * p + i] += back * input[i];
      }
    }
    return grad;
  };
  return model;
}

// Synthetic regression rows for desk-scale BNN runs: standard normal
// covariates, responses from a random narrow network plus unit noise.
inline Dataset synth_bnn_regression(int n, int p, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.covariates = Matrix(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) data.covariates(i, j) = rng.normal();
  Vector w(p);
  for (int j = 0; j < p; ++j) w[j] = rng.normal();
  data.responses = Vector(n);
  for (int i = 0; i < n; ++i) {
    const double lin = data.covariates.row(i).dot(w) / std::sqrt(double(p));
    data.responses[i] = std::tanh(lin) + rng.normal();
  }
  return data;
}

// ----- spike-and-slab rates -----

// kappa_i = (1 - w_i) / w_i * slab density at zero.
inline Vector sticky_kappa(const Vector& weights, const Vector& slab_at_zero) {
  if (weights.size() != slab_at_zero.size())
    throw std::invalid_argument("sticky_kappa: length mismatch");
  Vector kappa(weights.size());
  for (long i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0 && weights[i] < 1.0))
      throw std::invalid_argument("sticky_kappa: weight outside (0,1)");
    if (!(slab_at_zero[i] > 0.0))
      throw std::invalid_argument("sticky_kappa: non-positive slab density");
    kappa[i] = (1.0 - weights[i]) / weights[i] * slab_at_zero[i];
  }
  return kappa;
}

inline double normal_density_at_zero(double variance) {
  return 1.0 / std::sqrt(2.0 * M_PI * variance);
}

// ----- CSV ingestion -----

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::runtime_error(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const int n_cols = static_cast<int>(header.size());
  if (n_cols < 2)
    throw std::runtime_error(path + ": need at least two columns");
  std::vector<std::vector<double>> rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": non-numeric cell at row " +
                                 std::to_string(row_no) + ", column " +
                                 std::to_string(col));
      }
    }
    if (static_cast<int>(row.size()) != n_cols)
      throw std::runtime_error(path + ": row " + std::to_string(row_no) +
                               " has " + std::to_string(row.size()) +
                               " cells, expected " + std::to_string(n_cols));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");
  Dataset data;
  data.feature_names.assign(header.begin(), header.end() - 1);
  data.covariates = Matrix(rows.size(), n_cols - 1);
  data.responses = Vector(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < n_cols - 1; ++j) data.covariates(i, j) = rows[i][j];
    data.responses[i] = rows[i][n_cols - 1];
  }
  data.validate();
  return data;
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  for (int j = 0; j < data.n_features(); ++j) {
    if (j < static_cast<int>(data.feature_names.size()))
      out << data.feature_names[j];
    else
      out << "x" << (j + 1);
    out << ',';
  }
  out << "y\n";
  for (int i = 0; i < data.n_rows(); ++i) {
    for (int j = 0; j < data.n_features(); ++j) out << data.covariates(i, j) << ',';
    out << data.responses[i] << "\n";
  }
}

// Permutes rows by the replicate-specific seed, splits at the train
// fraction; optional per-column standardization (covariates and response)
// fitted on the train split and applied to both.
inline std::pair<Dataset, Dataset> load_and_split(const Dataset& full,
                                                  const SplitSpec& spec,
                                                  bool standardize = false) {
  if (!(spec.train_fraction > 0 && spec.train_fraction < 1))
    throw std::invalid_argument("SplitSpec: train_fraction outside (0,1)");
  full.validate();
  const int n = full.n_rows();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(spec.seed, 0x5b115ULL, spec.replicate));
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
  const int n_train = std::max(
      1, std::min(n - 1, static_cast<int>(spec.train_fraction * n + 0.5)));

  auto take = [&](int begin, int count) {
    Dataset part;
    part.feature_names = full.feature_names;
    part.covariates = Matrix(count, full.n_features());
    part.responses = Vector(count);
    for (int i = 0; i < count; ++i) {
      part.covariates.row(i) = full.covariates.row(perm[begin + i]);
      part.responses[i] = full.responses[perm[begin + i]];
    }
    return part;
  };
  Dataset train = take(0, n_train);
  Dataset test = take(n_train, n - n_train);

  if (standardize) {
    auto fit_apply = [&](auto&& get_train, auto&& apply) {
      const double mean = get_train().mean();
      const double var =
          (get_train().array() - mean).square().sum() / get_train().size();
      const double sd = std::sqrt(var);
      if (sd > 1e-300) apply(mean, sd);
    };
    for (int j = 0; j < train.n_features(); ++j) {
      fit_apply([&]() -> Vector { return train.covariates.col(j); },
                [&](double mean, double sd) {
                  train.covariates.col(j) =
                      (train.covariates.col(j).array() - mean) / sd;
                  test.covariates.col(j) =
                      (test.covariates.col(j).array() - mean) / sd;
                });
    }
    fit_apply([&]() -> Vector { return train.responses; },
              [&](double mean, double sd) {
                train.responses = (train.responses.array() - mean) / sd;
                test.responses = (test.responses.array() - mean) / sd;
              });
  }
  return {std::move(train), std::move(test)};
}

inline std::pair<Dataset, Dataset> load_and_split(const std::string& path,
                                                  const SplitSpec& spec,
                                                  bool standardize = false) {
  return load_and_split(read_dataset_csv(path), spec, standardize);
}

}  // namespace sgpdmp
