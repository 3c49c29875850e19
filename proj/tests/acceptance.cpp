// End-to-end acceptance checks for the sampling library. Each check
// prints exactly one PASS/FAIL line; the process exit status is the
// number of failed checks.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "sgpdmp/diagnostics.hpp"
#include "sgpdmp/harness.hpp"
#include "sgpdmp/samplers.hpp"
#include "sgpdmp/targets.hpp"

using namespace sgpdmp;

namespace {

int n_failed = 0;

void report(int index, const std::string& name, bool ok,
            const std::string& detail) {
  std::printf("%s %2d %s (%s)\n", ok ? "PASS" : "FAIL", index, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++n_failed;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Shared large linear-regression problem (also used for the robustness
// check): analytic posterior available.
struct LinearProblem {
  std::shared_ptr<Dataset> data;
  FactorModel model;
  ControlVariate cv;
  Vector true_std;
};

LinearProblem make_linear_problem(std::uint64_t seed) {
  LinearProblem p;
  p.data = std::make_shared<Dataset>(
      synth_linear_regression(10000, 5, 1.0, seed).first);
  p.model = linear_regression_model(p.data, 1.0, 100.0);
  const auto post = linear_posterior_analytic(*p.data, 1.0, 100.0);
  p.true_std = post.covariance.diagonal().cwiseSqrt();
  AdamConfig adam;
  adam.alpha = 0.05;
  adam.iterations = 5000;
  adam.minibatch_fraction = 0.01;
  p.cv = fit_control_variate(p.model, adam, derive_seed(seed, 0xf17));
  return p;
}

// 1D unit-variance Gaussian as N heterogeneous quadratic factors so the
// subsampled gradient is genuinely noisy away from the anchor.
FactorModel heterogeneous_gaussian_1d(int n_factors) {
  FactorModel m;
  m.n_factors = n_factors;
  m.dim = 1;
  m.factor_grad = [n_factors](int j, const Vector& x) {
    const double a = (1.0 + (j % 2 == 0 ? 0.5 : -0.5)) / n_factors;
    return Vector(a * x);
  };
  m.factor_potential = [n_factors](int j, const Vector& x) {
    const double a = (1.0 + (j % 2 == 0 ? 0.5 : -0.5)) / n_factors;
    return 0.5 * a * x.squaredNorm();
  };
  return m;
}

FactorModel zero_gradient_model(int dim) {
  FactorModel m;
  m.n_factors = 10;
  m.dim = dim;
  m.factor_grad = [dim](int, const Vector&) { return Vector::Zero(dim); };
  return m;
}

// ---------------------------------------------------------------------

void check_gradient_unbiasedness() {
  const auto [data, truth] = synth_logistic(1000, 10, 0.4, 71);
  const auto model = logistic_model(std::make_shared<Dataset>(data), 10.0);
  Rng rng(72);
  Vector anchor(10);
  for (int i = 0; i < 10; ++i) anchor[i] = rng.normal();
  const ControlVariate cv = ControlVariate::at(model, anchor);
  double max_dev = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Vector x(10);
    for (int i = 0; i < 10; ++i) x[i] = rng.normal();
    Vector avg = Vector::Zero(10);
    for (int j = 0; j < model.n_factors; ++j) {
      const int batch[] = {j};
      avg += cv_gradient(model, cv, batch, x);
    }
    avg /= model.n_factors;
    max_dev = std::max(
        max_dev, (avg - full_gradient(model, x)).cwiseAbs().maxCoeff());
  }
  report(1, "subsampled gradient estimator is unbiased", max_dev <= 1e-10,
         "max deviation " + fmt(max_dev) + ", tol 1e-10");
}

void check_reflection_algebra() {
  Rng rng(81);
  double worst = 0.0;
  for (int rep = 0; rep < 10000; ++rep) {
    Vector v(5), g(5);
    for (int i = 0; i < 5; ++i) {
      v[i] = rng.normal();
      g[i] = rng.normal();
    }
    const Vector fv = bps_reflect(v, g);
    worst = std::max(worst, (bps_reflect(fv, g) - v).cwiseAbs().maxCoeff());
    worst = std::max(worst, std::abs(fv.norm() - v.norm()));
    worst = std::max(
        worst, std::abs(bps_rate(g, fv) - bps_rate(g, v) + v.dot(g)));
  }
  report(2, "reflection is a speed-preserving involution", worst <= 1e-12,
         "worst residual " + fmt(worst) + ", tol 1e-12");
}

void check_stationary_accuracy() {
  double err_zz = 0.0, err_bps = 0.0;
  for (int s = 0; s < 3; ++s) {
    const LinearProblem p = make_linear_problem(100 + s);
    for (const SamplerKind kind : {SamplerKind::SGZZ, SamplerKind::SGBPS}) {
      SamplerConfig cfg;
      cfg.epsilon = 0.01;
      cfg.horizon = 1000.0;
      cfg.batch_size = 1;
      cfg.seed = derive_seed(500 + s, static_cast<int>(kind));
      Rng init_rng(derive_seed(cfg.seed, 1));
      SamplerState st = make_initial_state(kind, p.cv.anchor, init_rng);
      const Trajectory traj = run_sampler(kind, p.model, p.cv, cfg, st);
      const auto [mean, sd] = path_moments(traj);
      const double e = std_error_metric(sd, p.true_std);
      (kind == SamplerKind::SGZZ ? err_zz : err_bps) += e / 3.0;
    }
  }
  report(3, "posterior spread recovered on a large linear model",
         err_zz < 0.05 && err_bps < 0.05,
         "mean rel std error: zz " + fmt(err_zz) + ", bps " + fmt(err_bps) +
             ", need < 0.05");
}

void check_weak_error_order() {
  const FactorModel model = heterogeneous_gaussian_1d(100);
  const ControlVariate cv = ControlVariate::at(model, Vector::Zero(1));

  // long-run reference spread from the exact event-time simulator
  const GaussianTarget target{Vector::Zero(1), Matrix::Identity(1, 1)};
  double ref_sd = 0.0;
  for (int s = 0; s < 3; ++s) {
    const Trajectory exact = exact_zigzag_gaussian(target, 3e5, 900 + s);
    ref_sd += path_moments(exact).second[0] / 3.0;
  }

  const std::vector<double> epsilons{0.4, 0.2, 0.1, 0.05};
  std::vector<double> log_eps, log_err;
  std::string detail = ", ref sd " + fmt(ref_sd);
  for (const double eps : epsilons) {
    double sd = 0.0;
    for (int s = 0; s < 3; ++s) {
      SamplerConfig cfg;
      cfg.epsilon = eps;
      cfg.horizon = 2e5;
      cfg.seed = derive_seed(910 + s, static_cast<int>(eps * 1000));
      Rng init_rng(derive_seed(cfg.seed, 1));
      SamplerState st =
          make_initial_state(SamplerKind::SGZZ, Vector::Zero(1), init_rng);
      const Trajectory traj =
          run_sampler(SamplerKind::SGZZ, model, cv, cfg, st);
      sd += path_moments(traj).second[0] / 3.0;
    }
    const double err = std::abs(sd - ref_sd);
    log_eps.push_back(std::log(eps));
    log_err.push_back(std::log(std::max(err, 1e-12)));
    detail += ", err(" + fmt(eps) + ") " + fmt(err);
  }
  const double slope = ls_slope(log_eps, log_err);
  report(4, "discretization bias shrinks at first order in the step size",
         slope >= 0.8, "log-log slope " + fmt(slope) + detail);
}

void check_robustness_asymmetry() {
  const LinearProblem p = make_linear_problem(100);

  auto sgld_diverges = [&](double h, int steps) {
    SamplerConfig cfg;
    cfg.epsilon = h;
    cfg.horizon = h * steps;
    cfg.seed = 1100;
    Rng init_rng(1101);
    SamplerState st =
        make_initial_state(SamplerKind::SGLD, p.cv.anchor, init_rng);
    const Trajectory traj =
        run_sampler(SamplerKind::SGLD, p.model, p.cv, cfg, st);
    if (traj.divergence_flag) return true;
    const Vector& last = traj.skeleton.back().x;
    return !last.allFinite() ||
           last.cwiseAbs().maxCoeff() >
               1e6 * (1.0 + p.cv.anchor.cwiseAbs().maxCoeff());
  };

  double threshold = 0.0;
  for (double h = 1e-4; h <= 1e5; h *= 2.0) {
    if (sgld_diverges(h, 500)) {
      threshold = h;
      break;
    }
  }
  if (threshold == 0.0) {
    report(5, "step-size robustness separates the samplers", false,
           "no sgld divergence threshold found up to h = 1e5");
    return;
  }
  const double eps = 10.0 * threshold;

  SamplerConfig big;
  big.epsilon = eps;
  big.horizon = eps * 1000;
  big.seed = 1102;
  Rng sgld_rng(1103);
  SamplerState sgld_state =
      make_initial_state(SamplerKind::SGLD, p.cv.anchor, sgld_rng);
  const Trajectory sgld_traj =
      run_sampler(SamplerKind::SGLD, p.model, p.cv, big, sgld_state);
  const bool sgld_flagged = sgld_traj.divergence_flag;

  big.horizon = eps * 200;
  bool pdmp_ok = true;
  std::string pdmp_note;
  for (const SamplerKind kind : {SamplerKind::SGZZ, SamplerKind::SGBPS}) {
    Rng init_rng(derive_seed(1104, static_cast<int>(kind)));
    SamplerState st = make_initial_state(kind, p.cv.anchor, init_rng);
    const Trajectory traj = run_sampler(kind, p.model, p.cv, big, st);
    pdmp_ok &= !traj.divergence_flag;
    const auto [mean, sd] = path_moments(traj);
    pdmp_ok &= mean.allFinite() && sd.allFinite();
    // per-segment displacement is bounded by speed * dt: exactly 1 for
    // the zig-zag, the largest refreshed component for bps. Checked as an
    // absolute excess to stay robust on segments with tiny dt.
    const double speed_cap = kind == SamplerKind::SGZZ ? 1.0 : 10.0;
    double max_excess = -1.0;
    for (std::size_t k = 0; k + 1 < traj.skeleton.size(); ++k) {
      const double dt = traj.skeleton[k + 1].t - traj.skeleton[k].t;
      if (dt <= 0) continue;
      const double dx = (traj.skeleton[k + 1].x - traj.skeleton[k].x)
                            .cwiseAbs()
                            .maxCoeff();
      max_excess = std::max(max_excess, dx - speed_cap * dt);
    }
    pdmp_ok &= max_excess <= 1e-9;
    pdmp_note += std::string(kind == SamplerKind::SGZZ ? " zz" : " bps") +
                 " excess " + fmt(max_excess);
  }
  report(5, "step-size robustness separates the samplers",
         sgld_flagged && pdmp_ok,
         "sgld threshold " + fmt(threshold) + ", at 10x: sgld " +
             (sgld_flagged ? "diverged" : "stable") + "," + pdmp_note);
}

void check_sticky_sparsity() {
  int szz_wins = 0;
  double min_zero_fraction = 1.0;
  bool ran = false;
  for (int s = 0; s < 3; ++s) {
    const auto [data, truth] = synth_logistic(100, 100, 0.4, 1200 + s, true);
    std::vector<int> zero_idx;
    for (int i = 0; i < 100; ++i)
      if (truth[i] == 0.0) zero_idx.push_back(i);
    if (zero_idx.empty()) continue;
    ran = true;
    const auto shared = std::make_shared<Dataset>(data);
    const FactorModel model = logistic_model(shared, 10.0);
    AdamConfig adam;
    adam.alpha = 0.05;
    adam.iterations = 3000;
    adam.minibatch_fraction = 0.1;
    const ControlVariate cv =
        fit_control_variate(model, adam, derive_seed(1300, s));

    const double horizon = 400.0;
    auto run = [&](SamplerKind kind) {
      SamplerConfig cfg;
      cfg.epsilon = 0.1;
      cfg.horizon = horizon;
      cfg.seed = derive_seed(1400 + s, static_cast<int>(kind));
      if (kind == SamplerKind::SGSZZ)
        cfg.kappa = sticky_kappa(
            Vector::Constant(100, 0.5),
            Vector::Constant(100, normal_density_at_zero(10.0)));
      Rng init_rng(derive_seed(cfg.seed, 1));
      SamplerState st = make_initial_state(kind, cv.anchor, init_rng);
      return run_sampler(kind, model, cv, cfg, st);
    };
    const Trajectory szz = run(SamplerKind::SGSZZ);
    const Trajectory zz = run(SamplerKind::SGZZ);

    double zero_time = 0.0;
    for (std::size_t k = 0; k + 1 < szz.skeleton.size(); ++k) {
      const double dt = szz.skeleton[k + 1].t - szz.skeleton[k].t;
      for (const int i : zero_idx)
        if (szz.skeleton[k].x[i] == 0.0 && szz.skeleton[k + 1].x[i] == 0.0)
          zero_time += dt;
    }
    const double zero_fraction =
        zero_time / (horizon * static_cast<double>(zero_idx.size()));
    min_zero_fraction = std::min(min_zero_fraction, zero_fraction);

    auto median_mse = [&](const Trajectory& traj) {
      const SampleMatrix samples =
          discretize_trajectory(traj, horizon / 499.0);
      const int k0 = samples.n_samples() / 2;  // discard the first half
      double mse = 0.0;
      for (int i = 0; i < 100; ++i) {
        std::vector<double> coord;
        for (int k = k0; k < samples.n_samples(); ++k)
          coord.push_back(samples.samples(k, i));
        const double dev = median(coord) - truth[i];
        mse += dev * dev / 100.0;
      }
      return mse;
    };
    if (median_mse(szz) < median_mse(zz)) ++szz_wins;
  }
  report(6, "sticky sampler enforces sparsity and improves point estimates",
         ran && min_zero_fraction > 0.10 && szz_wins >= 2,
         "min zero-time fraction " + fmt(min_zero_fraction) +
             " (need > 0.1), median-mse wins " + std::to_string(szz_wins) +
             "/3 (need >= 2)");
}

void check_ksd() {
  Rng rng(1500);
  SampleMatrix s;
  s.samples = Matrix(50, 2);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 2; ++j) s.samples(i, j) = rng.normal();
  const auto grad = [](const Vector& x) { return Vector(x); };
  const double lib = ksd(s, grad, 1.0, -0.5);
  const double ref = oracles::naive_ksd(s.samples, grad, 1.0, -0.5);
  const double dev = std::abs(lib - ref);

  int separated = 0;
  for (int rep = 0; rep < 10; ++rep) {
    SampleMatrix good, bad;
    good.samples = Matrix(100, 2);
    bad.samples = Matrix(100, 2);
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 2; ++j) {
        good.samples(i, j) = rng.normal();
        bad.samples(i, j) = 2.0 * rng.normal();
      }
    if (ksd(good, grad, 1.0, -0.5) < ksd(bad, grad, 1.0, -0.5)) ++separated;
  }
  report(7, "stein discrepancy matches a naive oracle and detects miscalibration",
         dev <= 1e-10 && separated >= 8,
         "oracle deviation " + fmt(dev) + ", separation " +
             std::to_string(separated) + "/10");
}

void check_event_law() {
  const FactorModel model = zero_gradient_model(2);
  const ControlVariate cv = ControlVariate::at(model, Vector::Zero(2));
  SamplerConfig cfg;
  cfg.epsilon = 0.5;
  cfg.horizon = 11000.0;
  cfg.refresh_rate = 1.0;
  cfg.seed = 1600;
  Rng init_rng(1601);
  SamplerState st =
      make_initial_state(SamplerKind::SGBPS, Vector::Zero(2), init_rng);
  const Trajectory traj =
      run_sampler(SamplerKind::SGBPS, model, cv, cfg, st);

  std::vector<double> gaps;
  double prev = 0.0;
  for (const Event& e : traj.events) {
    gaps.push_back(e.time - prev);
    prev = e.time;
  }
  const double expected = cfg.refresh_rate * cfg.horizon;
  const double count_dev =
      std::abs(static_cast<double>(traj.events.size()) - expected);
  const bool count_ok = count_dev <= 4.0 * std::sqrt(expected);
  double pval = 0.0;
  if (gaps.size() >= 10000) {
    std::vector<double> head(gaps.begin(), gaps.begin() + 10000);
    pval = ks_test_pvalue(head, [](double t) { return 1.0 - std::exp(-t); });
  }
  report(8, "constant-rate events follow the exponential law",
         gaps.size() >= 10000 && pval > 0.01 && count_ok,
         "gaps " + std::to_string(gaps.size()) + ", ks p " + fmt(pval) +
             ", count dev " + fmt(count_dev) + " vs 4*sqrt(mean) " +
             fmt(4.0 * std::sqrt(expected)));
}

void check_determinism() {
  const char* text = R"json({
    "model": {"kind": "linear_regression", "n": 200, "dim": 3},
    "samplers": [{"kind": "sg-zz"}, {"kind": "sgld"}, {"kind": "sg-bps"}],
    "step_sizes": [0.1, 0.05],
    "horizon": 10.0,
    "replicates": 2,
    "threads": 2,
    "seed": 1700,
    "adam": {"iterations": 300},
    "metrics": {"ksd": true}
  })json";
  const ExperimentConfig cfg = parse_config(std::string(text));
  namespace fs = std::filesystem;
  std::string first, second;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir =
        fs::temp_directory_path() / ("sgpdmp_accept_" + std::to_string(run));
    fs::remove_all(dir);
    write_outputs(run_experiment(cfg), dir.string());
    std::ifstream in(dir / "results.csv", std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    (run == 0 ? first : second) = ss.str();
    fs::remove_all(dir);
  }
  report(9, "repeated sweeps are byte-identical",
         !first.empty() && first == second,
         std::to_string(first.size()) + " bytes compared");
}

void check_bnn() {
  // gradient correctness at kink-free random points
  const Dataset full = synth_bnn_regression(700, 13, 1800);
  auto train = std::make_shared<Dataset>();
  train->covariates = full.covariates.topRows(500);
  train->responses = full.responses.head(500);
  Dataset test;
  test.covariates = full.covariates.bottomRows(200);
  test.responses = full.responses.tail(200);

  const int hidden = 50;
  const FactorModel model = bnn_model(train, 10.0, hidden);
  const BnnShape shape{13, hidden};
  Rng rng(1801);
  double worst_rel = 0.0;
  int checked = 0;
  while (checked < 10) {
    Vector x(model.dim);
    for (int i = 0; i < model.dim; ++i) x[i] = 0.5 * rng.normal();
    const int j = static_cast<int>(rng.uniform_index(model.n_factors));
    const Vector input = train->covariates.row(j);
    bool near_kink = false;
    for (int k = 0; k < hidden; ++k) {
      double pre = x[shape.b1_offset() + k];
      for (int i = 0; i < 13; ++i)
        pre += x[shape.w1_offset() + k * 13 + i] * input[i];
      near_kink |= std::abs(pre) < 1e-3;
    }
    if (near_kink) continue;
    ++checked;
    const Vector fd = oracles::finite_difference_grad(
        [&](const Vector& p) { return model.factor_potential(j, p); }, x,
        1e-5);
    const Vector g = model.factor_grad(j, x);
    worst_rel =
        std::max(worst_rel, (fd - g).norm() / std::max(1.0, g.norm()));
  }
  const bool grad_ok = worst_rel <= 1e-4;

  // desk-scale run: loss trend over the last half of the horizon
  AdamConfig adam;
  adam.alpha = 0.01;
  adam.iterations = 2000;
  adam.minibatch_fraction = 0.02;
  const ControlVariate cv = fit_control_variate(model, adam, 1802);
  SamplerConfig cfg;
  cfg.epsilon = 1e-4;
  cfg.horizon = 1e4 * cfg.epsilon;
  cfg.seed = 1803;
  Rng init_rng(1804);
  SamplerState st = make_initial_state(SamplerKind::SGZZ,
                                       Vector::Zero(model.dim), init_rng);
  const Trajectory traj = run_sampler(SamplerKind::SGZZ, model, cv, cfg, st);

  const SampleMatrix samples =
      discretize_trajectory(traj, cfg.horizon / 199.0);
  const auto predict = [&shape](const Vector& params, const Vector& row) {
    return bnn_predict(shape, params, row);
  };
  std::vector<double> losses;
  for (int k = samples.n_samples() / 2; k < samples.n_samples(); ++k)
    losses.push_back(
        predictive_loss(LossKind::MSE, test, samples.samples.row(k), predict));
  const std::size_t half = losses.size() / 2;
  const double first_half =
      median({losses.begin(), losses.begin() + half});
  const double second_half = median({losses.begin() + half, losses.end()});
  const bool trend_ok = second_half <= first_half;

  report(10, "network gradients are exact and its predictive loss settles",
         grad_ok && trend_ok,
         "worst fd rel err " + fmt(worst_rel) + " (tol 1e-4), median mse " +
             fmt(first_half) + " -> " + fmt(second_half));
}

}  // namespace

int main() {
  check_gradient_unbiasedness();
  check_reflection_algebra();
  check_stationary_accuracy();
  check_weak_error_order();
  check_robustness_asymmetry();
  check_sticky_sparsity();
  check_ksd();
  check_event_law();
  check_determinism();
  check_bnn();
  if (n_failed == 0)
    std::printf("all acceptance checks passed\n");
  else
    std::printf("%d acceptance check(s) failed\n", n_failed);
  return n_failed;
}
