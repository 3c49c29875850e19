#pragma once

// Interval dynamics of the stochastic-gradient PDMP samplers (SG-ZZ,
// SG-BPS, SG-SZZ), the SGLD baseline, and an exact Zig-Zag simulator for
// Gaussian targets used as a validation oracle.
//
// Each SG-PDMP interval advances exactly epsilon in time. Within the
// interval a factor J is drawn uniformly, the event rates are held
// constant at their value for the current state, and competing
// exponential clocks decide the next event. With single_event_mode set,
// at most one event is consumed per interval; otherwise the clocks are
// redrawn (with a fresh factor) after every event until the interval
// budget is exhausted.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sgpdmp/gradient_model.hpp"
#include "sgpdmp/rng.hpp"
#include "sgpdmp/trajectory.hpp"

namespace sgpdmp {

enum class SamplerKind { SGLD, SGZZ, SGBPS, SGSZZ };

inline const char* sampler_kind_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::SGLD: return "sgld";
    case SamplerKind::SGZZ: return "sg-zz";
    case SamplerKind::SGBPS: return "sg-bps";
    case SamplerKind::SGSZZ: return "sg-szz";
  }
  return "?";
}

struct SamplerState {
  double t = 0.0;
  Vector x;
  Vector v;
  Vector frozen_velocity;     // v^c, SG-SZZ only
  std::vector<char> active;   // A, SG-SZZ only; empty means all active

  bool is_active(int i) const { return active.empty() || active[i]; }
};

struct SamplerConfig {
  double epsilon = 0.0;       // step size
  double horizon = 0.0;       // total time T; intervals = horizon / epsilon
  double refresh_rate = 1.0;  // lambda_ref, SG-BPS only
  Vector kappa;               // unstick rates, SG-SZZ only
  int batch_size = 1;
  bool single_event_mode = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon > 0)) throw std::invalid_argument("SamplerConfig: epsilon <= 0");
    if (!(horizon > 0)) throw std::invalid_argument("SamplerConfig: horizon <= 0");
    if (refresh_rate < 0)
      throw std::invalid_argument("SamplerConfig: refresh_rate < 0");
    if (batch_size < 1)
      throw std::invalid_argument("SamplerConfig: batch_size < 1");
    for (long i = 0; i < kappa.size(); ++i)
      if (!(kappa[i] > 0))
        throw std::invalid_argument("SamplerConfig: kappa must be positive");
  }
};

// ----- event algebra -----

inline Vector zz_flip(Vector v, int i) {
  if (i < 0 || i >= v.size())
    throw std::invalid_argument("zz_flip: coordinate out of range");
  v[i] = -v[i];
  return v;
}

inline double zz_rate(int i, const Vector& g, const Vector& v) {
  return std::max(v[i] * g[i], 0.0);
}

inline double bps_rate(const Vector& g, const Vector& v) {
  return std::max(v.dot(g), 0.0);
}

struct DegenerateReflection : std::runtime_error {
  DegenerateReflection() : std::runtime_error("bps_reflect: zero gradient") {}
};

inline Vector bps_reflect(const Vector& v, const Vector& g) {
  const double g2 = g.squaredNorm();
  if (g2 == 0.0) throw DegenerateReflection();
  return v - (2.0 * v.dot(g) / g2) * g;
}

inline Vector sgld_step(const Vector& x, const Vector& grad_est, double h,
                        Rng& rng) {
  if (!(h > 0)) throw std::invalid_argument("sgld_step: h <= 0");
  Vector xi(x.size());
  for (long i = 0; i < xi.size(); ++i) xi[i] = rng.normal();
  return x - 0.5 * h * grad_est + std::sqrt(h) * xi;
}

// ----- interval kernels -----

namespace detail {

inline void draw_batch(std::vector<int>& batch, int n_factors, int batch_size,
                       Rng& rng) {
  batch.resize(batch_size);
  for (int k = 0; k < batch_size; ++k)
    batch[k] = static_cast<int>(rng.uniform_index(n_factors));
}

inline void record_kink(Trajectory& traj, const SamplerState& s) {
  traj.skeleton.push_back({s.t, s.x});
}

}  // namespace detail

// One SG-ZZ interval of length cfg.epsilon (flip events only).
inline void sgzz_interval(SamplerState& s, const FactorModel& model,
                          const ControlVariate& cv, const SamplerConfig& cfg,
                          Rng& rng, Trajectory& traj) {
  const int d = model.dim;
  double budget = cfg.epsilon;
  std::vector<int> batch;
  while (true) {
    detail::draw_batch(batch, model.n_factors, cfg.batch_size, rng);
    const Vector g = cv_gradient(model, cv, batch, s.x);
    traj.gradient_evaluations += 2ULL * cfg.batch_size;
    double tau = std::numeric_limits<double>::infinity();
    int istar = -1;
    for (int i = 0; i < d; ++i) {
      const double ti = rng.exponential(zz_rate(i, g, s.v));
      if (ti < tau) { tau = ti; istar = i; }
    }
    if (tau >= budget) {
      s.x += s.v * budget;
      s.t += budget;
      return;
    }
    s.x += s.v * tau;
    s.t += tau;
    budget -= tau;
    s.v[istar] = -s.v[istar];
    traj.events.push_back({s.t, EventKind::Flip, istar,
                           cfg.batch_size == 1 ? batch[0] : -1});
    detail::record_kink(traj, s);
    if (cfg.single_event_mode) {
      s.x += s.v * budget;
      s.t += budget;
      return;
    }
  }
}

// One SG-BPS interval: reflection clock against refresh clock.
inline void sgbps_interval(SamplerState& s, const FactorModel& model,
                           const ControlVariate& cv, const SamplerConfig& cfg,
                           Rng& rng, Trajectory& traj) {
  double budget = cfg.epsilon;
  std::vector<int> batch;
  while (true) {
    detail::draw_batch(batch, model.n_factors, cfg.batch_size, rng);
    const Vector g = cv_gradient(model, cv, batch, s.x);
    traj.gradient_evaluations += 2ULL * cfg.batch_size;
    const double tau_reflect = rng.exponential(bps_rate(g, s.v));
    const double tau_refresh = rng.exponential(cfg.refresh_rate);
    const double tau = std::min(tau_reflect, tau_refresh);
    if (tau >= budget) {
      s.x += s.v * budget;
      s.t += budget;
      return;
    }
    s.x += s.v * tau;
    s.t += tau;
    budget -= tau;
    if (tau_reflect <= tau_refresh) {
      if (g.squaredNorm() > 0.0) {  // rate > 0 implies g != 0
        s.v = bps_reflect(s.v, g);
        traj.events.push_back({s.t, EventKind::Reflect, -1,
                               cfg.batch_size == 1 ? batch[0] : -1});
      }
    } else {
      for (long i = 0; i < s.v.size(); ++i) s.v[i] = rng.normal();
      traj.events.push_back({s.t, EventKind::Refresh, -1, -1});
    }
    detail::record_kink(traj, s);
    if (cfg.single_event_mode) {
      s.x += s.v * budget;
      s.t += budget;
      return;
    }
  }
}

// One SG-SZZ interval: flip, stick (exact zero-crossing) and unstick
// clocks compete within the budget. Sticking sets the coordinate to
// exact 0.0, zeroes its velocity and freezes the pre-stick velocity;
// unsticking restores it.
inline void sgszz_interval(SamplerState& s, const FactorModel& model,
                           const ControlVariate& cv, const SamplerConfig& cfg,
                           Rng& rng, Trajectory& traj) {
  const int d = model.dim;
  if (static_cast<int>(s.active.size()) != d || s.frozen_velocity.size() != d)
    throw std::invalid_argument("sgszz_interval: state missing sticky fields");
  if (cfg.kappa.size() != d)
    throw std::invalid_argument("sgszz_interval: kappa has wrong length");
  const double inf = std::numeric_limits<double>::infinity();
  double budget = cfg.epsilon;
  std::vector<int> batch;
  while (true) {
    bool any_active = false;
    for (int i = 0; i < d; ++i) any_active |= static_cast<bool>(s.active[i]);

    double tau_flip = inf;
    int i_flip = -1;
    if (any_active) {
      detail::draw_batch(batch, model.n_factors, cfg.batch_size, rng);
      const Vector g = cv_gradient(model, cv, batch, s.x);
      traj.gradient_evaluations += 2ULL * cfg.batch_size;
      for (int i = 0; i < d; ++i) {
        if (!s.active[i]) continue;
        const double ti = rng.exponential(zz_rate(i, g, s.v));
        if (ti < tau_flip) { tau_flip = ti; i_flip = i; }
      }
    }

    double tau_stick = inf;
    int i_stick = -1;
    for (int i = 0; i < d; ++i) {
      if (!s.active[i]) continue;
      if (s.x[i] != 0.0 && s.v[i] != 0.0 && s.x[i] * s.v[i] < 0.0) {
        const double ti = -s.x[i] / s.v[i];
        if (ti < tau_stick) { tau_stick = ti; i_stick = i; }
      }
    }

    double tau_unstick = inf;
    int i_unstick = -1;
    for (int i = 0; i < d; ++i) {
      if (s.active[i]) continue;
      const double ti = rng.exponential(cfg.kappa[i]);
      if (ti < tau_unstick) { tau_unstick = ti; i_unstick = i; }
    }

    if (tau_flip < budget && tau_flip <= tau_stick && tau_flip <= tau_unstick) {
      s.x += s.v * tau_flip;
      s.t += tau_flip;
      budget -= tau_flip;
      s.v[i_flip] = -s.v[i_flip];
      traj.events.push_back({s.t, EventKind::Flip, i_flip,
                             cfg.batch_size == 1 ? batch[0] : -1});
    } else if (tau_stick < budget && tau_stick <= tau_unstick) {
      s.x += s.v * tau_stick;
      s.t += tau_stick;
      budget -= tau_stick;
      s.x[i_stick] = 0.0;  // exact landing
      s.frozen_velocity[i_stick] = s.v[i_stick];
      s.v[i_stick] = 0.0;
      s.active[i_stick] = 0;
      traj.events.push_back({s.t, EventKind::Stick, i_stick, -1});
    } else if (tau_unstick < budget) {
      s.x += s.v * tau_unstick;
      s.t += tau_unstick;
      budget -= tau_unstick;
      s.v[i_unstick] = s.frozen_velocity[i_unstick];
      s.active[i_unstick] = 1;
      traj.events.push_back({s.t, EventKind::Unstick, i_unstick, -1});
    } else {
      s.x += s.v * budget;
      s.t += budget;
      return;
    }
    detail::record_kink(traj, s);
    if (cfg.single_event_mode) {
      s.x += s.v * budget;
      s.t += budget;
      return;
    }
  }
}

// ----- orchestration -----

inline SamplerState make_initial_state(SamplerKind kind, const Vector& x0,
                                       Rng& rng) {
  SamplerState s;
  s.x = x0;
  const long d = x0.size();
  switch (kind) {
    case SamplerKind::SGLD:
      s.v = Vector::Zero(d);
      break;
    case SamplerKind::SGZZ:
      s.v = Vector(d);
      for (long i = 0; i < d; ++i) s.v[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      break;
    case SamplerKind::SGBPS:
      s.v = Vector(d);
      for (long i = 0; i < d; ++i) s.v[i] = rng.normal();
      break;
    case SamplerKind::SGSZZ:
      s.v = Vector(d);
      for (long i = 0; i < d; ++i) s.v[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      s.frozen_velocity = s.v;
      s.active.assign(d, 1);
      break;
  }
  return s;
}

// Runs interval steps (or SGLD steps) until the horizon is reached.
// Deterministic given cfg.seed. SGLD divergence yields a flagged,
// truncated trajectory instead of an exception.
inline Trajectory run_sampler(SamplerKind kind, const FactorModel& model,
                              const ControlVariate& cv, SamplerConfig cfg,
                              SamplerState state) {
  cfg.validate();
  model.check_point(state.x);
  Rng rng(cfg.seed);
  Trajectory traj;
  traj.skeleton.push_back({state.t, state.x});
  const double t_end = state.t + cfg.horizon;
  std::vector<int> batch;
  while (state.t < t_end - 0.5 * cfg.epsilon) {
    switch (kind) {
      case SamplerKind::SGLD: {
        detail::draw_batch(batch, model.n_factors, cfg.batch_size, rng);
        const Vector g = cv_gradient(model, cv, batch, state.x);
        traj.gradient_evaluations += 2ULL * cfg.batch_size;
        state.x = sgld_step(state.x, g, cfg.epsilon, rng);
        state.t += cfg.epsilon;
        if (!state.x.allFinite()) {
          traj.divergence_flag = true;
          return traj;
        }
        break;
      }
      case SamplerKind::SGZZ:
        sgzz_interval(state, model, cv, cfg, rng, traj);
        break;
      case SamplerKind::SGBPS:
        sgbps_interval(state, model, cv, cfg, rng, traj);
        break;
      case SamplerKind::SGSZZ:
        sgszz_interval(state, model, cv, cfg, rng, traj);
        break;
    }
    traj.skeleton.push_back({state.t, state.x});
  }
  return traj;
}

// ----- exact Zig-Zag on a Gaussian target (validation oracle) -----

// First arrival time of an inhomogeneous Poisson process with rate
// max(a + b t, 0), by closed-form inversion of the integrated hazard
// against an Exp(1) draw e.
inline double linear_rate_first_event(double a, double b, double e) {
  const double inf = std::numeric_limits<double>::infinity();
  if (b == 0.0) return a > 0.0 ? e / a : inf;
  if (b > 0.0) {
    if (a >= 0.0) return (-a + std::sqrt(a * a + 2.0 * b * e)) / b;
    // rate is zero until -a/b, then grows linearly
    return -a / b + std::sqrt(2.0 * e / b);
  }
  // b < 0: the rate hits zero at -a/b and stays zero afterwards
  if (a <= 0.0) return inf;
  const double max_hazard = -a * a / (2.0 * b);
  if (e >= max_hazard) return inf;
  return (-a + std::sqrt(a * a + 2.0 * b * e)) / b;
}

struct GaussianTarget {
  Vector mean;
  Eigen::MatrixXd precision;
};

// Non-subsampled Zig-Zag with exact event times for a Gaussian target:
// coordinate rates are linear in t along each segment.
inline Trajectory exact_zigzag_gaussian(const GaussianTarget& target,
                                        double horizon, std::uint64_t seed,
                                        const Vector* init = nullptr) {
  const long d = target.mean.size();
  if (target.precision.rows() != d || target.precision.cols() != d)
    throw std::invalid_argument("exact_zigzag_gaussian: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(target.precision);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(
        "exact_zigzag_gaussian: precision not positive definite");
  Rng rng(seed);
  Vector x = init ? *init : target.mean;
  Vector v(d);
  for (long i = 0; i < d; ++i) v[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;

  Vector pr = target.precision * (x - target.mean);  // P (x - mu)
  Vector pv = target.precision * v;                  // P v

  Trajectory traj;
  double t = 0.0;
  traj.skeleton.push_back({t, x});
  while (t < horizon) {
    double tau = std::numeric_limits<double>::infinity();
    int istar = -1;
    for (long i = 0; i < d; ++i) {
      const double a = v[i] * pr[i];
      const double b = v[i] * pv[i];
      const double e = rng.exponential(1.0);
      const double ti = linear_rate_first_event(a, b, e);
      if (ti < tau) { tau = ti; istar = static_cast<int>(i); }
    }
    if (t + tau >= horizon) {
      const double dt = horizon - t;
      x += v * dt;
      t = horizon;
      traj.skeleton.push_back({t, x});
      break;
    }
    x += v * tau;
    pr += pv * tau;
    t += tau;
    pv -= 2.0 * v[istar] * target.precision.col(istar);
    v[istar] = -v[istar];
    traj.events.push_back({t, EventKind::Flip, istar, -1});
    traj.skeleton.push_back({t, x});
  }
  return traj;
}

}  // namespace sgpdmp
