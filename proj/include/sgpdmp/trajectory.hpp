#pragma once

// Piecewise-linear path skeleton with an event log. The path is exactly
// linear between consecutive skeleton points: a point is recorded at the
// initial state, at every velocity-changing event and at every interval
// boundary, so diagnostics can integrate the path in closed form.

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgpdmp {

enum class EventKind { Flip, Reflect, Refresh, Stick, Unstick };

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Flip: return "flip";
    case EventKind::Reflect: return "reflect";
    case EventKind::Refresh: return "refresh";
    case EventKind::Stick: return "stick";
    case EventKind::Unstick: return "unstick";
  }
  return "?";
}

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Flip;
  int coord = -1;   // flipped / stuck coordinate, -1 if not applicable
  int factor = -1;  // factor J driving the event, -1 if not applicable
};

struct SkeletonPoint {
  double t;
  Eigen::VectorXd x;
};

struct Trajectory {
  std::vector<SkeletonPoint> skeleton;
  std::vector<Event> events;
  bool divergence_flag = false;
  std::uint64_t gradient_evaluations = 0;  // factor-gradient oracle calls

  double duration() const {
    return skeleton.empty() ? 0.0 : skeleton.back().t - skeleton.front().t;
  }

  // Position at absolute time t by linear interpolation of the skeleton.
  Eigen::VectorXd at(double t) const {
    if (skeleton.empty()) throw std::runtime_error("Trajectory: empty path");
    if (t <= skeleton.front().t) return skeleton.front().x;
    if (t >= skeleton.back().t) return skeleton.back().x;
    // Binary search for the segment containing t.
    std::size_t lo = 0, hi = skeleton.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (skeleton[mid].t <= t) lo = mid; else hi = mid;
    }
    const auto& a = skeleton[lo];
    const auto& b = skeleton[hi];
    const double dt = b.t - a.t;
    if (dt <= 0) return b.x;
    const double w = (t - a.t) / dt;
    return a.x + w * (b.x - a.x);
  }
};

inline void write_skeleton_csv(const Trajectory& traj, std::ostream& out) {
  const int d =
      traj.skeleton.empty() ? 0 : static_cast<int>(traj.skeleton[0].x.size());
  out << "t";
  for (int i = 1; i <= d; ++i) out << ",x" << i;
  out << "\n";
  out << std::setprecision(17);
  for (const auto& p : traj.skeleton) {
    out << p.t;
    for (int i = 0; i < d; ++i) out << ',' << p.x[i];
    out << "\n";
  }
}

inline void write_events_csv(const Trajectory& traj, std::ostream& out) {
  out << "t,kind,coord,factor\n";
  out << std::setprecision(17);
  for (const auto& e : traj.events)
    out << e.time << ',' << event_kind_name(e.kind) << ',' << e.coord << ','
        << e.factor << "\n";
}

inline void write_trajectory_files(const Trajectory& traj,
                                   const std::string& skeleton_path,
                                   const std::string& events_path) {
  std::ofstream skel(skeleton_path);
  if (!skel) throw std::runtime_error("cannot write " + skeleton_path);
  write_skeleton_csv(traj, skel);
  std::ofstream ev(events_path);
  if (!ev) throw std::runtime_error("cannot write " + events_path);
  write_events_csv(traj, ev);
}

inline Trajectory read_skeleton_csv(std::istream& in) {
  Trajectory traj;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("skeleton CSV: empty input");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2)
      throw std::runtime_error("skeleton CSV: malformed row '" + line + "'");
    SkeletonPoint p;
    p.t = vals[0];
    p.x = Eigen::Map<Eigen::VectorXd>(vals.data() + 1,
                                      static_cast<long>(vals.size()) - 1);
    traj.skeleton.push_back(std::move(p));
  }
  return traj;
}

}  // namespace sgpdmp
