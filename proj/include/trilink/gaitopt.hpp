#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include "trilink/compliance.hpp"
#include "trilink/connection.hpp"
#include "trilink/errors.hpp"

// Gait optimization: pick the closed shape-space path that maximizes the
// enclosed height-function integral inside the joint-limit box, then invert
// the body dynamics to find the motor command that realizes it, and express
// that command as a truncated Fourier series.

namespace trilink {

struct JointLimits {
  double limit = 37.5 * M_PI / 180.0; // [rad] per joint

  void validate() const {
    if (!(limit > 0.0)) throw Error("joint limit must be positive");
  }
};

enum class HeightRow { x = 0, y = 1, theta = 2 };

namespace detail {

/// Closed zero-level loops of a scalar function sampled on a square lattice,
/// by marching squares with linear edge interpolation. Saddle cells are
/// disambiguated by the cell-center average. Loops are returned unoriented.
struct ContourLattice {
  int n = 0;               // samples per side
  double origin = 0.0;     // coordinate of sample 0
  double spacing = 0.0;
  std::vector<double> values; // row-major in i (x index)

  double at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * n + j];
  }
  double coord(int k) const { return origin + k * spacing; }
};

inline std::vector<std::vector<Eigen::Vector2d>> extract_zero_loops(
    const ContourLattice& lat) {
  // Crossing points live on lattice edges; key = (horizontal?, i, j).
  using EdgeKey = std::tuple<int, int, int>;
  struct Link {
    EdgeKey a, b;
    Eigen::Vector2d pa, pb;
    bool used = false;
  };
  std::vector<Link> links;
  std::map<EdgeKey, std::vector<int>> incident;

  auto cross_h = [&](int i, int j) { // on edge (i,j)-(i+1,j)
    const double v0 = lat.at(i, j), v1 = lat.at(i + 1, j);
    const double t = v0 / (v0 - v1);
    return Eigen::Vector2d{lat.coord(i) + t * lat.spacing, lat.coord(j)};
  };
  auto cross_v = [&](int i, int j) { // on edge (i,j)-(i,j+1)
    const double v0 = lat.at(i, j), v1 = lat.at(i, j + 1);
    const double t = v0 / (v0 - v1);
    return Eigen::Vector2d{lat.coord(i), lat.coord(j) + t * lat.spacing};
  };
  auto add_link = [&](EdgeKey a, const Eigen::Vector2d& pa, EdgeKey b,
                      const Eigen::Vector2d& pb) {
    const int id = static_cast<int>(links.size());
    links.push_back({a, b, pa, pb, false});
    incident[a].push_back(id);
    incident[b].push_back(id);
  };

  for (int i = 0; i + 1 < lat.n; ++i) {
    for (int j = 0; j + 1 < lat.n; ++j) {
      const bool b00 = lat.at(i, j) > 0.0;
      const bool b10 = lat.at(i + 1, j) > 0.0;
      const bool b01 = lat.at(i, j + 1) > 0.0;
      const bool b11 = lat.at(i + 1, j + 1) > 0.0;
      const int code = (b00 ? 1 : 0) | (b10 ? 2 : 0) | (b11 ? 4 : 0) |
                       (b01 ? 8 : 0);
      if (code == 0 || code == 15) continue;

      const EdgeKey bottom{0, i, j}, top{0, i, j + 1};
      const EdgeKey left{1, i, j}, right{1, i + 1, j};

      switch (code) {
        case 1: case 14:
          add_link(bottom, cross_h(i, j), left, cross_v(i, j));
          break;
        case 2: case 13:
          add_link(bottom, cross_h(i, j), right, cross_v(i + 1, j));
          break;
        case 4: case 11:
          add_link(top, cross_h(i, j + 1), right, cross_v(i + 1, j));
          break;
        case 8: case 7:
          add_link(top, cross_h(i, j + 1), left, cross_v(i, j));
          break;
        case 3: case 12:
          add_link(left, cross_v(i, j), right, cross_v(i + 1, j));
          break;
        case 6: case 9:
          add_link(bottom, cross_h(i, j), top, cross_h(i, j + 1));
          break;
        case 5: case 10: {
          const double center = 0.25 * (lat.at(i, j) + lat.at(i + 1, j) +
                                        lat.at(i, j + 1) + lat.at(i + 1, j + 1));
          const bool center_pos = center > 0.0;
          const bool diag_00 = (code == 5); // corners 00 and 11 positive
          if (diag_00 == center_pos) {
            add_link(bottom, cross_h(i, j), right, cross_v(i + 1, j));
            add_link(top, cross_h(i, j + 1), left, cross_v(i, j));
          } else {
            add_link(bottom, cross_h(i, j), left, cross_v(i, j));
            add_link(top, cross_h(i, j + 1), right, cross_v(i + 1, j));
          }
          break;
        }
        default:
          break;
      }
    }
  }

  std::vector<std::vector<Eigen::Vector2d>> loops;
  for (std::size_t start = 0; start < links.size(); ++start) {
    if (links[start].used) continue;
    std::vector<Eigen::Vector2d> loop;
    links[start].used = true;
    loop.push_back(links[start].pa);
    loop.push_back(links[start].pb);
    EdgeKey cursor = links[start].b;
    const EdgeKey home = links[start].a;
    while (cursor != home) {
      int next = -1;
      for (int id : incident[cursor])
        if (!links[id].used) {
          next = id;
          break;
        }
      if (next < 0) break; // open chain: should not happen on a closed field
      links[next].used = true;
      if (links[next].a == cursor) {
        loop.push_back(links[next].pb);
        cursor = links[next].b;
      } else {
        loop.push_back(links[next].pa);
        cursor = links[next].a;
      }
    }
    if (cursor == home && loop.size() >= 4) {
      loop.back() = loop.front(); // weld the closure exactly
      loops.push_back(std::move(loop));
    }
  }
  return loops;
}

}  // namespace detail

struct OptimalGaitOptions {
  int refine = 4;     // contour lattice refinement relative to the grid
  int samples = 400;  // resampled path points (edges)
  double period = 10.0;
};

/// Extract the closed path maximizing the enclosed integral of one height
/// function row, truncated to the joint-limit box. The boundary of the
/// positive region is traced at sub-grid resolution on the level set of
/// min(H_row, distance to box), so contours exiting the box follow its
/// edges with corners rounded at lattice resolution. The result is oriented
/// counterclockwise, resampled to uniform arc length, and walked at constant
/// speed over the period.
inline GaitPath optimal_emergent_gait(const HeightFunction& hf,
                                      const JointLimits& limits,
                                      HeightRow row,
                                      const OptimalGaitOptions& opts = {}) {
  limits.validate();
  if (limits.limit > hf.grid.limit + 1e-12)
    throw Error("height function grid does not cover the joint-limit box");
  const int row_idx = static_cast<int>(row);
  const double box = limits.limit;

  bool any_positive = false;
  for (const auto& v : hf.nodes)
    if (v[row_idx] > 0.0) any_positive = true;
  if (!any_positive)
    throw NoPositiveRegionError("height function row has no positive region");

  detail::ContourLattice lat;
  const int fine_in = opts.refine * (hf.grid.resolution - 1) + 1;
  lat.spacing = 2.0 * box / (fine_in - 1);
  lat.n = fine_in + 2;
  lat.origin = -box - lat.spacing;
  lat.values.resize(static_cast<std::size_t>(lat.n) * lat.n);
  for (int i = 0; i < lat.n; ++i) {
    for (int j = 0; j < lat.n; ++j) {
      const double x = lat.coord(i), y = lat.coord(j);
      const double hval = hf.interpolate({std::clamp(x, -box, box),
                                          std::clamp(y, -box, box)})[row_idx];
      lat.values[static_cast<std::size_t>(i) * lat.n + j] =
          std::min({hval, box - std::abs(x), box - std::abs(y)});
    }
  }

  const auto loops = detail::extract_zero_loops(lat);
  if (loops.empty())
    throw NoPositiveRegionError("no closed positive-region boundary found");

  GaitPath best;
  double best_value = 0.0;
  double best_centroid = 0.0;
  for (const auto& loop : loops) {
    GaitPath p;
    p.period = opts.period;
    p.points = loop;
    if (p.signed_area() < 0.0) p = p.reversed();
    double value = 0.0;
    try {
      const Displacement d = displacement_surface_integral(p, hf);
      value = row == HeightRow::x ? d.dx : (row == HeightRow::y ? d.dy
                                                                : d.dtheta);
    } catch (const SelfIntersectingPathError&) {
      continue;
    }
    if (value <= 0.0) continue;
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k + 1 < p.points.size(); ++k)
      centroid += p.points[k];
    centroid /= static_cast<double>(p.points.size() - 1);
    const bool better =
        value > best_value * (1.0 + 1e-12) ||
        (std::abs(value - best_value) <= 1e-12 * std::max(1.0, best_value) &&
         centroid.norm() < best_centroid);
    if (best.points.empty() || better) {
      best = p;
      best_value = value;
      best_centroid = centroid.norm();
    }
  }
  if (best.points.empty())
    throw NoPositiveRegionError("no loop encloses positive displacement");

  GaitPath out = best.resampled(opts.samples);
  if (out.signed_area() < 0.0) out = out.reversed();
  out.period = opts.period;
  return out;
}

// ---------------------------------------------------------------------------
// Inverse dynamics

struct InverseDynamicsOptions {
  double tol = 1e-9;
  bool strict = true; // throw on unreachable torques instead of clamping
  int max_regime_iters = 10;
};

struct InverseDynamicsResult {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> psi;
  std::vector<std::array<JointRegime, 2>> regimes;
  int clamped_samples = 0; // best-effort samples when not strict
};

namespace detail {

/// Invert the deadband-boundary maps hi(psi), lo(psi) of the cable scheme.
/// Both are continuous, piecewise linear, and non-decreasing in psi.
inline bool invert_boundary(const CableScheme& s, bool high, double target,
                            double& psi_out) {
  const double lam = s.l_0 / s.r_p;
  const double g = s.gamma();
  const double A = s.A_psi;
  auto boundary = [&](double psi) {
    const Deadband db = deadband(psi, s);
    return high ? db.hi : db.lo;
  };
  const double b_min = boundary(-A), b_max = boundary(A);
  if (target < b_min - 1e-12 || target > b_max + 1e-12) return false;
  if (high) {
    // hi = psi for psi >= gamma, else psi (1 - lam) + lam gamma
    if (target >= g) {
      psi_out = target;
    } else if (std::abs(1.0 - lam) > 1e-12) {
      psi_out = (target - lam * g) / (1.0 - lam);
    } else {
      psi_out = std::min(A, g); // degenerate flat branch
    }
  } else {
    if (target <= -g) {
      psi_out = target;
    } else if (std::abs(1.0 - lam) > 1e-12) {
      psi_out = (target + lam * g) / (1.0 - lam);
    } else {
      psi_out = std::max(-A, -g);
    }
  }
  psi_out = std::clamp(psi_out, -A, A);
  return std::abs(boundary(psi_out) - target) < 1e-9;
}

}  // namespace detail

/// Commanded angles that make the emergent shape follow a closed path.
/// For each sample the joint rates come from path differences, the body
/// velocity from the wrench balance, and the command from inverting the
/// torque balance in the consistent stiffness regime.
inline InverseDynamicsResult inverse_dynamics(
    const GaitPath& path, const ComplianceSpec& spec, const Medium& medium,
    const SwimmerGeometry& geom, const InverseDynamicsOptions& opts = {}) {
  const std::size_t m = path.num_edges();
  if (m < 3) throw Error("path too short for inverse dynamics");
  const double dt = path.period / static_cast<double>(m);

  InverseDynamicsResult out;
  out.t.reserve(m);
  out.psi.reserve(m);
  out.regimes.reserve(m);

  for (std::size_t k = 0; k < m; ++k) {
    const double t = k * dt;
    const Eigen::Vector2d alpha = path.points[k];
    const Eigen::Vector2d next = path.points[(k + 1) % m];
    const Eigen::Vector2d prev = path.points[(k + m - 1) % m];
    const Eigen::Vector2d alphadot = (next - prev) / (2.0 * dt);

    const SegmentKinematics kin =
        compute_segment_kinematics(ShapeState::from_vec(alpha), geom);
    const Eigen::Vector3d xi =
        solve_body_velocity(kin, alphadot, medium, opts.tol);
    const Eigen::Vector2d tau_env = joint_torques(kin, xi, alphadot, medium);
    const Eigen::Vector2d tau_spring = -tau_env; // required elastic torque

    Eigen::Vector2d psi;
    std::array<JointRegime, 2> regimes{JointRegime::Locked,
                                       JointRegime::Locked};
    for (int i = 0; i < 2; ++i) {
      if (std::holds_alternative<Rigid>(spec)) {
        psi[i] = alpha[i];
        regimes[i] = JointRegime::Locked;
        continue;
      }
      if (const auto* ck = std::get_if<ConstantK>(&spec)) {
        const double kk = i == 0 ? ck->k1 : ck->k2;
        psi[i] = alpha[i] + tau_spring[i] / kk;
        regimes[i] = JointRegime::Spring;
        continue;
      }
      const auto& cs = std::get<CableScheme>(spec);
      if (cs.rigid_joint()) {
        psi[i] = alpha[i];
        regimes[i] = JointRegime::Locked;
        continue;
      }

      const double tau_cable = tau_spring[i] + cs.k_skin * alpha[i];
      JointRegime assumed = std::abs(tau_cable) < 1e-14
                                ? JointRegime::Inside
                                : (tau_cable < 0.0 ? JointRegime::HighEngaged
                                                   : JointRegime::LowEngaged);
      bool settled = false;
      for (int it = 0; it < opts.max_regime_iters && !settled; ++it) {
        double candidate;
        bool feasible = true;
        if (assumed == JointRegime::Inside) {
          candidate = std::clamp(alpha[i], -cs.A_psi, cs.A_psi);
        } else {
          const double target = alpha[i] + tau_cable / cs.k_cable;
          feasible = detail::invert_boundary(
              cs, assumed == JointRegime::HighEngaged, target, candidate);
        }
        if (!feasible) {
          if (opts.strict) throw TorqueExceedsCapacityError(t, i + 1);
          // best effort: saturate the command toward the required torque
          const double target = alpha[i] + tau_cable / cs.k_cable;
          const Deadband lo_db = deadband(-cs.A_psi, cs);
          const Deadband hi_db = deadband(cs.A_psi, cs);
          const double reach =
              assumed == JointRegime::HighEngaged
                  ? (target < lo_db.hi ? -cs.A_psi : cs.A_psi)
                  : (target > hi_db.lo ? cs.A_psi : -cs.A_psi);
          candidate = reach;
          ++out.clamped_samples;
          psi[i] = candidate;
          regimes[i] = assumed;
          settled = true;
          break;
        }
        const JointRegime implied =
            classify_cable_regime(alpha[i], candidate, cs);
        if (implied == assumed ||
            (assumed == JointRegime::Inside &&
             std::abs(tau_cable) < 1e-14)) {
          psi[i] = candidate;
          regimes[i] = assumed;
          settled = true;
        } else {
          assumed = implied;
        }
      }
      if (!settled) throw RegimeNonConvergenceError(t);
    }
    out.t.push_back(t);
    out.psi.push_back(psi);
    out.regimes.push_back(regimes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fourier fitting

/// Least-squares Fourier coefficients (discrete projection on the uniform
/// sample grid) for samples covering exactly one period, without the
/// duplicated endpoint. No constant term is fitted: gaits are zero-mean.
inline FourierGait fit_fourier(const std::vector<Eigen::Vector2d>& samples,
                               double period, int order = FourierGait::kOrder) {
  if (samples.size() < 2 * FourierGait::kOrder + 1)
    throw Error("too few samples for a Fourier fit");
  order = std::clamp(order, 1, FourierGait::kOrder);
  const int m = static_cast<int>(samples.size());
  FourierGait g;
  g.period = period;
  for (int p = 1; p <= order; ++p) {
    Eigen::Vector2d ac = Eigen::Vector2d::Zero(), bc = Eigen::Vector2d::Zero();
    for (int k = 0; k < m; ++k) {
      const double phase = 2.0 * M_PI * p * k / m;
      ac += samples[k] * std::cos(phase);
      bc += samples[k] * std::sin(phase);
    }
    for (int i = 0; i < 2; ++i) {
      g.a[i][p - 1] = 2.0 * ac[i] / m;
      g.b[i][p - 1] = 2.0 * bc[i] / m;
    }
  }
  return g;
}

/// RMS reconstruction error of a Fourier gait against its sample set.
inline double fourier_fit_rms(const FourierGait& g,
                              const std::vector<Eigen::Vector2d>& samples) {
  const int m = static_cast<int>(samples.size());
  double sq = 0.0;
  for (int k = 0; k < m; ++k) {
    const Eigen::Vector2d rec = eval_gait(g, g.period * k / m).psi;
    sq += (rec - samples[k]).squaredNorm();
  }
  return std::sqrt(sq / (2.0 * m));
}

// ---------------------------------------------------------------------------
// Full pipeline

struct OptimizeOptions {
  GridSpec grid{};
  int threads = 0;
  double tol = 1e-9;
  OptimalGaitOptions contour{};
  SimOptions verify_sim{};
  bool strict_inverse = false; // clamp unreachable torques instead of failing
};

struct OptimizationResult {
  GaitPath optimal_emergent;
  Displacement predicted; // surface integral over the optimal path
  FourierGait suggested;
  double fit_residual_rms = 0.0; // [rad]
  std::vector<std::array<JointRegime, 2>> regime_trace;
  int clamped_samples = 0;
  DisplacementSummary simulated; // verification forward run
  EmergentTrajectory verification;
};

/// Height-function pipeline: build the connection field, extract the optimal
/// emergent path for the selected row, invert the dynamics to a command,
/// fit the Fourier parametrization, and verify with a forward simulation.
inline OptimizationResult optimize_for_compliance(
    const ComplianceSpec& spec, const Medium& medium,
    const SwimmerGeometry& geom, const JointLimits& limits,
    const OptimizeOptions& opts = {}, HeightRow row = HeightRow::x) {
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw PipelineError(name, e.what());
    }
  };

  const ConnectionField field = stage("connection_field", [&] {
    return build_connection_field(medium, geom, opts.grid, opts.threads,
                                  opts.tol);
  });
  const HeightFunction hf =
      stage("height_function", [&] { return height_function(field); });
  const GaitPath path = stage("optimal_emergent_gait", [&] {
    return optimal_emergent_gait(hf, limits, row, opts.contour);
  });

  OptimizationResult result;
  result.optimal_emergent = path;
  result.predicted = stage("surface_integral", [&] {
    return displacement_surface_integral(path, hf);
  });

  const InverseDynamicsResult inv = stage("inverse_dynamics", [&] {
    InverseDynamicsOptions io;
    io.tol = opts.tol;
    io.strict = opts.strict_inverse;
    return inverse_dynamics(path, spec, medium, geom, io);
  });
  result.regime_trace = inv.regimes;
  result.clamped_samples = inv.clamped_samples;

  result.suggested = stage("fit_fourier", [&] {
    return fit_fourier(inv.psi, path.period);
  });
  result.fit_residual_rms = fourier_fit_rms(result.suggested, inv.psi);

  stage("verification", [&] {
    SimOptions sim = opts.verify_sim;
    sim.initial_shape = ShapeState::from_vec(path.points.front());
    result.verification =
        simulate_emergent(result.suggested, spec, medium, geom, sim);
    result.simulated = summarize_cycles(result.verification,
                                        geom.body_length(),
                                        sim.discard_cycles);
    return 0;
  });
  return result;
}

/// RMS shape error between the last simulated cycle and a target path with
/// the same period and phase.
inline double path_tracking_rms(const EmergentTrajectory& traj,
                                const GaitPath& path) {
  const int spc = traj.steps_per_cycle;
  const std::size_t m = path.num_edges();
  if (spc <= 0 || m == 0 || traj.alpha.size() < static_cast<std::size_t>(spc))
    return std::numeric_limits<double>::infinity();
  const std::size_t start = traj.alpha.size() - 1 - spc;
  double sq = 0.0;
  for (int s = 0; s < spc; ++s) {
    const double phase =
        std::fmod(traj.t[start + s], traj.period) / traj.period;
    const double idx = phase * static_cast<double>(m);
    const std::size_t k0 = static_cast<std::size_t>(idx) % m;
    const double f = idx - std::floor(idx);
    const Eigen::Vector2d target =
        (1.0 - f) * path.points[k0] + f * path.points[k0 + 1];
    sq += (traj.alpha[start + s] - target).squaredNorm();
  }
  return std::sqrt(sq / (2.0 * spc));
}

}  // namespace trilink
