#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "trilink/connection.hpp"
#include "trilink/errors.hpp"
#include "trilink/geometry.hpp"
#include "trilink/media.hpp"
#include "trilink/solver.hpp"

// Joint compliance and the emergent-gait simulator. The motors command
// "suggested" joint angles psi(t); the realized ("emergent") angles alpha(t)
// follow from a quasi-static balance between elastic joint torques and
// environmental torques, coupled with the zero-net-wrench condition on the
// body. Joint springs act with torque K_eff(alpha, psi) * (rest - alpha).

namespace trilink {

// ---------------------------------------------------------------------------
// Suggested gaits

/// psi1 = A cos(2 pi omega t), psi2 = A sin(2 pi omega t).
struct CircularGait {
  double A_psi = M_PI / 3.0; // [rad]
  double omega = 0.1;        // [Hz]

  double period() const { return 1.0 / omega; }
};

/// Per-joint truncated Fourier series with harmonics p = 1..10 (no constant
/// term); coefficient arrays are indexed by p-1.
struct FourierGait {
  static constexpr int kOrder = 10;
  double period = 10.0; // [s]
  std::array<std::array<double, kOrder>, 2> a{}; // cosine coefficients
  std::array<std::array<double, kOrder>, 2> b{}; // sine coefficients
};

using SuggestedGait = std::variant<CircularGait, FourierGait>;

struct GaitSample {
  Eigen::Vector2d psi;
  Eigen::Vector2d psidot;
};

inline GaitSample eval_gait(const CircularGait& g, double t) {
  const double w = 2.0 * M_PI * g.omega;
  return {{g.A_psi * std::cos(w * t), g.A_psi * std::sin(w * t)},
          {-g.A_psi * w * std::sin(w * t), g.A_psi * w * std::cos(w * t)}};
}

inline GaitSample eval_gait(const FourierGait& g, double t) {
  GaitSample s{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  for (int i = 0; i < 2; ++i) {
    for (int p = 1; p <= FourierGait::kOrder; ++p) {
      const double w = 2.0 * M_PI * p / g.period;
      const double c = std::cos(w * t), sn = std::sin(w * t);
      s.psi[i] += g.a[i][p - 1] * c + g.b[i][p - 1] * sn;
      s.psidot[i] += w * (-g.a[i][p - 1] * sn + g.b[i][p - 1] * c);
    }
  }
  return s;
}

inline GaitSample eval_gait(const SuggestedGait& g, double t) {
  return std::visit([&](const auto& gg) { return eval_gait(gg, t); }, g);
}

inline double gait_period(const SuggestedGait& g) {
  if (const auto* c = std::get_if<CircularGait>(&g)) return c->period();
  return std::get<FourierGait>(g).period;
}

inline FourierGait to_fourier(const CircularGait& g) {
  FourierGait f;
  f.period = g.period();
  f.a[0][0] = g.A_psi;
  f.b[1][0] = g.A_psi;
  return f;
}

/// The y-mirrored gait commands the reflected shape (both joints negated).
inline SuggestedGait mirrored_gait(const SuggestedGait& g) {
  FourierGait f = std::holds_alternative<CircularGait>(g)
                      ? to_fourier(std::get<CircularGait>(g))
                      : std::get<FourierGait>(g);
  for (int i = 0; i < 2; ++i)
    for (int p = 0; p < FourierGait::kOrder; ++p) {
      f.a[i][p] = -f.a[i][p];
      f.b[i][p] = -f.b[i][p];
    }
  return f;
}

// ---------------------------------------------------------------------------
// Compliance models

struct Rigid {};

struct ConstantK {
  double k1 = 1.0; // [N m / rad]
  double k2 = 1.0;

  void validate() const {
    if (!(k1 > 0.0) || !(k2 > 0.0))
      throw Error("constant joint stiffness must be positive");
  }
};

/// Bilateral cable drive with generalized compliance G. Commanded cable
/// lengths follow the piecewise law parametrized by gamma = (2G-1) A_psi;
/// the pay-out allowance l_0 per radian opens a slack window around the
/// commanded angle, and the moment arm r_p converts cable slack into joint
/// deviation. G = 0 leaves both cables taut at every command (rigid joint).
struct CableScheme {
  double G = 0.0;       // generalized compliance [-]
  double A_psi = M_PI / 3.0; // commanded gait amplitude [rad]
  double k_skin = 0.05; // [N m / rad]
  double k_cable = 2.0; // [N m / rad]
  double l_0 = 0.004;   // slack pay-out per radian of command [m/rad]
  double r_p = 0.02;    // pulley moment arm [m]

  double gamma() const { return (2.0 * G - 1.0) * A_psi; }
  bool rigid_joint() const { return gamma() <= -A_psi + 1e-15; }

  void validate() const {
    if (!(G >= 0.0)) throw Error("generalized compliance G must be >= 0");
    if (!(A_psi > 0.0)) throw Error("cable A_psi must be positive");
    if (!(k_skin > 0.0) || !(k_cable > 0.0))
      throw Error("cable stiffnesses must be positive");
    if (!(l_0 >= 0.0)) throw Error("cable l_0 must be >= 0");
    if (!(r_p > 0.0)) throw Error("cable r_p must be positive");
  }
};

using ComplianceSpec = std::variant<Rigid, ConstantK, CableScheme>;

/// Exact cable length needed to hold the joint rigidly at angle psi, in the
/// linearized pulley model. The rest length is an arbitrary positive offset.
inline constexpr double kCableRestLength = 0.10; // [m]

inline double exact_cable_length_left(double psi, const CableScheme& s) {
  return kCableRestLength - s.r_p * psi;
}
inline double exact_cable_length_right(double psi, const CableScheme& s) {
  return kCableRestLength + s.r_p * psi;
}

struct CableLengths {
  double left;
  double right;
};

/// Commanded cable lengths at suggested angle psi. The taut branch tracks the
/// exact geometry; the slack branch freezes the exact length at the regime
/// boundary and pays out l_0 per radian beyond it.
inline CableLengths cable_lengths(double psi, const CableScheme& s) {
  if (std::abs(psi) > s.A_psi + 1e-12)
    throw AmplitudeExceededError("psi exceeds commanded amplitude");
  const double g = s.gamma();
  CableLengths out{};
  if (psi <= -g) {
    out.left = exact_cable_length_left(psi, s);
  } else {
    out.left = exact_cable_length_left(-std::min(s.A_psi, g), s) +
               s.l_0 * (g + psi);
  }
  if (psi >= g) {
    out.right = exact_cable_length_right(psi, s);
  } else {
    out.right = exact_cable_length_right(std::min(s.A_psi, g), s) +
                s.l_0 * (g - psi);
  }
  return out;
}

struct Deadband {
  double lo;
  double hi;
};

/// Interval of joint angles with both cables slack. Each cable's pay-out
/// allowance l_0 * max(0, gamma +- psi) permits a deviation of (l_0/r_p) per
/// metre of slack on its side of the commanded angle; with no allowance the
/// interval collapses to the command itself.
inline Deadband deadband(double psi, const CableScheme& s) {
  if (std::abs(psi) > s.A_psi + 1e-12)
    throw AmplitudeExceededError("psi exceeds commanded amplitude");
  const double g = s.gamma();
  const double slack_lo = s.l_0 * std::max(0.0, g + psi);
  const double slack_hi = s.l_0 * std::max(0.0, g - psi);
  return {psi - slack_lo / s.r_p, psi + slack_hi / s.r_p};
}

/// Piecewise joint regimes of the cable scheme.
enum class JointRegime { Locked, Spring, Inside, LowEngaged, HighEngaged };

struct JointStiffness {
  double k;    // [N m / rad]
  double rest; // torque = k * (rest - alpha)
};

/// Stiffness and rest angle of one joint. Inside the deadband only the skin
/// acts, restoring toward zero; at an engaged boundary the cable adds its
/// stiffness with the rest angle placed so the torque is continuous across
/// the boundary.
inline JointStiffness cable_joint_stiffness(double alpha, double psi,
                                            const CableScheme& s,
                                            JointRegime regime) {
  if (regime == JointRegime::Inside) return {s.k_skin, 0.0};
  // commands saturate at the amplitude, like the motors they drive
  const Deadband db = deadband(std::clamp(psi, -s.A_psi, s.A_psi), s);
  const double boundary = regime == JointRegime::HighEngaged ? db.hi : db.lo;
  const double k = s.k_skin + s.k_cable;
  return {k, s.k_cable * boundary / k};
}

inline JointRegime classify_cable_regime(double alpha, double psi,
                                         const CableScheme& s) {
  if (s.rigid_joint()) return JointRegime::Locked;
  const Deadband db = deadband(std::clamp(psi, -s.A_psi, s.A_psi), s);
  if (alpha >= db.hi) return JointRegime::HighEngaged;
  if (alpha <= db.lo) return JointRegime::LowEngaged;
  return JointRegime::Inside;
}

/// Regimes that exert the same torque at this state are interchangeable:
/// exactly at a deadband boundary the engaged and free branches coincide.
inline bool regimes_equivalent(JointRegime a, JointRegime b, double alpha,
                               double psi, const CableScheme& s,
                               double eps = 1e-9) {
  if (a == b) return true;
  const Deadband db = deadband(std::clamp(psi, -s.A_psi, s.A_psi), s);
  auto near_boundary = [&](JointRegime x, JointRegime y) {
    if ((x == JointRegime::Inside && y == JointRegime::HighEngaged) ||
        (x == JointRegime::HighEngaged && y == JointRegime::Inside))
      return std::abs(alpha - db.hi) <= eps;
    if ((x == JointRegime::Inside && y == JointRegime::LowEngaged) ||
        (x == JointRegime::LowEngaged && y == JointRegime::Inside))
      return std::abs(alpha - db.lo) <= eps;
    return false;
  };
  return near_boundary(a, b);
}

/// Effective stiffness of joint `joint` (0 or 1) at emergent angle alpha and
/// command psi. Rigid joints report infinite stiffness with rest at psi.
inline JointStiffness effective_stiffness(double alpha, double psi,
                                          const ComplianceSpec& spec,
                                          int joint) {
  if (std::holds_alternative<Rigid>(spec))
    return {std::numeric_limits<double>::infinity(), psi};
  if (const auto* ck = std::get_if<ConstantK>(&spec))
    return {joint == 0 ? ck->k1 : ck->k2, psi};
  const auto& cs = std::get<CableScheme>(spec);
  if (cs.rigid_joint())
    return {std::numeric_limits<double>::infinity(), psi};
  return cable_joint_stiffness(alpha, psi, cs,
                               classify_cable_regime(alpha, psi, cs));
}

// ---------------------------------------------------------------------------
// Emergent-gait simulation

struct SimOptions {
  double dt = 0.02;       // target step [s]; snapped so a cycle is integral
  int n_cycles = 7;
  int discard_cycles = 2;
  double tol = 1e-9;
  int max_iter = 60;
  std::optional<ShapeState> initial_shape; // default: psi(0)
};

struct EmergentTrajectory {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> psi;
  std::vector<Eigen::Vector2d> alpha;
  std::vector<Pose2> pose;      // body frame in world coordinates
  std::vector<double> residual; // step-solve residual norm
  int steps_per_cycle = 0;
  double dt = 0.0;
  double period = 0.0;
};

namespace detail {

using Regimes = std::array<JointRegime, 2>;

inline Regimes classify_regimes(const Eigen::Vector2d& alpha,
                                const Eigen::Vector2d& psi,
                                const ComplianceSpec& spec) {
  Regimes r;
  for (int i = 0; i < 2; ++i) {
    if (std::holds_alternative<Rigid>(spec)) {
      r[i] = JointRegime::Locked;
    } else if (std::holds_alternative<ConstantK>(spec)) {
      r[i] = JointRegime::Spring;
    } else {
      r[i] = classify_cable_regime(alpha[i], psi[i],
                                   std::get<CableScheme>(spec));
    }
  }
  return r;
}

inline JointStiffness regime_stiffness(double alpha, double psi,
                                       const ComplianceSpec& spec, int joint,
                                       JointRegime regime) {
  if (regime == JointRegime::Spring) {
    const auto& ck = std::get<ConstantK>(spec);
    return {joint == 0 ? ck.k1 : ck.k2, psi};
  }
  return cable_joint_stiffness(alpha, psi, std::get<CableScheme>(spec),
                               regime);
}

/// One implicit-midpoint stage: solve the coupled balance with the shape
/// taken at alpha_base + (dt/2) alphadot and the spring torque implicit in
/// the joint rates. The kinematics are lagged and refreshed over a few
/// sweeps; the returned residual belongs to the final sweep's solve.
inline QuasistaticSolution solve_step(const Eigen::Vector2d& alpha_base,
                                      const GaitSample& gs_mid,
                                      double half_dt, const Regimes& regimes,
                                      const ComplianceSpec& spec,
                                      const Medium& medium,
                                      const SwimmerGeometry& geom, double tol,
                                      int max_iter,
                                      Eigen::Matrix<double, 5, 1>& warm) {
  QuasistaticSolution sol;
  Eigen::Vector2d alpha_hat = alpha_base;
  for (int i = 0; i < 2; ++i)
    if (regimes[i] == JointRegime::Locked) alpha_hat[i] = gs_mid.psi[i];

  for (int sweep = 0; sweep < 4; ++sweep) {
    const SegmentKinematics kin =
        compute_segment_kinematics(ShapeState::from_vec(alpha_hat), geom);
    QuasistaticProblem prob{kin, medium};
    prob.prescribed_rates = gs_mid.psidot;
    prob.alpha_base = alpha_base;
    prob.implicit_weight = half_dt;
    for (int i = 0; i < 2; ++i) {
      prob.locked[i] = regimes[i] == JointRegime::Locked;
      if (prob.locked[i]) continue;
      const JointStiffness js =
          regime_stiffness(alpha_hat[i], gs_mid.psi[i], spec, i, regimes[i]);
      prob.spring_k[i] = js.k;
      prob.spring_rest[i] = js.rest;
    }
    sol = solve_quasistatic(prob, tol, max_iter, warm);
    warm << sol.xi, sol.alphadot;
    Eigen::Vector2d next_hat = alpha_base + half_dt * sol.alphadot;
    for (int i = 0; i < 2; ++i)
      if (prob.locked[i]) next_hat[i] = gs_mid.psi[i];
    const double shift = (next_hat - alpha_hat).norm();
    alpha_hat = next_hat;
    if (shift < 1e-13) break;
  }
  return sol;
}

}  // namespace detail

/// Simulate the realized gait and body motion produced by commanding a
/// suggested gait through a compliance model in a given medium.
///
/// Each step solves the five-unknown quasi-static system for (xi, alphadot)
/// and advances the shape with a midpoint (RK2) rule and the pose with the
/// SE(2) exponential. The stiffness regime assumed for a step must match the
/// regime implied by the step's end state; on mismatch the step is re-solved
/// with the implied regime (at most 4 alternations) and then retried on a
/// bisected dt before reporting chatter.
inline EmergentTrajectory simulate_emergent(const SuggestedGait& gait,
                                            const ComplianceSpec& spec,
                                            const Medium& medium,
                                            const SwimmerGeometry& geom,
                                            const SimOptions& opts = {}) {
  const double period = gait_period(gait);
  if (!(opts.dt > 0.0)) throw Error("dt must be positive");
  const int steps_per_cycle =
      std::max(200, static_cast<int>(std::llround(period / opts.dt)));
  const double dt = period / steps_per_cycle;
  const int total_steps = steps_per_cycle * opts.n_cycles;

  EmergentTrajectory traj;
  traj.steps_per_cycle = steps_per_cycle;
  traj.dt = dt;
  traj.period = period;
  traj.t.reserve(total_steps + 1);
  traj.psi.reserve(total_steps + 1);
  traj.alpha.reserve(total_steps + 1);
  traj.pose.reserve(total_steps + 1);
  traj.residual.reserve(total_steps + 1);

  const GaitSample s0 = eval_gait(gait, 0.0);
  Eigen::Vector2d alpha =
      opts.initial_shape ? opts.initial_shape->vec() : s0.psi;
  Pose2 pose = Pose2::identity();

  Eigen::Matrix<double, 5, 1> warm = Eigen::Matrix<double, 5, 1>::Zero();

  traj.t.push_back(0.0);
  traj.psi.push_back(s0.psi);
  traj.alpha.push_back(alpha);
  traj.pose.push_back(pose);
  traj.residual.push_back(0.0);

  // One two-stage L-stable diagonally implicit (SDIRK2) step with fixed
  // regimes; the strong damping at infinity lets the shape land on the
  // quasi-static torque-balance manifold instead of ringing across it.
  // Locked joints track the command exactly instead of being integrated.
  constexpr double kGamma = 1.0 - M_SQRT1_2;
  auto attempt_step = [&](double t, double h, const Eigen::Vector2d& a0,
                          const Pose2& g0, const detail::Regimes& regimes,
                          Eigen::Vector2d& a1, Pose2& g1) {
    const GaitSample gs1 = eval_gait(gait, t + kGamma * h);
    const auto s1 = detail::solve_step(a0, gs1, kGamma * h, regimes, spec,
                                       medium, geom, opts.tol, opts.max_iter,
                                       warm);
    const Eigen::Vector2d base2 = a0 + (1.0 - kGamma) * h * s1.alphadot;
    const GaitSample gs2 = eval_gait(gait, t + h);
    const auto s2 = detail::solve_step(base2, gs2, kGamma * h, regimes, spec,
                                       medium, geom, opts.tol, opts.max_iter,
                                       warm);
    a1 = base2 + kGamma * h * s2.alphadot;
    for (int i = 0; i < 2; ++i)
      if (regimes[i] == JointRegime::Locked) a1[i] = gs2.psi[i];
    g1 = g0 * se2_exp(s1.xi, (1.0 - kGamma) * h) * se2_exp(s2.xi, kGamma * h);
    return std::max(s1.residual, s2.residual);
  };

  // Advance from t by h, handling regime consistency and dt bisection.
  std::function<double(double, double, Eigen::Vector2d&, Pose2&, int)> advance =
      [&](double t, double h, Eigen::Vector2d& a, Pose2& g, int depth) {
        const GaitSample gs = eval_gait(gait, t);
        detail::Regimes regimes = detail::classify_regimes(a, gs.psi, spec);
        for (int attempt = 0; attempt < 4; ++attempt) {
          Eigen::Vector2d a1;
          Pose2 g1;
          const double res = attempt_step(t, h, a, g, regimes, a1, g1);
          if (res >= opts.tol)
            throw StepNonConvergenceError(t, res);
          const GaitSample gs_end = eval_gait(gait, t + h);
          const detail::Regimes implied =
              detail::classify_regimes(a1, gs_end.psi, spec);
          bool consistent = true;
          if (const auto* cs = std::get_if<CableScheme>(&spec)) {
            for (int i = 0; i < 2; ++i)
              consistent = consistent &&
                           regimes_equivalent(implied[i], regimes[i], a1[i],
                                              gs_end.psi[i], *cs);
          }
          if (consistent) {
            a = a1;
            g = g1;
            return res;
          }
          regimes = implied;
        }
        if (depth >= 6) throw StiffnessRegimeChatterError(t);
        const double r1 = advance(t, 0.5 * h, a, g, depth + 1);
        const double r2 = advance(t + 0.5 * h, 0.5 * h, a, g, depth + 1);
        return std::max(r1, r2);
      };

  for (int step = 0; step < total_steps; ++step) {
    const double t = step * dt;
    const double res = advance(t, dt, alpha, pose, 0);
    const double t1 = (step + 1) * dt;
    traj.t.push_back(t1);
    traj.psi.push_back(eval_gait(gait, t1).psi);
    traj.alpha.push_back(alpha);
    traj.pose.push_back(pose);
    traj.residual.push_back(res);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Cycle statistics

struct DisplacementSummary {
  std::vector<Displacement> per_cycle; // cycles kept after the discard window
  double mean_dx = 0.0;                // [BL]
  double std_dx = 0.0;
  double mean_dy = 0.0;
  double mean_dtheta = 0.0;
  int analyzed_cycles = 0;
};

/// Per-cycle displacement measured in the body frame at the cycle start,
/// with x, y normalized by body length.
inline DisplacementSummary summarize_cycles(const EmergentTrajectory& traj,
                                            double body_length,
                                            int discard_cycles) {
  DisplacementSummary out;
  const int spc = traj.steps_per_cycle;
  if (spc <= 0) return out;
  const int n_cycles = (static_cast<int>(traj.pose.size()) - 1) / spc;
  for (int c = discard_cycles; c < n_cycles; ++c) {
    const Pose2& a = traj.pose[static_cast<std::size_t>(c) * spc];
    const Pose2& b = traj.pose[static_cast<std::size_t>(c + 1) * spc];
    const Pose2 d = a.inverse() * b;
    out.per_cycle.push_back({d.x / body_length, d.y / body_length, d.theta});
  }
  out.analyzed_cycles = static_cast<int>(out.per_cycle.size());
  if (out.analyzed_cycles == 0) return out;
  for (const auto& d : out.per_cycle) {
    out.mean_dx += d.dx;
    out.mean_dy += d.dy;
    out.mean_dtheta += d.dtheta;
  }
  out.mean_dx /= out.analyzed_cycles;
  out.mean_dy /= out.analyzed_cycles;
  out.mean_dtheta /= out.analyzed_cycles;
  double var = 0.0;
  for (const auto& d : out.per_cycle) {
    var += (d.dx - out.mean_dx) * (d.dx - out.mean_dx);
  }
  out.std_dx = out.analyzed_cycles > 1
                   ? std::sqrt(var / (out.analyzed_cycles - 1))
                   : 0.0;
  return out;
}

}  // namespace trilink
