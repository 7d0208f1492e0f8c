#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "trilink/errors.hpp"
#include "trilink/geometry.hpp"
#include "trilink/media.hpp"

// Core quasi-static solver. At a fixed shape the unknowns are the body
// velocity xi and the joint rates alphadot, stacked as u = (xi, alphadot).
// The residual is the net wrench (rows 0..2) plus, for each non-locked
// joint, the sum of its elastic and environmental torques (rows 3..4).
// Locked joints have their rates prescribed and their torque rows dropped.
//
// The elastic torque on joint i is spring_k[i] * (spring_rest[i] - alpha_i)
// evaluated at alpha_i = alpha_base[i] + implicit_weight * alphadot_i, so a
// time integrator can treat the spring implicitly (implicit_weight = c * dt)
// and remain stable through the stiff relaxation the weak regularization of
// rate-independent media would otherwise produce.
//
// Rate-independent media also make plain Newton from a cold start
// unreliable (the residual norm has shallow valleys away from the root), so
// failed starts are re-seeded with Picard iterations on the frozen-
// coefficient linear system, where each segment's force law is replaced by
// the secant viscosity of the previous iterate.

namespace trilink {

struct QuasistaticProblem {
  const SegmentKinematics& kin;
  const Medium& medium;
  std::array<bool, 2> locked{true, true};
  Eigen::Vector2d prescribed_rates = Eigen::Vector2d::Zero(); // locked joints
  Eigen::Vector2d spring_k = Eigen::Vector2d::Zero();         // free joints
  Eigen::Vector2d spring_rest = Eigen::Vector2d::Zero();
  Eigen::Vector2d alpha_base = Eigen::Vector2d::Zero();
  double implicit_weight = 0.0; // contribution of alphadot to the spring arg
};

struct QuasistaticSolution {
  Eigen::Vector3d xi = Eigen::Vector3d::Zero();
  Eigen::Vector2d alphadot = Eigen::Vector2d::Zero();
  double residual = 0.0;
  bool converged = false;
};

namespace detail {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Linear system matrix of the frozen-coefficient (secant viscosity) force
/// law at velocities implied by u_prev. For viscous media this is exact.
inline Mat5 frozen_force_matrix(const SegmentKinematics& kin,
                                const Vec5& u_prev, const Medium& medium) {
  Mat5 s = Mat5::Zero();
  const auto* gp = std::get_if<GranularParams>(&medium);
  const auto* vp = std::get_if<ViscousParams>(&medium);
  for (std::size_t i = 0; i < kin.segments.size(); ++i) {
    const auto& e = kin.segments[i];
    const Eigen::Matrix<double, 2, 5> b = kin.velocity_matrix(i);
    double ct, cn;
    if (vp) {
      ct = vp->c_t;
      cn = vp->c_n;
    } else {
      const Eigen::Vector2d v = b * u_prev;
      const double inv =
          1.0 / std::sqrt(v.squaredNorm() + gp->v_reg * gp->v_reg);
      ct = gp->C_t * inv + gp->c_visc_reg;
      cn = gp->C_n * inv + gp->c_visc_reg;
    }
    const Eigen::Vector2d n = ccw_normal(e.tangent);
    const Eigen::Matrix2d df_dv =
        -ct * (e.tangent * e.tangent.transpose()) - cn * (n * n.transpose());

    Eigen::Matrix<double, 5, 2> lift;
    lift.setZero();
    lift(0, 0) = lift(1, 1) = 1.0;
    lift(2, 0) = -e.r.y();
    lift(2, 1) = e.r.x();
    lift.row(3) = e.dr_da1.transpose();
    lift.row(4) = e.dr_da2.transpose();
    s += e.length * (lift * df_dv * b);
  }
  return s;
}

}  // namespace detail

/// Solve the coupled force/torque balance. `guess` warm-starts the Newton
/// iteration; pass zero when no better start is known.
inline QuasistaticSolution solve_quasistatic(
    const QuasistaticProblem& prob, double tol = 1e-9, int max_iter = 60,
    const Eigen::Matrix<double, 5, 1>& guess =
        Eigen::Matrix<double, 5, 1>::Zero()) {
  using detail::Vec5;

  std::array<int, 5> is_free{1, 1, 1, !prob.locked[0], !prob.locked[1]};
  std::vector<int> free_idx;
  for (int k = 0; k < 5; ++k)
    if (is_free[k]) free_idx.push_back(k);
  const int nf = static_cast<int>(free_idx.size());

  auto with_prescribed = [&](Vec5 u) {
    for (int i = 0; i < 2; ++i)
      if (prob.locked[i]) u[3 + i] = prob.prescribed_rates[i];
    return u;
  };

  auto spring_torque = [&](int i, const Vec5& u) {
    const double alpha_arg =
        prob.alpha_base[i] + prob.implicit_weight * u[3 + i];
    return prob.spring_k[i] * (prob.spring_rest[i] - alpha_arg);
  };

  auto reduced_residual = [&](const Vec5& u, Eigen::VectorXd& r) {
    const auto sys = detail::evaluate_force_system(prob.kin, u, prob.medium);
    r.resize(nf);
    for (int k = 0; k < nf; ++k) {
      const int idx = free_idx[k];
      r[k] = sys.value[idx] + (idx >= 3 ? spring_torque(idx - 3, u) : 0.0);
    }
    return sys;
  };

  auto reduced_jacobian = [&](const detail::ForceSystem& sys,
                              Eigen::MatrixXd& jac) {
    jac.resize(nf, nf);
    for (int a = 0; a < nf; ++a)
      for (int b = 0; b < nf; ++b) {
        jac(a, b) = sys.jacobian(free_idx[a], free_idx[b]);
        if (free_idx[a] >= 3 && free_idx[a] == free_idx[b])
          jac(a, b) -= prob.spring_k[free_idx[a] - 3] * prob.implicit_weight;
      }
  };

  // Damped Newton from a given start; returns best iterate found.
  auto newton = [&](Vec5 u) {
    Eigen::VectorXd r;
    auto sys = reduced_residual(u, r);
    double res = r.norm();
    for (int iter = 0; iter < max_iter && res >= tol; ++iter) {
      Eigen::MatrixXd jac;
      reduced_jacobian(sys, jac);
      const Eigen::VectorXd step = jac.partialPivLu().solve(-r);
      double lambda = 1.0;
      bool improved = false;
      for (int back = 0; back < 30; ++back) {
        Vec5 trial = u;
        for (int k = 0; k < nf; ++k) trial[free_idx[k]] += lambda * step[k];
        Eigen::VectorXd r_trial;
        auto sys_trial = reduced_residual(trial, r_trial);
        const double res_trial = r_trial.norm();
        if (res_trial < res * (1.0 - 1e-4 * lambda) || res_trial < tol) {
          u = trial;
          r = std::move(r_trial);
          sys = sys_trial;
          res = res_trial;
          improved = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!improved) break;
    }
    return std::make_pair(u, res);
  };

  // Picard iteration on the frozen-coefficient linear system.
  auto picard = [&](Vec5 u, int iters) {
    for (int it = 0; it < iters; ++it) {
      const auto s = detail::frozen_force_matrix(prob.kin, u, prob.medium);
      Eigen::MatrixXd a(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int row = 0; row < nf; ++row) {
        const int ri = free_idx[row];
        double acc = 0.0;
        if (ri >= 3)
          acc += prob.spring_k[ri - 3] *
                 (prob.spring_rest[ri - 3] - prob.alpha_base[ri - 3]);
        for (int i = 0; i < 2; ++i)
          if (prob.locked[i]) acc += s(ri, 3 + i) * prob.prescribed_rates[i];
        rhs[row] = -acc;
        for (int col = 0; col < nf; ++col) {
          a(row, col) = s(ri, free_idx[col]);
          if (ri >= 3 && ri == free_idx[col])
            a(row, col) -= prob.spring_k[ri - 3] * prob.implicit_weight;
        }
      }
      const Eigen::VectorXd sol = a.partialPivLu().solve(rhs);
      u = Vec5::Zero();
      for (int k = 0; k < nf; ++k) u[free_idx[k]] = sol[k];
      u = with_prescribed(u);
    }
    return u;
  };

  auto pack = [&](const std::pair<Vec5, double>& best) {
    QuasistaticSolution out;
    out.xi = best.first.head<3>();
    out.alphadot = best.first.tail<2>();
    out.residual = best.second;
    out.converged = best.second < tol;
    return out;
  };

  auto best = newton(with_prescribed(guess));
  if (best.second < tol) return pack(best);

  auto seeded = newton(picard(with_prescribed(Vec5::Zero()), 6));
  if (seeded.second < best.second) best = seeded;
  if (best.second < tol) return pack(best);

  auto deep = newton(picard(best.first, 40));
  if (deep.second < best.second) best = deep;
  return pack(best);
}

/// Body velocity balancing the net wrench at prescribed joint rates.
inline Eigen::Vector3d solve_body_velocity(const SegmentKinematics& kin,
                                           const Eigen::Vector2d& alphadot,
                                           const Medium& medium,
                                           double tol = 1e-9,
                                           int max_iter = 100) {
  QuasistaticProblem prob{kin, medium};
  prob.locked = {true, true};
  prob.prescribed_rates = alphadot;
  const QuasistaticSolution sol = solve_quasistatic(prob, tol, max_iter);
  if (!sol.converged)
    throw NonConvergenceError(kin.alpha.alpha1, kin.alpha.alpha2,
                              sol.residual);
  return sol.xi;
}

}  // namespace trilink
