#pragma once

#include <Eigen/Core>
#include <cmath>
#include <variant>

#include "trilink/errors.hpp"
#include "trilink/geometry.hpp"

// Resistive force models. A medium maps the local velocity of a body segment,
// expressed in that segment's tangent/normal frame, to a force per unit
// length. Both laws are odd (f(-v) = -f(v)) and strictly dissipative.

namespace trilink {

/// Linear anisotropic drag, force per length = -(c_t v_t, c_n v_n).
struct ViscousParams {
  double c_t = 1.0; // tangential drag [N s/m^2]
  double c_n = 2.0; // normal drag [N s/m^2]

  void validate() const {
    if (!(c_t > 0.0)) throw Error("viscous c_t must be positive");
    if (!(c_n >= c_t)) throw Error("viscous c_n must be >= c_t");
  }
};

/// Rate-independent anisotropic stress with a small regularization that
/// makes the law linear near zero speed and adds a light linear damping.
struct GranularParams {
  double C_t = 1.0;         // tangential stress scale [N/m]
  double C_n = 3.0;         // normal stress scale [N/m]
  double v_reg = 1e-3;      // regularization speed [m/s]
  double c_visc_reg = 0.01; // linear damping [N s/m^2]

  void validate() const {
    if (!(C_t > 0.0)) throw Error("granular C_t must be positive");
    if (!(C_n > C_t)) throw Error("granular C_n must be > C_t");
    if (!(v_reg > 0.0)) throw Error("granular v_reg must be positive");
    if (!(c_visc_reg >= 0.0)) throw Error("granular c_visc_reg must be >= 0");
  }
};

/// Force per unit length for a local velocity (v_t, v_n) in the segment frame.
inline Eigen::Vector2d viscous_force(const Eigen::Vector2d& v_local,
                                     const ViscousParams& p) {
  return {-p.c_t * v_local.x(), -p.c_n * v_local.y()};
}

inline Eigen::Vector2d granular_force(const Eigen::Vector2d& v_local,
                                      const GranularParams& p) {
  const double speed2 = v_local.squaredNorm();
  const double inv = 1.0 / std::sqrt(speed2 + p.v_reg * p.v_reg);
  return {-(p.C_t * inv + p.c_visc_reg) * v_local.x(),
          -(p.C_n * inv + p.c_visc_reg) * v_local.y()};
}

using Medium = std::variant<ViscousParams, GranularParams>;

inline Eigen::Vector2d force_per_length(const Eigen::Vector2d& v_local,
                                        const Medium& medium) {
  if (const auto* vp = std::get_if<ViscousParams>(&medium))
    return viscous_force(v_local, *vp);
  return granular_force(v_local, std::get<GranularParams>(medium));
}

namespace detail {

inline Eigen::Matrix2d force_jacobian(const Eigen::Vector2d& v_local,
                                      const ViscousParams& p) {
  Eigen::Matrix2d j;
  j << -p.c_t, 0.0, 0.0, -p.c_n;
  return j;
}

inline Eigen::Matrix2d force_jacobian(const Eigen::Vector2d& v_local,
                                      const GranularParams& p) {
  const double s2 = v_local.squaredNorm() + p.v_reg * p.v_reg;
  const double inv = 1.0 / std::sqrt(s2);
  const double inv3 = inv / s2;
  const Eigen::Vector2d kv{p.C_t * v_local.x(), p.C_n * v_local.y()};
  Eigen::Matrix2d j = kv * v_local.transpose() * inv3;
  j(0, 0) -= p.C_t * inv + p.c_visc_reg;
  j(1, 1) -= p.C_n * inv + p.c_visc_reg;
  return j;
}

inline bool is_linear(const Medium& m) {
  return std::holds_alternative<ViscousParams>(m);
}

}  // namespace detail

/// Net force (body frame) and moment about the body-frame origin, from
/// midpoint quadrature of force-per-length over every segment.
inline Eigen::Vector3d net_wrench(const SegmentKinematics& kin,
                                  const Eigen::Vector3d& xi,
                                  const Eigen::Vector2d& alphadot,
                                  const Medium& medium) {
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 5, 1> u;
  u << xi, alphadot;
  for (std::size_t i = 0; i < kin.segments.size(); ++i) {
    const auto& e = kin.segments[i];
    const Eigen::Vector2d v = kin.velocity_matrix(i) * u;
    const Eigen::Vector2d n = detail::ccw_normal(e.tangent);
    const Eigen::Vector2d f_local =
        force_per_length({e.tangent.dot(v), n.dot(v)}, medium);
    const Eigen::Vector2d f = f_local.x() * e.tangent + f_local.y() * n;
    w.head<2>() += e.length * f;
    w.z() += e.length * (e.r.x() * f.y() - e.r.y() * f.x());
  }
  return w;
}

inline Eigen::Vector3d net_wrench(const SegmentKinematics& kin,
                                  const BodyVelocity& xi,
                                  const Eigen::Vector2d& alphadot,
                                  const Medium& medium) {
  return net_wrench(kin, xi.vec(), alphadot, medium);
}

/// Generalized environmental forces conjugate to the joint angles:
/// tau_i = sum over segments of (dr/dalpha_i)^T f * length. Power balance
/// xi . F + alphadot . tau is the total (non-positive) dissipation.
inline Eigen::Vector2d joint_torques(const SegmentKinematics& kin,
                                     const Eigen::Vector3d& xi,
                                     const Eigen::Vector2d& alphadot,
                                     const Medium& medium) {
  Eigen::Vector2d tau = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 5, 1> u;
  u << xi, alphadot;
  for (std::size_t i = 0; i < kin.segments.size(); ++i) {
    const auto& e = kin.segments[i];
    const Eigen::Vector2d v = kin.velocity_matrix(i) * u;
    const Eigen::Vector2d n = detail::ccw_normal(e.tangent);
    const Eigen::Vector2d f_local =
        force_per_length({e.tangent.dot(v), n.dot(v)}, medium);
    const Eigen::Vector2d f = f_local.x() * e.tangent + f_local.y() * n;
    tau.x() += e.length * e.dr_da1.dot(f);
    tau.y() += e.length * e.dr_da2.dot(f);
  }
  return tau;
}

namespace detail {

/// Wrench and joint-torque rows stacked as a single residual, with the
/// analytic Jacobian with respect to the unknowns u = (xi, alphadot).
/// Rows 0..2: net wrench; rows 3..4: generalized joint forces.
struct ForceSystem {
  Eigen::Matrix<double, 5, 1> value;
  Eigen::Matrix<double, 5, 5> jacobian;
};

inline ForceSystem evaluate_force_system(const SegmentKinematics& kin,
                                         const Eigen::Matrix<double, 5, 1>& u,
                                         const Medium& medium) {
  ForceSystem sys;
  sys.value.setZero();
  sys.jacobian.setZero();
  for (std::size_t i = 0; i < kin.segments.size(); ++i) {
    const auto& e = kin.segments[i];
    const Eigen::Matrix<double, 2, 5> b = kin.velocity_matrix(i);
    const Eigen::Vector2d v = b * u;
    const Eigen::Vector2d n = ccw_normal(e.tangent);
    Eigen::Matrix2d frame;
    frame.col(0) = e.tangent;
    frame.col(1) = n;
    const Eigen::Vector2d v_local = frame.transpose() * v;

    Eigen::Vector2d f_local;
    Eigen::Matrix2d df_local;
    if (const auto* vp = std::get_if<ViscousParams>(&medium)) {
      f_local = viscous_force(v_local, *vp);
      df_local = force_jacobian(v_local, *vp);
    } else {
      const auto& gp = std::get<GranularParams>(medium);
      f_local = granular_force(v_local, gp);
      df_local = force_jacobian(v_local, gp);
    }
    const Eigen::Vector2d f = frame * f_local;
    const Eigen::Matrix2d df_dv = frame * df_local * frame.transpose();

    Eigen::Matrix<double, 5, 2> lift; // maps f to residual contributions
    lift.setZero();
    lift(0, 0) = lift(1, 1) = 1.0;
    lift(2, 0) = -e.r.y();
    lift(2, 1) = e.r.x();
    lift.row(3) = e.dr_da1.transpose();
    lift.row(4) = e.dr_da2.transpose();

    sys.value += e.length * (lift * f);
    sys.jacobian += e.length * (lift * df_dv * b);
  }
  return sys;
}

}  // namespace detail

}  // namespace trilink
