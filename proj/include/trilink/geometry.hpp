#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <vector>

#include "trilink/errors.hpp"
#include "trilink/pose2.hpp"

// Planar kinematics of the three-link swimmer.
//
// Conventions used throughout the library:
//  * Links are indexed 0 (head, carries the transverse head bar), 1 (middle),
//    2 (tail), ordered front to back along +x in the straight configuration.
//  * Joint 1 connects head and middle, joint 2 connects middle and tail.
//    A positive joint angle deflects the more posterior link counterclockwise
//    relative to the anterior one: heading(link k+1) = heading(link k) +
//    alpha_{k+1}.
//  * The body frame's origin is the arc-length centroid of the whole body
//    outline (links plus head bar); its heading is the circular mean of the
//    three link headings. Placing the origin at the drag centroid makes an
//    isotropic medium produce exactly zero translational velocity, which the
//    rest of the library relies on.

namespace trilink {

/// Emergent joint angles (alpha1, alpha2) in radians: the shape coordinate.
struct ShapeState {
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  Eigen::Vector2d vec() const { return {alpha1, alpha2}; }
  static ShapeState from_vec(const Eigen::Vector2d& v) { return {v.x(), v.y()}; }
};

/// Body-frame velocity (forward, lateral, rotational).
struct BodyVelocity {
  double xi_x = 0.0;
  double xi_y = 0.0;
  double xi_theta = 0.0;

  Eigen::Vector3d vec() const { return {xi_x, xi_y, xi_theta}; }
  static BodyVelocity from_vec(const Eigen::Vector3d& v) {
    return {v.x(), v.y(), v.z()};
  }
};

/// Physical dimensions of the swimmer and the RFT discretization density.
struct SwimmerGeometry {
  double link_length = 0.10;          // [m]
  double head_bar_halfwidth = 0.0375; // [m], transverse bar on the head tip
  int segments_per_link = 10;

  static constexpr int n_links = 3;

  double body_length() const { return n_links * link_length; }
  double total_arc_length() const {
    return n_links * link_length + 2.0 * head_bar_halfwidth;
  }

  void validate() const {
    if (!(link_length > 0.0)) throw Error("link_length must be positive");
    if (!(head_bar_halfwidth >= 0.0))
      throw Error("head_bar_halfwidth must be non-negative");
    if (segments_per_link < 2) throw Error("segments_per_link must be >= 2");
  }
};

/// Which piece of the body a segment belongs to. Segments are stored in the
/// order head link (joint to tip), head bar, middle link, tail link.
enum class BodyPiece { HeadLink, HeadBar, MiddleLink, TailLink };

/// One RFT segment in world coordinates.
struct Segment {
  Eigen::Vector2d midpoint;
  Eigen::Vector2d tangent; // unit vector; sign carries no meaning for RFT
  double length = 0.0;
  BodyPiece piece = BodyPiece::MiddleLink;
};

/// World-frame placement of the swimmer at a given shape and body pose.
struct LinkConfiguration {
  std::array<Pose2, 3> link_poses; // midpoint position + heading per link
  std::vector<Segment> segments;   // every RFT segment including the head bar
};

namespace detail {

inline Eigen::Vector2d ccw_normal(const Eigen::Vector2d& v) {
  return {-v.y(), v.x()};
}

/// Middle-link-frame description of the shape: link headings, joints, and
/// the analytic derivatives needed for shape Jacobians.
struct MiddleFrameShape {
  double theta_head, theta_tail;        // head/tail headings, middle = 0
  Eigen::Vector2d u_head, u_tail;       // link direction unit vectors
  Eigen::Vector2d du_head_da1, du_tail_da2;
  Eigen::Vector2d joint1, joint2;       // (+L/2, 0) and (-L/2, 0)
  Eigen::Vector2d tip;                  // head tip
  Eigen::Vector2d n_head;               // ccw normal of u_head (bar direction)
  Eigen::Vector2d dn_head_da1;

  MiddleFrameShape(const ShapeState& a, const SwimmerGeometry& g) {
    const double L = g.link_length;
    theta_head = -a.alpha1;
    theta_tail = a.alpha2;
    u_head = {std::cos(theta_head), std::sin(theta_head)};
    u_tail = {std::cos(theta_tail), std::sin(theta_tail)};
    // d(theta_head)/d(alpha1) = -1, d(theta_tail)/d(alpha2) = +1
    du_head_da1 = Eigen::Vector2d{std::sin(theta_head), -std::cos(theta_head)};
    du_tail_da2 = ccw_normal(u_tail);
    joint1 = {L / 2.0, 0.0};
    joint2 = {-L / 2.0, 0.0};
    tip = joint1 + L * u_head;
    n_head = ccw_normal(u_head);
    dn_head_da1 = u_head; // d(ccw_normal(u))/da1 with dtheta/da1 = -1
  }
};

/// Body-frame offset (pose of the body frame in the middle-link frame) and
/// its shape derivatives.
struct BodyFrameOffset {
  Eigen::Vector2d position;
  double theta;
  Eigen::Vector2d dposition_da1, dposition_da2;
  double dtheta_da1, dtheta_da2;

  BodyFrameOffset(const MiddleFrameShape& s, const SwimmerGeometry& g) {
    const double L = g.link_length;
    const double bar = 2.0 * g.head_bar_halfwidth;
    const double total = g.total_arc_length();

    const Eigen::Vector2d mid_head = s.joint1 + 0.5 * L * s.u_head;
    const Eigen::Vector2d mid_tail = s.joint2 - 0.5 * L * s.u_tail;
    position = (L * mid_head + L * mid_tail + bar * s.tip) / total;
    dposition_da1 = (L * 0.5 * L + bar * L) / total * s.du_head_da1;
    dposition_da2 = -(L * 0.5 * L) / total * s.du_tail_da2;

    const double S = std::sin(s.theta_head) + std::sin(s.theta_tail);
    const double C = std::cos(s.theta_head) + 1.0 + std::cos(s.theta_tail);
    theta = std::atan2(S, C);
    const double n2 = S * S + C * C;
    // dS, dC via the heading derivatives of head (-1) and tail (+1)
    dtheta_da1 = (C * -std::cos(s.theta_head) - S * std::sin(s.theta_head)) / n2;
    dtheta_da2 = (C * std::cos(s.theta_tail) - S * -std::sin(s.theta_tail)) / n2;
  }
};

}  // namespace detail

/// Pose of the body frame expressed in the middle-link frame.
inline Pose2 body_frame(const ShapeState& alpha, const SwimmerGeometry& geom) {
  const detail::MiddleFrameShape s(alpha, geom);
  const detail::BodyFrameOffset off(s, geom);
  return {off.position.x(), off.position.y(), normalize_angle(off.theta)};
}

/// Per-segment body-frame kinematics at a fixed shape: positions, tangents,
/// and the shape Jacobians d(position)/d(alpha_i). This is the quantity the
/// force models integrate over; the 2x5 matrix returned by velocity_matrix()
/// maps the stacked unknowns (xi_x, xi_y, xi_theta, alpha1dot, alpha2dot) to
/// the segment midpoint velocity in body-frame coordinates.
struct SegmentKinematics {
  struct Entry {
    Eigen::Vector2d r;       // midpoint, body frame
    Eigen::Vector2d tangent; // unit, body frame
    double length;
    Eigen::Vector2d dr_da1, dr_da2;
    BodyPiece piece;
  };

  ShapeState alpha;
  SwimmerGeometry geom;
  Pose2 body_offset; // body frame in middle-link frame
  std::vector<Entry> segments;

  Eigen::Matrix<double, 2, 5> velocity_matrix(std::size_t i) const {
    const Entry& e = segments[i];
    Eigen::Matrix<double, 2, 5> b;
    b.col(0) = Eigen::Vector2d{1.0, 0.0};
    b.col(1) = Eigen::Vector2d{0.0, 1.0};
    b.col(2) = detail::ccw_normal(e.r); // omega x r
    b.col(3) = e.dr_da1;
    b.col(4) = e.dr_da2;
    return b;
  }

  Eigen::Vector2d segment_velocity(std::size_t i, const Eigen::Vector3d& xi,
                                   const Eigen::Vector2d& alphadot) const {
    Eigen::Matrix<double, 5, 1> u;
    u << xi, alphadot;
    return velocity_matrix(i) * u;
  }
};

inline SegmentKinematics compute_segment_kinematics(
    const ShapeState& alpha, const SwimmerGeometry& geom) {
  const detail::MiddleFrameShape s(alpha, geom);
  const detail::BodyFrameOffset off(s, geom);
  const double L = geom.link_length;
  const double h = geom.head_bar_halfwidth;
  const int n = geom.segments_per_link;

  SegmentKinematics kin;
  kin.alpha = alpha;
  kin.geom = geom;
  kin.body_offset = {off.position.x(), off.position.y(),
                     normalize_angle(off.theta)};
  kin.segments.reserve(static_cast<std::size_t>(4 * n));

  const Eigen::Matrix2d rt = kin.body_offset.rotation().transpose();
  const Eigen::Matrix2d jrot = (Eigen::Matrix2d() << 0, -1, 1, 0).finished();

  auto push = [&](const Eigen::Vector2d& mid_m, const Eigen::Vector2d& tan_m,
                  double len, const Eigen::Vector2d& dmid_da1,
                  const Eigen::Vector2d& dmid_da2, BodyPiece piece) {
    SegmentKinematics::Entry e;
    e.r = rt * (mid_m - off.position);
    e.tangent = rt * tan_m;
    e.length = len;
    // chain rule: the body frame itself moves with shape
    e.dr_da1 = rt * (dmid_da1 - off.dposition_da1) - off.dtheta_da1 * (jrot * e.r);
    e.dr_da2 = rt * (dmid_da2 - off.dposition_da2) - off.dtheta_da2 * (jrot * e.r);
    e.piece = piece;
    kin.segments.push_back(e);
  };

  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
  for (int k = 0; k < n; ++k) {
    const double f = (k + 0.5) / n;
    push(s.joint1 + f * L * s.u_head, s.u_head, L / n,
         f * L * s.du_head_da1, zero, BodyPiece::HeadLink);
  }
  for (int k = 0; k < n; ++k) {
    const double w = h * (2.0 * (k + 0.5) / n - 1.0); // in [-h, h]
    push(s.tip + w * s.n_head, s.n_head, 2.0 * h / n,
         L * s.du_head_da1 + w * s.dn_head_da1, zero, BodyPiece::HeadBar);
  }
  for (int k = 0; k < n; ++k) {
    const double f = (k + 0.5) / n;
    push({-L / 2.0 + f * L, 0.0}, {1.0, 0.0}, L / n, zero, zero,
         BodyPiece::MiddleLink);
  }
  for (int k = 0; k < n; ++k) {
    const double f = (k + 0.5) / n;
    push(s.joint2 - f * L * s.u_tail, s.u_tail, L / n, zero,
         -f * L * s.du_tail_da2, BodyPiece::TailLink);
  }
  return kin;
}

/// World-frame placement: body_pose is the pose of the body frame.
inline LinkConfiguration forward_kinematics(const ShapeState& alpha,
                                            const Pose2& body_pose,
                                            const SwimmerGeometry& geom) {
  const detail::MiddleFrameShape s(alpha, geom);
  const Pose2 offset = body_frame(alpha, geom);
  const Pose2 middle_world = body_pose * offset.inverse();
  const double L = geom.link_length;

  LinkConfiguration cfg;
  const Eigen::Vector2d mid_head = s.joint1 + 0.5 * L * s.u_head;
  const Eigen::Vector2d mid_tail = s.joint2 - 0.5 * L * s.u_tail;
  const Eigen::Vector2d wh = middle_world.apply(mid_head);
  const Eigen::Vector2d wt = middle_world.apply(mid_tail);
  cfg.link_poses[0] = {wh.x(), wh.y(),
                       normalize_angle(middle_world.theta + s.theta_head)};
  cfg.link_poses[1] = middle_world;
  cfg.link_poses[2] = {wt.x(), wt.y(),
                       normalize_angle(middle_world.theta + s.theta_tail)};

  const SegmentKinematics kin = compute_segment_kinematics(alpha, geom);
  cfg.segments.reserve(kin.segments.size());
  for (const auto& e : kin.segments) {
    Segment seg;
    seg.midpoint = body_pose.apply(e.r);
    seg.tangent = body_pose.rotate(e.tangent);
    seg.length = e.length;
    seg.piece = e.piece;
    cfg.segments.push_back(seg);
  }
  return cfg;
}

}  // namespace trilink
