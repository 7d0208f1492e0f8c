#pragma once

#include <Eigen/Core>
#include <cmath>

namespace trilink {

/// Wrap an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

/// Planar rigid-body pose: translation (x, y) in metres plus heading theta
/// in radians. Heading is kept normalized to (-pi, pi] by every operation
/// that can change it.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  static Pose2 identity() { return {}; }

  Eigen::Vector2d translation() const { return {x, y}; }
  Eigen::Matrix2d rotation() const {
    const double c = std::cos(theta), s = std::sin(theta);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }

  /// Map a point expressed in this frame into the parent frame.
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
  }

  /// Rotate a free vector (no translation) into the parent frame.
  Eigen::Vector2d rotate(const Eigen::Vector2d& v) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
  }

  /// Frame composition: (a * b) maps b's coordinates through a.
  friend Pose2 operator*(const Pose2& a, const Pose2& b) {
    const Eigen::Vector2d t = a.apply({b.x, b.y});
    return {t.x(), t.y(), normalize_angle(a.theta + b.theta)};
  }

  Pose2 inverse() const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {-(c * x + s * y), -(-s * x + c * y), normalize_angle(-theta)};
  }
};

/// Exponential of a constant body twist (vx, vy, omega) applied for time dt:
/// the relative pose reached by a frame moving with that twist.
inline Pose2 se2_exp(const Eigen::Vector3d& twist, double dt) {
  const double wx = twist.x() * dt;
  const double wy = twist.y() * dt;
  const double th = twist.z() * dt;
  double s_over, one_minus_c_over;
  if (std::abs(th) < 1e-8) {
    // series expansion of sin(th)/th and (1-cos(th))/th
    s_over = 1.0 - th * th / 6.0;
    one_minus_c_over = th / 2.0 - th * th * th / 24.0;
  } else {
    s_over = std::sin(th) / th;
    one_minus_c_over = (1.0 - std::cos(th)) / th;
  }
  return {s_over * wx - one_minus_c_over * wy,
          one_minus_c_over * wx + s_over * wy,
          normalize_angle(th)};
}

}  // namespace trilink
