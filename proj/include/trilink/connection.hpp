#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "trilink/errors.hpp"
#include "trilink/geometry.hpp"
#include "trilink/media.hpp"
#include "trilink/solver.hpp"

// Quasi-static kinematics: the local connection A(alpha) maps joint rates to
// the body velocity that makes the net environmental wrench vanish. Fields of
// A over shape space and their curl (the height function) support first-order
// displacement prediction by line and surface integrals.

namespace trilink {

/// Regular square lattice over [-limit, +limit]^2 in shape space.
struct GridSpec {
  int resolution = 101;
  double limit = 37.5 * M_PI / 180.0;

  void validate() const {
    if (resolution < 11) throw Error("grid resolution must be >= 11");
    if (!(limit > 0.0)) throw Error("grid limit must be positive");
  }

  double spacing() const { return 2.0 * limit / (resolution - 1); }
  double coord(int i) const { return -limit + i * spacing(); }
  ShapeState node(int i, int j) const { return {coord(i), coord(j)}; }
};

/// Local connection at one shape: column k is the equilibrium body velocity
/// for a unit rate of joint k.
inline Eigen::Matrix<double, 3, 2> solve_local_connection(
    const ShapeState& alpha, const Medium& medium, const SwimmerGeometry& geom,
    double tol = 1e-9, int max_iter = 100) {
  const SegmentKinematics kin = compute_segment_kinematics(alpha, geom);
  Eigen::Matrix<double, 3, 2> a;
  a.col(0) = solve_body_velocity(kin, {1.0, 0.0}, medium, tol, max_iter);
  a.col(1) = solve_body_velocity(kin, {0.0, 1.0}, medium, tol, max_iter);
  return a;
}

/// Local connection sampled on a grid. Stored row-major in i (alpha1 index).
struct ConnectionField {
  GridSpec grid;
  double body_length = 0.0;
  std::vector<Eigen::Matrix<double, 3, 2>> nodes;

  const Eigen::Matrix<double, 3, 2>& at(int i, int j) const {
    return nodes[static_cast<std::size_t>(i) * grid.resolution + j];
  }
  Eigen::Matrix<double, 3, 2>& at(int i, int j) {
    return nodes[static_cast<std::size_t>(i) * grid.resolution + j];
  }

  /// Bilinear interpolation; alpha is clamped to the grid box.
  Eigen::Matrix<double, 3, 2> interpolate(const ShapeState& alpha) const {
    const double h = grid.spacing();
    const double fx = std::clamp((alpha.alpha1 + grid.limit) / h, 0.0,
                                 static_cast<double>(grid.resolution - 1));
    const double fy = std::clamp((alpha.alpha2 + grid.limit) / h, 0.0,
                                 static_cast<double>(grid.resolution - 1));
    const int i = std::min(static_cast<int>(fx), grid.resolution - 2);
    const int j = std::min(static_cast<int>(fy), grid.resolution - 2);
    const double u = fx - i, v = fy - j;
    return (1 - u) * (1 - v) * at(i, j) + u * (1 - v) * at(i + 1, j) +
           (1 - u) * v * at(i, j + 1) + u * v * at(i + 1, j + 1);
  }
};

/// Evaluate the connection on every grid node. Nodes are independent, so the
/// work is split across threads; results do not depend on the partition.
inline ConnectionField build_connection_field(const Medium& medium,
                                              const SwimmerGeometry& geom,
                                              const GridSpec& grid,
                                              int threads = 0,
                                              double tol = 1e-9) {
  grid.validate();
  ConnectionField field;
  field.grid = grid;
  field.body_length = geom.body_length();
  const int n = grid.resolution;
  field.nodes.resize(static_cast<std::size_t>(n) * n);

  int n_threads = threads > 0
                      ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, n));

  std::mutex error_mutex;
  std::optional<NonConvergenceError> first_error;
  auto worker = [&](int row_begin, int row_end) {
    for (int i = row_begin; i < row_end; ++i) {
      for (int j = 0; j < n; ++j) {
        try {
          field.at(i, j) =
              solve_local_connection(grid.node(i, j), medium, geom, tol);
        } catch (const NonConvergenceError& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = e;
          return;
        }
      }
    }
  };

  if (n_threads == 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const int b = t * chunk;
      if (b >= n) break;
      pool.emplace_back(worker, b, std::min(n, b + chunk));
    }
    for (auto& th : pool) th.join();
  }
  if (first_error) throw *first_error;
  return field;
}

/// Curl of each row of the connection over shape space. Units follow the
/// connection: metres per rad^2 for the x and y rows, 1/rad^2 ... rad for the
/// rotational row. Values are never display-scaled here.
struct HeightFunction {
  GridSpec grid;
  double body_length = 0.0;
  std::vector<Eigen::Vector3d> nodes;

  const Eigen::Vector3d& at(int i, int j) const {
    return nodes[static_cast<std::size_t>(i) * grid.resolution + j];
  }
  Eigen::Vector3d& at(int i, int j) {
    return nodes[static_cast<std::size_t>(i) * grid.resolution + j];
  }

  Eigen::Vector3d interpolate(const ShapeState& alpha) const {
    const double h = grid.spacing();
    const double fx = std::clamp((alpha.alpha1 + grid.limit) / h, 0.0,
                                 static_cast<double>(grid.resolution - 1));
    const double fy = std::clamp((alpha.alpha2 + grid.limit) / h, 0.0,
                                 static_cast<double>(grid.resolution - 1));
    const int i = std::min(static_cast<int>(fx), grid.resolution - 2);
    const int j = std::min(static_cast<int>(fy), grid.resolution - 2);
    const double u = fx - i, v = fy - j;
    return (1 - u) * (1 - v) * at(i, j) + u * (1 - v) * at(i + 1, j) +
           (1 - u) * v * at(i, j + 1) + u * v * at(i + 1, j + 1);
  }

  /// Build from an analytic function (i, j node values); used by tests and
  /// synthetic studies.
  static HeightFunction from_function(
      const GridSpec& grid, double body_length,
      const std::function<Eigen::Vector3d(const ShapeState&)>& f) {
    HeightFunction hf;
    hf.grid = grid;
    hf.body_length = body_length;
    hf.nodes.resize(static_cast<std::size_t>(grid.resolution) *
                    grid.resolution);
    for (int i = 0; i < grid.resolution; ++i)
      for (int j = 0; j < grid.resolution; ++j)
        hf.at(i, j) = f(grid.node(i, j));
    return hf;
  }
};

/// Row-wise curl d(A_.2)/d(alpha1) - d(A_.1)/d(alpha2) by centered finite
/// differences, second-order one-sided stencils at the grid boundary.
inline HeightFunction height_function(const ConnectionField& field) {
  const int n = field.grid.resolution;
  const double h = field.grid.spacing();
  HeightFunction hf;
  hf.grid = field.grid;
  hf.body_length = field.body_length;
  hf.nodes.resize(static_cast<std::size_t>(n) * n);

  auto d_di = [&](int i, int j, int col) -> Eigen::Vector3d {
    if (i > 0 && i < n - 1)
      return (field.at(i + 1, j).col(col) - field.at(i - 1, j).col(col)) /
             (2.0 * h);
    if (i == 0)
      return (-3.0 * field.at(0, j).col(col) + 4.0 * field.at(1, j).col(col) -
              field.at(2, j).col(col)) /
             (2.0 * h);
    return (3.0 * field.at(n - 1, j).col(col) -
            4.0 * field.at(n - 2, j).col(col) + field.at(n - 3, j).col(col)) /
           (2.0 * h);
  };
  auto d_dj = [&](int i, int j, int col) -> Eigen::Vector3d {
    if (j > 0 && j < n - 1)
      return (field.at(i, j + 1).col(col) - field.at(i, j - 1).col(col)) /
             (2.0 * h);
    if (j == 0)
      return (-3.0 * field.at(i, 0).col(col) + 4.0 * field.at(i, 1).col(col) -
              field.at(i, 2).col(col)) /
             (2.0 * h);
    return (3.0 * field.at(i, n - 1).col(col) -
            4.0 * field.at(i, n - 2).col(col) + field.at(i, n - 3).col(col)) /
           (2.0 * h);
  };

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      hf.at(i, j) = d_di(i, j, 1) - d_dj(i, j, 0);
  return hf;
}

/// Closed sampled trajectory in shape space; points.front() == points.back().
struct GaitPath {
  std::vector<Eigen::Vector2d> points;
  double period = 10.0; // [s]

  std::size_t num_edges() const {
    return points.empty() ? 0 : points.size() - 1;
  }

  static GaitPath circle(const Eigen::Vector2d& center, double radius,
                         int samples = 400, double period = 10.0,
                         double phase = 0.0) {
    GaitPath p;
    p.period = period;
    p.points.reserve(samples + 1);
    for (int k = 0; k <= samples; ++k) {
      const double t = phase + 2.0 * M_PI * k / samples;
      p.points.emplace_back(center.x() + radius * std::cos(t),
                            center.y() + radius * std::sin(t));
    }
    p.points.back() = p.points.front();
    return p;
  }

  GaitPath mirrored() const {
    GaitPath m = *this;
    for (auto& p : m.points) p = -p;
    return m;
  }

  GaitPath reversed() const {
    GaitPath r = *this;
    std::reverse(r.points.begin(), r.points.end());
    return r;
  }

  double arc_length() const {
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < points.size(); ++k)
      s += (points[k + 1] - points[k]).norm();
    return s;
  }

  double signed_area() const {
    double a = 0.0;
    for (std::size_t k = 0; k + 1 < points.size(); ++k)
      a += points[k].x() * points[k + 1].y() -
           points[k + 1].x() * points[k].y();
    return 0.5 * a;
  }

  /// Uniform-arc-length resampling to m edges (m+1 stored points).
  GaitPath resampled(int m) const {
    GaitPath out;
    out.period = period;
    const double total = arc_length();
    out.points.reserve(m + 1);
    if (total <= 0.0 || points.size() < 2) {
      out.points.assign(m + 1, points.empty() ? Eigen::Vector2d::Zero().eval()
                                              : points.front());
      return out;
    }
    std::size_t seg = 0;
    double seg_start = 0.0;
    double seg_len = (points[1] - points[0]).norm();
    for (int k = 0; k < m; ++k) {
      const double target = total * k / m;
      while (seg + 2 < points.size() && seg_start + seg_len < target) {
        seg_start += seg_len;
        ++seg;
        seg_len = (points[seg + 1] - points[seg]).norm();
      }
      const double f =
          seg_len > 0.0 ? std::clamp((target - seg_start) / seg_len, 0.0, 1.0)
                        : 0.0;
      out.points.push_back(points[seg] + f * (points[seg + 1] - points[seg]));
    }
    out.points.push_back(out.points.front());
    return out;
  }
};

/// Net displacement over one gait cycle; dx and dy are in body lengths,
/// dtheta in radians.
struct Displacement {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
};

enum class LineIntegralMode { first_order, exact_se2 };

/// Line integral of the connection along a closed path. first_order sums the
/// body-frame increments A(alpha) dalpha; exact_se2 composes them as rigid
/// motions and reports the net pose relative to the starting frame.
inline Displacement displacement_line_integral(const GaitPath& path,
                                               const Medium& medium,
                                               const SwimmerGeometry& geom,
                                               LineIntegralMode mode,
                                               double tol = 1e-9) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Pose2 g = Pose2::identity();
  for (std::size_t k = 0; k + 1 < path.points.size(); ++k) {
    const Eigen::Vector2d mid = 0.5 * (path.points[k] + path.points[k + 1]);
    const Eigen::Vector2d dalpha = path.points[k + 1] - path.points[k];
    const auto a =
        solve_local_connection(ShapeState::from_vec(mid), medium, geom, tol);
    const Eigen::Vector3d incr = a * dalpha;
    if (mode == LineIntegralMode::first_order)
      sum += incr;
    else
      g = g * se2_exp(incr, 1.0);
  }
  const double bl = geom.body_length();
  if (mode == LineIntegralMode::first_order)
    return {sum.x() / bl, sum.y() / bl, sum.z()};
  return {g.x / bl, g.y / bl, g.theta};
}

namespace detail {

inline bool point_in_polygon(const Eigen::Vector2d& p,
                             const std::vector<Eigen::Vector2d>& poly) {
  bool inside = false;
  for (std::size_t k = 0; k + 1 < poly.size(); ++k) {
    const auto& a = poly[k];
    const auto& b = poly[k + 1];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double xint =
          a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
      if (p.x() < xint) inside = !inside;
    }
  }
  return inside;
}

inline bool segments_cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                           const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  auto orient = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                   const Eigen::Vector2d& r) {
    const double v =
        (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
    return (v > 0.0) - (v < 0.0);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

inline bool path_self_intersects(const std::vector<Eigen::Vector2d>& pts) {
  const std::size_t m = pts.empty() ? 0 : pts.size() - 1; // edges
  for (std::size_t i = 0; i + 1 < m; ++i) {
    for (std::size_t j = i + 2; j < m; ++j) {
      if (i == 0 && j == m - 1) continue; // closing edge shares a vertex
      if (segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1])) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Surface integral of the height function over the region enclosed by a
/// simple closed path. Fully interior cells use the exact integral of the
/// bilinear interpolant; cells touched by the boundary are subsampled.
/// Counterclockwise paths count positive area.
inline Displacement displacement_surface_integral(const GaitPath& path,
                                                  const HeightFunction& hf) {
  if (path.points.size() < 4)
    return {};
  if (detail::path_self_intersects(path.points))
    throw SelfIntersectingPathError("gait path crosses itself");

  const double orientation = path.signed_area() >= 0.0 ? 1.0 : -1.0;
  const int n = hf.grid.resolution;
  const double h = hf.grid.spacing();
  const double lim = hf.grid.limit;

  // cells touched by any path edge are integrated by subsampling
  std::vector<char> boundary(static_cast<std::size_t>(n - 1) * (n - 1), 0);
  auto cell_index = [&](double x) {
    return std::clamp(static_cast<int>(std::floor((x + lim) / h)), 0, n - 2);
  };
  for (std::size_t k = 0; k + 1 < path.points.size(); ++k) {
    const auto& a = path.points[k];
    const auto& b = path.points[k + 1];
    const int i0 = cell_index(std::min(a.x(), b.x()));
    const int i1 = cell_index(std::max(a.x(), b.x()));
    const int j0 = cell_index(std::min(a.y(), b.y()));
    const int j1 = cell_index(std::max(a.y(), b.y()));
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j)
        boundary[static_cast<std::size_t>(i) * (n - 1) + j] = 1;
  }

  constexpr int kSub = 8;
  Eigen::Vector3d total = Eigen::Vector3d::Zero();
  for (int i = 0; i < n - 1; ++i) {
    for (int j = 0; j < n - 1; ++j) {
      const double x0 = hf.grid.coord(i), y0 = hf.grid.coord(j);
      if (!boundary[static_cast<std::size_t>(i) * (n - 1) + j]) {
        const Eigen::Vector2d center{x0 + 0.5 * h, y0 + 0.5 * h};
        if (detail::point_in_polygon(center, path.points)) {
          const Eigen::Vector3d mean =
              0.25 * (hf.at(i, j) + hf.at(i + 1, j) + hf.at(i, j + 1) +
                      hf.at(i + 1, j + 1));
          total += mean * h * h;
        }
        continue;
      }
      const double da = h / kSub;
      for (int si = 0; si < kSub; ++si) {
        for (int sj = 0; sj < kSub; ++sj) {
          const Eigen::Vector2d p{x0 + (si + 0.5) * da, y0 + (sj + 0.5) * da};
          if (detail::point_in_polygon(p, path.points))
            total += hf.interpolate({p.x(), p.y()}) * da * da;
        }
      }
    }
  }
  total *= orientation;
  const double bl = hf.body_length;
  return {total.x() / bl, total.y() / bl, total.z()};
}

}  // namespace trilink
