#pragma once

// Independent reference implementations used as test oracles. They favour the
// textbook definitions over speed and share no code with the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// B_{j,p}(x) by the recursive definition on a knot vector; half-open support
// except that the last non-empty interval is closed on the right.
inline double bspline(const std::vector<double>& t, int j, int p, double x) {
  if (p == 0) {
    const double lo = t[static_cast<std::size_t>(j)];
    const double hi = t[static_cast<std::size_t>(j + 1)];
    if (lo <= x && x < hi) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double a = t[static_cast<std::size_t>(j + p)] - t[static_cast<std::size_t>(j)];
  const double b = t[static_cast<std::size_t>(j + p + 1)] - t[static_cast<std::size_t>(j + 1)];
  if (a > 0.0) out += (x - t[static_cast<std::size_t>(j)]) / a * bspline(t, j, p - 1, x);
  if (b > 0.0) out += (t[static_cast<std::size_t>(j + p + 1)] - x) / b * bspline(t, j + 1, p - 1, x);
  return out;
}

// Dense spline design with `d` columns. Points equal to the upper end of the
// range are nudged inside so the right-open recursion covers them.
inline Eigen::MatrixXd spline_design(const std::vector<double>& knots, int degree, double upper,
                                     const std::vector<double>& x) {
  const int d = static_cast<int>(knots.size()) - degree - 1;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(x.size()), d);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    if (xi >= upper) xi = std::nextafter(upper, -INFINITY);
    for (int j = 0; j < d; ++j) z(static_cast<Eigen::Index>(i), j) = bspline(knots, j, degree, xi);
  }
  return z;
}

inline Eigen::MatrixXd expand(const Eigen::MatrixXd& reduced, const std::vector<std::uint32_t>& index) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(index.size()), reduced.cols());
  for (std::size_t i = 0; i < index.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = reduced.row(index[i]);
  return z;
}

inline Eigen::MatrixXd diff2(int d) {
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(d - 2, d);
  for (int i = 0; i < d - 2; ++i) {
    delta(i, i) = 1.0;
    delta(i, i + 1) = -2.0;
    delta(i, i + 2) = 1.0;
  }
  return delta;
}

// Dense hat matrix S = Z (Z^T W Z + lambda D)^-1 Z^T W.
inline Eigen::MatrixXd hat(const Eigen::MatrixXd& z, const Eigen::MatrixXd& pen, double lambda,
                           const Eigen::VectorXd& w) {
  const Eigen::MatrixXd ztw = z.transpose() * w.asDiagonal();
  const Eigen::MatrixXd a = ztw * z + lambda * pen;
  return z * a.fullPivLu().solve(ztw);
}

inline double df1(const Eigen::MatrixXd& s) { return s.trace(); }
inline double df2(const Eigen::MatrixXd& s) { return (2.0 * s - s * s).trace(); }

inline Eigen::VectorXd penalized_ls(const Eigen::MatrixXd& z, const Eigen::MatrixXd& pen, double lambda,
                                    const Eigen::VectorXd& w, const Eigen::VectorXd& r) {
  const Eigen::MatrixXd ztw = z.transpose() * w.asDiagonal();
  return (ztw * z + lambda * pen).fullPivLu().solve(ztw * r);
}

// Index of the design point nearest to v among equally spaced points on
// [lo, hi]; exact ties go to the lower index. Linear scan.
inline std::uint32_t nearest(const std::vector<double>& points, double v) {
  std::uint32_t best = 0;
  for (std::uint32_t k = 1; k < points.size(); ++k) {
    if (std::abs(points[k] - v) < std::abs(points[best] - v)) best = k;
  }
  return best;
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cwb_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
