#include "cwb/binning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cwb/errors.hpp"

namespace cwb {

BinConfig BinConfig::fixed_bins(int k) {
  if (k < 2) throw ConfigError("fixed bin count must be >= 2, got " + std::to_string(k));
  return {Mode::Fixed, k};
}

std::optional<int> requested_bins(const BinConfig& config, std::size_t n) {
  const double nd = static_cast<double>(n);
  switch (config.mode) {
    case BinConfig::Mode::None:
      return std::nullopt;
    case BinConfig::Mode::SqrtN:
      return std::max(2, static_cast<int>(std::ceil(std::sqrt(nd))));
    case BinConfig::Mode::FourthRootN:
      return std::max(2, static_cast<int>(std::ceil(std::sqrt(std::sqrt(nd)))));
    case BinConfig::Mode::Fixed:
      return config.fixed;
  }
  return std::nullopt;
}

std::size_t count_distinct(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

BinPlan plan_bins(const BinConfig& config, std::span<const double> x) {
  BinPlan plan;
  plan.requested = requested_bins(config, x.size());
  if (!plan.requested) return plan;
  const auto distinct = count_distinct(x);
  if (distinct < 2) {
    plan.clamped = true;
    return plan;
  }
  const int cap = static_cast<int>(std::min<std::size_t>(distinct, static_cast<std::size_t>(INT32_MAX)));
  plan.effective = std::min(*plan.requested, cap);
  plan.clamped = *plan.effective != *plan.requested;
  return plan;
}

BinnedFeature build_bins(std::span<const double> x, int n_star) {
  if (x.size() < 2) throw ConfigError("binning needs at least 2 observations");
  if (n_star < 2) throw ConfigError("binning needs n* >= 2, got " + std::to_string(n_star));
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(lo < hi)) throw DegenerateFeatureError("cannot bin a constant feature");

  BinnedFeature out;
  out.design_points.resize(static_cast<std::size_t>(n_star));
  const double span = hi - lo;
  const double steps = static_cast<double>(n_star - 1);
  for (int i = 0; i < n_star; ++i) out.design_points[static_cast<std::size_t>(i)] = lo + (i / steps) * span;
  out.design_points.back() = hi;

  const auto& z = out.design_points;
  const std::size_t last = z.size() - 1;
  out.index.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = (x[i] - lo) / span * steps;
    auto l = static_cast<std::size_t>(std::clamp(std::ceil(t - 0.5), 0.0, steps));
    // The grid guess can be off by one through rounding; settle it on actual
    // distances with ties going to the lower bin.
    while (l > 0 && std::abs(x[i] - z[l - 1]) <= std::abs(x[i] - z[l])) --l;
    while (l < last && std::abs(x[i] - z[l + 1]) < std::abs(x[i] - z[l])) ++l;
    out.index[i] = static_cast<std::uint32_t>(l);
  }
  return out;
}

namespace {

void check_index(std::span<const std::uint32_t> index, Eigen::Index n_star) {
  for (auto k : index) {
    if (static_cast<Eigen::Index>(k) >= n_star) throw KernelError("bin index out of range");
  }
}

}  // namespace

void accumulate_bins(std::span<const double> r, std::span<const double> weights,
                     std::span<const std::uint32_t> index, std::span<double> bins) {
  std::fill(bins.begin(), bins.end(), 0.0);
  const std::size_t n = index.size();
  if (weights.empty()) {
    for (std::size_t i = 0; i < n; ++i) bins[index[i]] += r[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) bins[index[i]] += weights[i] * r[i];
  }
}

Eigen::MatrixXd bin_mat_mat(const Eigen::MatrixXd& reduced_design, std::span<const double> weights,
                            std::span<const std::uint32_t> index, KernelCounters* counters) {
  const Eigen::Index n_star = reduced_design.rows();
  const Eigen::Index d = reduced_design.cols();
  if (!weights.empty() && weights.size() != index.size()) {
    throw KernelError("weights length " + std::to_string(weights.size()) + " != index length " +
                      std::to_string(index.size()));
  }
  check_index(index, n_star);

  // Only the diagonal weight matters, so U = Z_b^T diag(bin weight sums)
  // folds every row into its bin once.
  std::vector<double> bin_weight(static_cast<std::size_t>(n_star), 0.0);
  if (weights.empty()) {
    for (auto k : index) bin_weight[k] += 1.0;
  } else {
    for (std::size_t i = 0; i < index.size(); ++i) bin_weight[index[i]] += weights[i];
  }
  Eigen::MatrixXd u(d, n_star);
  for (Eigen::Index b = 0; b < n_star; ++b) u.col(b) = bin_weight[static_cast<std::size_t>(b)] * reduced_design.row(b).transpose();
  if (counters != nullptr) {
    counters->accumulator_rows += index.size();
    counters->product_flops += static_cast<std::uint64_t>(n_star * d * d);
  }
  return u * reduced_design;
}

Eigen::VectorXd bin_mat_vec(const Eigen::MatrixXd& reduced_design, std::span<const double> r,
                            std::span<const double> weights, std::span<const std::uint32_t> index,
                            KernelCounters* counters) {
  const Eigen::Index n_star = reduced_design.rows();
  if (r.size() != index.size()) {
    throw KernelError("residual length " + std::to_string(r.size()) + " != index length " +
                      std::to_string(index.size()));
  }
  if (!weights.empty() && weights.size() != index.size()) throw KernelError("weights length mismatch");
  check_index(index, n_star);

  std::vector<double> u(static_cast<std::size_t>(n_star));
  accumulate_bins(r, weights, index, u);
  if (counters != nullptr) {
    counters->accumulator_rows += index.size();
    counters->product_flops += static_cast<std::uint64_t>(n_star * reduced_design.cols());
  }
  return reduced_design.transpose() * Eigen::Map<const Eigen::VectorXd>(u.data(), n_star);
}

}  // namespace cwb
