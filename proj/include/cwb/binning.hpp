#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cwb {

// How many design points a numeric feature gets.
struct BinConfig {
  enum class Mode { None, SqrtN, FourthRootN, Fixed };
  Mode mode = Mode::None;
  int fixed = 0;  // used when mode == Fixed; must be >= 2

  static BinConfig none() { return {}; }
  static BinConfig sqrt_n() { return {Mode::SqrtN, 0}; }
  static BinConfig fourth_root_n() { return {Mode::FourthRootN, 0}; }
  static BinConfig fixed_bins(int k);
};

// Requested n* for a feature of length n (before clamping), or nullopt when
// binning is off.
std::optional<int> requested_bins(const BinConfig& config, std::size_t n);

struct BinPlan {
  std::optional<int> requested;
  std::optional<int> effective;  // nullopt: feature stays unbinned
  bool clamped = false;
};

// Clamps the request to the number of distinct values; fewer than two
// distinct values disables binning.
BinPlan plan_bins(const BinConfig& config, std::span<const double> x);

std::size_t count_distinct(std::span<const double> x);

// Equally spaced design points plus the 0-based index of each observation's
// nearest design point. A value exactly halfway between two points goes to
// the lower one.
struct BinnedFeature {
  std::vector<double> design_points;
  std::vector<std::uint32_t> index;
};

BinnedFeature build_bins(std::span<const double> x, int n_star);

// Instrumentation for the accumulator kernels; the counters are only touched
// when a pointer is handed in.
struct KernelCounters {
  std::uint64_t accumulator_rows = 0;  // rows folded into U or u
  std::uint64_t product_flops = 0;     // multiply-adds in the final product
};

// Z^T W Z for the expanded design whose row i is reduced_design.row(index[i]).
// Empty `weights` means all ones.
Eigen::MatrixXd bin_mat_mat(const Eigen::MatrixXd& reduced_design, std::span<const double> weights,
                            std::span<const std::uint32_t> index, KernelCounters* counters = nullptr);

// Z^T W r for the same expanded design.
Eigen::VectorXd bin_mat_vec(const Eigen::MatrixXd& reduced_design, std::span<const double> r,
                            std::span<const double> weights, std::span<const std::uint32_t> index,
                            KernelCounters* counters = nullptr);

// Bin sums of w * r; the first half of bin_mat_vec. Exposed so callers can
// reuse the buffer.
void accumulate_bins(std::span<const double> r, std::span<const double> weights,
                     std::span<const std::uint32_t> index, std::span<double> bins);

}  // namespace cwb
