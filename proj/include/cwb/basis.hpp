#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cwb/data.hpp"

namespace cwb {

enum class BasisKind { Linear, PSpline, CategoricalRidge, CategoricalBinary };

const char* to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& s);

struct BasisSpec {
  BasisKind kind = BasisKind::PSpline;
  std::string feature;
  int degree = 3;     // PSpline only
  int n_knots = 20;   // PSpline only: number of equal intervals over the feature range
  std::string level;  // CategoricalBinary only: the class this learner indicates

  static BasisSpec linear(std::string feature);
  static BasisSpec pspline(std::string feature, int degree = 3, int n_knots = 20);
  static BasisSpec categorical_ridge(std::string feature);
  static BasisSpec categorical_binary(std::string feature, std::string level);
};

struct PenaltyMatrix {
  Eigen::MatrixXd dense;
  int nullspace_dim = 0;
};

// Rows with a fixed number of consecutive non-zeros: row i is `width` values
// starting at column first[i]. first[i] < 0 marks an all-zero row.
struct SparseRows {
  int width = 0;
  std::vector<int> first;
  std::vector<double> values;

  std::size_t rows() const { return first.size(); }
  double dot(std::size_t row, const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd to_dense(int cols) const;
};

// A basis g_k bound to the metadata it learned from reference data: knot
// vector and range for splines, level list for categorical features. The same
// object is used for training and prediction so both see identical columns.
class Basis {
 public:
  static Basis fit(const BasisSpec& spec, const FeatureColumn& reference);

  // Splines: rebuild from a stored range. Categorical: from stored levels.
  static Basis restore(const BasisSpec& spec, double lower, double upper, std::vector<std::string> levels);

  const BasisSpec& spec() const { return spec_; }
  BasisKind kind() const { return spec_.kind; }
  const std::string& feature() const { return spec_.feature; }
  int dimension() const { return dim_; }
  bool is_numeric() const { return spec_.kind == BasisKind::Linear || spec_.kind == BasisKind::PSpline; }
  std::string label() const;

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<std::string>& levels() const { return levels_; }

  // Numeric kinds only. Spline inputs are clamped to [lower, upper].
  Eigen::MatrixXd evaluate(std::span<const double> x) const;
  // Categorical kinds only; codes are 1-based into levels(), 0 = unseen level.
  Eigen::MatrixXd evaluate_codes(std::span<const int> codes) const;
  // Translates a column's own codes to this basis' level numbering.
  std::vector<int> map_codes(const FeatureColumn& column) const;

  SparseRows sparse_rows(const FeatureColumn& column) const;
  SparseRows sparse_rows(std::span<const double> x) const;
  Eigen::MatrixXd design(const FeatureColumn& column) const;

  PenaltyMatrix penalty() const;

 private:
  explicit Basis(BasisSpec spec) : spec_(std::move(spec)) {}
  void init_spline(double lower, double upper);
  // Non-zero B-spline values at x: returns the first basis index and fills
  // degree + 1 values.
  int spline_row(double x, double* out) const;

  BasisSpec spec_;
  int dim_ = 0;
  double lower_ = 0.0;
  double upper_ = 0.0;
  std::vector<double> knots_;
  std::vector<std::string> levels_;
  int binary_code_ = 0;
};

// Second-order difference matrix of size (d - 2) x d.
Eigen::MatrixXd second_difference(int d);

}  // namespace cwb
