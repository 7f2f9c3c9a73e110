#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "cwb/basis.hpp"
#include "cwb/binning.hpp"
#include "cwb/data.hpp"

namespace cwb {

// df1 = tr(H), df2 = tr(2H - H^2).
enum class DfKind { Df1, Df2 };

const char* to_string(DfKind kind);
DfKind df_kind_from_string(const std::string& s);

// Demmler-Reinsch spectrum of a penalized least-squares problem. Directions
// in the penalty null space carry s = +inf and contribute exactly 1 to any df.
struct DroSpectrum {
  std::vector<double> s;
  double jitter = 0.0;  // ridge added to X^T W X when it was singular
};

DroSpectrum dro_eigenvalues(const Eigen::MatrixXd& xtwx, const PenaltyMatrix& penalty);

double degrees_of_freedom(std::span<const double> s, double lambda, DfKind kind);

// Monotone root search for df(lambda) = target. Requires
// nullspace_dim < target <= d; target == d returns 0.
double df_to_lambda(std::span<const double> s, double df_target, DfKind kind);

// Closed-form df of a one-hot ridge learner with class counts n_k.
double categorical_df(std::span<const double> counts, double lambda, DfKind kind);
double categorical_df_to_lambda(std::span<const double> counts, double df_target, DfKind kind);

struct LearnerOptions {
  double df_target = 5.0;
  DfKind df_kind = DfKind::Df1;
  BinConfig bins;
};

struct FitResult {
  Eigen::VectorXd theta;
  double sse = 0.0;
};

// Pseudo residuals handed to every candidate in one iteration, together with
// their (weighted) sum of squares so each learner can score its SSE without
// another pass over the rows.
struct Residuals {
  std::span<const double> values;
  double weighted_sum_sq = 0.0;
};

Residuals make_residuals(std::span<const double> r, std::span<const double> weights);

// Penalized univariate base learner with its penalty calibrated to a target
// df and the factorization of (Z^T W Z + lambda D) cached once.
class BaseLearner {
 public:
  BaseLearner(std::shared_ptr<const Basis> basis, const FeatureColumn& column,
              std::shared_ptr<const std::vector<double>> weights, const LearnerOptions& options);

  FitResult fit(const Residuals& r) const;

  // out[i] += scale * b(x_i, theta) over the rows the learner was built on.
  void add_fitted(const Eigen::VectorXd& theta, double scale, std::span<double> out) const;

  // Z^T W r through the representation's kernel.
  Eigen::VectorXd right_hand_side(std::span<const double> r) const;
  // Z^T W Z + lambda D, before any jitter.
  Eigen::MatrixXd system_matrix() const;

  const Basis& basis() const { return *basis_; }
  const std::shared_ptr<const Basis>& basis_ptr() const { return basis_; }
  std::size_t rows() const { return rows_; }
  int dimension() const { return basis_->dimension(); }

  double lambda() const { return lambda_; }
  double df_target() const { return df_target_; }
  double df() const { return df_; }          // achieved df at lambda()
  bool df_capped() const { return df_capped_; }  // target unreachable; lambda forced to 0
  double jitter() const { return jitter_; }
  const BinPlan& bin_plan() const { return bin_plan_; }
  bool binned() const;

  const Eigen::MatrixXd& xtwx() const { return xtwx_; }
  const PenaltyMatrix& penalty() const { return penalty_; }
  // Lower-triangular factor L with L L^T = xtwx + lambda D (+ jitter I).
  // Empty for the closed-form categorical learners.
  Eigen::MatrixXd cholesky_factor() const;
  // diag((n_k + lambda)^-1) for the ridge-categorical fast path.
  const std::optional<Eigen::VectorXd>& closed_form() const { return closed_form_; }

  std::size_t memory_bytes() const;

 private:
  struct Sparse {
    SparseRows z;
  };
  struct Binned {
    BinnedFeature bins;
    Eigen::MatrixXd reduced;
  };
  struct Ridge {
    std::vector<int> codes;  // 0-based
  };
  struct Indicator {
    std::vector<std::uint32_t> rows;
  };

  void calibrate_spectrum(const LearnerOptions& options);
  void factorize();

  std::shared_ptr<const Basis> basis_;
  std::shared_ptr<const std::vector<double>> weights_;
  std::size_t rows_ = 0;
  std::variant<Sparse, Binned, Ridge, Indicator> design_;
  BinPlan bin_plan_;

  PenaltyMatrix penalty_;
  Eigen::MatrixXd xtwx_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::optional<Eigen::VectorXd> closed_form_;
  double lambda_ = 0.0;
  double df_target_ = 0.0;
  double df_ = 0.0;
  bool df_capped_ = false;
  double jitter_ = 0.0;
};

}  // namespace cwb
