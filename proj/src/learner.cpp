#include "cwb/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cwb/errors.hpp"

namespace cwb {

const char* to_string(DfKind kind) { return kind == DfKind::Df1 ? "df1" : "df2"; }

DfKind df_kind_from_string(const std::string& s) {
  if (s == "df1") return DfKind::Df1;
  if (s == "df2") return DfKind::Df2;
  throw ConfigError("unknown df kind '" + s + "' (expected df1 or df2)");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Generalized eigenvalues below this are directions X^T W X does not see.
constexpr double kZeroEigen = 1e-12;

// Relative pivot size below which X^T W X counts as singular.
constexpr double kSingularPivot = 1e-13;

bool nearly_singular(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (llt.info() != Eigen::Success) return true;
  const Eigen::VectorXd piv = llt.matrixLLT().diagonal().array().square();
  if (piv.size() == 0) return false;
  return !(piv.minCoeff() > kSingularPivot * piv.maxCoeff());
}

double df_term(double s, double lambda, DfKind kind) {
  if (std::isinf(s)) return 1.0;
  if (s <= 0.0) return 0.0;
  if (kind == DfKind::Df1) return s / (s + lambda);
  const double denom = (s + lambda) * (s + lambda);
  return s * (s + 2.0 * lambda) / denom;
}

double solve_df(std::span<const double> s, double df_target, DfKind kind) {
  const auto d = static_cast<double>(s.size());
  double floor_df = 0.0;
  double ceil_df = 0.0;
  for (double v : s) {
    if (std::isinf(v)) floor_df += 1.0;
    if (std::isinf(v) || v > 0.0) ceil_df += 1.0;
  }
  if (!(df_target > floor_df) || df_target > d) {
    throw CalibrationError("df target " + std::to_string(df_target) + " outside (" + std::to_string(floor_df) +
                           ", " + std::to_string(d) + "]");
  }
  if (df_target >= ceil_df) {
    if (df_target == ceil_df) return 0.0;
    throw CalibrationError("df target " + std::to_string(df_target) + " exceeds attainable df " +
                           std::to_string(ceil_df));
  }

  // df is strictly decreasing in lambda on the penalized directions.
  double hi = 1.0;
  while (degrees_of_freedom(s, hi, kind) >= df_target) {
    hi *= 2.0;
    if (hi > 1e300) throw CalibrationError("could not bracket lambda for df target " + std::to_string(df_target));
  }
  double lo = 0.0;
  for (int it = 0; it < 4000 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (degrees_of_freedom(s, mid, kind) > df_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Z^T W Z and Z^T W r over rows with `width` consecutive non-zeros.
Eigen::MatrixXd sparse_gram(const SparseRows& z, std::span<const double> w, int d) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  const int k = z.width;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const int f = z.first[i];
    if (f < 0) continue;
    const double wi = w.empty() ? 1.0 : w[i];
    const double* v = z.values.data() + i * static_cast<std::size_t>(k);
    for (int a = 0; a < k; ++a) {
      const double wa = wi * v[a];
      for (int b = 0; b <= a; ++b) g(f + a, f + b) += wa * v[b];
    }
  }
  return g.selfadjointView<Eigen::Lower>();
}

Eigen::VectorXd sparse_rhs(const SparseRows& z, std::span<const double> r, std::span<const double> w, int d) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
  const int k = z.width;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const int f = z.first[i];
    if (f < 0) continue;
    const double ri = w.empty() ? r[i] : w[i] * r[i];
    const double* v = z.values.data() + i * static_cast<std::size_t>(k);
    for (int a = 0; a < k; ++a) u[f + a] += ri * v[a];
  }
  return u;
}

}  // namespace

DroSpectrum dro_eigenvalues(const Eigen::MatrixXd& xtwx, const PenaltyMatrix& penalty) {
  const Eigen::Index d = xtwx.rows();
  if (xtwx.cols() != d || penalty.dense.rows() != d || penalty.dense.cols() != d) {
    throw CalibrationError("dro_eigenvalues: dimension mismatch");
  }
  // Generalized eigenvalues mu of A v = mu (A + c D) v lie in [0, 1] and map
  // to s = c mu / (1 - mu). A + c D stays positive definite when A is singular
  // but D covers its null space, so no ridge is needed in that case.
  DroSpectrum out;
  const double tr_a = xtwx.trace();
  const double tr_d = penalty.dense.trace();
  const double c = tr_d > 0.0 && tr_a > 0.0 ? tr_a / tr_d : 1.0;
  Eigen::MatrixXd b = xtwx + c * penalty.dense;
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (nearly_singular(llt)) {
    out.jitter = 1e-10 * std::max(tr_a, 1e-300) / static_cast<double>(d);
    b.diagonal().array() += out.jitter;
    llt.compute(b);
    if (llt.info() != Eigen::Success) throw CalibrationError("X^T W X is not positive semidefinite");
  }

  const auto& l = llt.matrixL();
  Eigen::MatrixXd a = xtwx;
  if (out.jitter > 0.0) a.diagonal().array() += out.jitter;
  Eigen::MatrixXd tmp = l.solve(a);
  Eigen::MatrixXd m = l.solve(tmp.transpose());
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw CalibrationError("eigen decomposition failed");
  const Eigen::VectorXd mu = eig.eigenvalues();  // ascending

  out.s.resize(static_cast<std::size_t>(d));
  const int null_dim = std::clamp(penalty.nullspace_dim, 0, static_cast<int>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const double v = std::clamp(mu[i], 0.0, 1.0);
    double& s = out.s[static_cast<std::size_t>(i)];
    if (i >= d - null_dim || v >= 1.0) {
      s = kInf;
    } else if (v <= kZeroEigen) {
      s = 0.0;
    } else {
      s = c * v / (1.0 - v);
    }
  }
  return out;
}

double degrees_of_freedom(std::span<const double> s, double lambda, DfKind kind) {
  if (lambda < 0.0) throw CalibrationError("lambda must be >= 0");
  double df = 0.0;
  for (double v : s) df += df_term(v, lambda, kind);
  return df;
}

double df_to_lambda(std::span<const double> s, double df_target, DfKind kind) { return solve_df(s, df_target, kind); }

double categorical_df(std::span<const double> counts, double lambda, DfKind kind) {
  if (lambda < 0.0) throw CalibrationError("lambda must be >= 0");
  double df = 0.0;
  for (double n : counts) {
    if (n < 0.0) throw CalibrationError("negative class count");
    df += df_term(n, lambda, kind);
  }
  return df;
}

double categorical_df_to_lambda(std::span<const double> counts, double df_target, DfKind kind) {
  for (double n : counts) {
    if (n < 0.0) throw CalibrationError("negative class count");
  }
  return solve_df(counts, df_target, kind);
}

Residuals make_residuals(std::span<const double> r, std::span<const double> weights) {
  Residuals out{r, 0.0};
  if (weights.empty()) {
    for (double v : r) out.weighted_sum_sq += v * v;
  } else {
    for (std::size_t i = 0; i < r.size(); ++i) out.weighted_sum_sq += weights[i] * r[i] * r[i];
  }
  return out;
}

BaseLearner::BaseLearner(std::shared_ptr<const Basis> basis, const FeatureColumn& column,
                         std::shared_ptr<const std::vector<double>> weights, const LearnerOptions& options)
    : basis_(std::move(basis)), weights_(std::move(weights)), rows_(column.size()) {
  if (!basis_) throw ConfigError("learner needs a basis");
  if (column.name() != basis_->feature()) throw ConfigError("learner column does not match basis feature");
  if (weights_ && weights_->size() != rows_) throw ConfigError("weights length does not match rows");
  if (rows_ == 0) throw ConfigError("learner needs at least one row");
  const std::span<const double> w = weights_ ? std::span<const double>(*weights_) : std::span<const double>();
  penalty_ = basis_->penalty();
  df_target_ = options.df_target;
  const int d = basis_->dimension();

  switch (basis_->kind()) {
    case BasisKind::Linear:
    case BasisKind::PSpline: {
      const auto x = column.values();
      bin_plan_ = plan_bins(options.bins, x);
      if (bin_plan_.effective) {
        Binned b;
        b.bins = build_bins(x, *bin_plan_.effective);
        b.reduced = basis_->evaluate(b.bins.design_points);
        xtwx_ = bin_mat_mat(b.reduced, w, b.bins.index);
        design_ = std::move(b);
      } else {
        Sparse sparse{basis_->sparse_rows(x)};
        xtwx_ = sparse_gram(sparse.z, w, d);
        design_ = std::move(sparse);
      }
      calibrate_spectrum(options);
      factorize();
      break;
    }
    case BasisKind::CategoricalRidge: {
      Ridge ridge;
      const auto codes = basis_->map_codes(column);
      ridge.codes.resize(codes.size());
      std::vector<double> counts(static_cast<std::size_t>(d), 0.0);
      for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] < 1) throw ConfigError("training rows contain a level unknown to the basis");
        ridge.codes[i] = codes[i] - 1;
        counts[static_cast<std::size_t>(codes[i] - 1)] += w.empty() ? 1.0 : w[i];
      }
      xtwx_ = Eigen::Map<const Eigen::VectorXd>(counts.data(), d).asDiagonal();
      double attainable = 0.0;
      for (double c : counts) attainable += c > 0.0 ? 1.0 : 0.0;
      if (df_target_ >= attainable) {
        lambda_ = 0.0;
        df_capped_ = df_target_ > attainable;
      } else {
        lambda_ = categorical_df_to_lambda(counts, df_target_, options.df_kind);
      }
      df_ = categorical_df(counts, lambda_, options.df_kind);
      Eigen::VectorXd inv(d);
      for (int k = 0; k < d; ++k) {
        const double denom = counts[static_cast<std::size_t>(k)] + lambda_;
        inv[k] = denom > 0.0 ? 1.0 / denom : 0.0;
      }
      closed_form_ = std::move(inv);
      design_ = std::move(ridge);
      break;
    }
    case BasisKind::CategoricalBinary: {
      Indicator ind;
      const Eigen::MatrixXd z = basis_->design(column);
      double count = 0.0;
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (z(i, 0) != 0.0) {
          ind.rows.push_back(static_cast<std::uint32_t>(i));
          count += w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
        }
      }
      xtwx_ = Eigen::MatrixXd::Constant(1, 1, count);
      lambda_ = 0.0;
      df_ = count > 0.0 ? 1.0 : 0.0;
      df_capped_ = df_target_ > 1.0;
      closed_form_ = Eigen::VectorXd::Constant(1, count > 0.0 ? 1.0 / count : 0.0);
      design_ = std::move(ind);
      break;
    }
  }
}

void BaseLearner::calibrate_spectrum(const LearnerOptions& options) {
  const auto spectrum = dro_eigenvalues(xtwx_, penalty_);
  jitter_ = spectrum.jitter;
  const int d = basis_->dimension();
  int floor_df = 0;
  int attainable = 0;
  for (double v : spectrum.s) {
    floor_df += std::isinf(v) ? 1 : 0;
    attainable += std::isinf(v) || v > 0.0 ? 1 : 0;
  }
  if (floor_df >= d) {
    // unpenalized: lambda has no effect
    lambda_ = 0.0;
    df_capped_ = df_target_ > static_cast<double>(d);
  } else if (df_target_ < static_cast<double>(attainable)) {
    lambda_ = df_to_lambda(spectrum.s, df_target_, options.df_kind);
  } else if (attainable == d) {
    lambda_ = 0.0;
    df_capped_ = df_target_ > static_cast<double>(d);
  } else {
    // X^T W X is singular: df never exceeds its rank and lambda = 0 would
    // leave the system singular, so use a small ridge on the penalty.
    lambda_ = 1e-6 * std::max(xtwx_.trace(), 1e-300) / static_cast<double>(d);
    df_capped_ = df_target_ > static_cast<double>(attainable);
  }
  df_ = degrees_of_freedom(spectrum.s, lambda_, options.df_kind);
}

void BaseLearner::factorize() {
  Eigen::MatrixXd a = system_matrix();
  if (jitter_ > 0.0) a.diagonal().array() += jitter_;
  llt_.compute(a);
  if (nearly_singular(llt_)) {
    // The penalty does not cover X^T W X's null space; fall back to the same
    // jitter rule the spectrum uses.
    const double extra = 1e-10 * std::max(xtwx_.trace(), 1e-300) / static_cast<double>(a.rows());
    jitter_ += extra;
    a.diagonal().array() += extra;
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) throw CalibrationError("cannot factorize system for '" + basis_->label() + "'");
  }
}

bool BaseLearner::binned() const { return std::holds_alternative<Binned>(design_); }

Eigen::MatrixXd BaseLearner::system_matrix() const { return xtwx_ + lambda_ * penalty_.dense; }

Eigen::MatrixXd BaseLearner::cholesky_factor() const {
  if (closed_form_) return {};
  return llt_.matrixL();
}

Eigen::VectorXd BaseLearner::right_hand_side(std::span<const double> r) const {
  if (r.size() != rows_) throw FitError("residual length " + std::to_string(r.size()) + " != " + std::to_string(rows_));
  const std::span<const double> w = weights_ ? std::span<const double>(*weights_) : std::span<const double>();
  const int d = basis_->dimension();
  return std::visit(
      [&](const auto& des) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(des)>;
        if constexpr (std::is_same_v<T, Sparse>) {
          return sparse_rhs(des.z, r, w, d);
        } else if constexpr (std::is_same_v<T, Binned>) {
          return bin_mat_vec(des.reduced, r, w, des.bins.index);
        } else if constexpr (std::is_same_v<T, Ridge>) {
          Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
          if (w.empty()) {
            for (std::size_t i = 0; i < r.size(); ++i) u[des.codes[i]] += r[i];
          } else {
            for (std::size_t i = 0; i < r.size(); ++i) u[des.codes[i]] += w[i] * r[i];
          }
          return u;
        } else {
          double u = 0.0;
          if (w.empty()) {
            for (auto i : des.rows) u += r[i];
          } else {
            for (auto i : des.rows) u += w[i] * r[i];
          }
          return Eigen::VectorXd::Constant(1, u);
        }
      },
      design_);
}

FitResult BaseLearner::fit(const Residuals& r) const {
  const Eigen::VectorXd b = right_hand_side(r.values);
  if (!b.allFinite()) throw FitError("non-finite residuals for learner '" + basis_->label() + "'");
  FitResult out;
  if (closed_form_) {
    out.theta = closed_form_->cwiseProduct(b);
  } else {
    out.theta = llt_.solve(b);
  }
  // ||r||_W^2 - 2 theta^T Z^T W r + theta^T Z^T W Z theta, all in d dimensions.
  const double sse = r.weighted_sum_sq - 2.0 * out.theta.dot(b) + out.theta.dot(xtwx_ * out.theta);
  out.sse = std::max(sse, 0.0);
  return out;
}

void BaseLearner::add_fitted(const Eigen::VectorXd& theta, double scale, std::span<double> out) const {
  if (out.size() != rows_) throw FitError("output length does not match learner rows");
  if (theta.size() != basis_->dimension()) throw FitError("theta has wrong dimension");
  std::visit(
      [&](const auto& des) {
        using T = std::decay_t<decltype(des)>;
        if constexpr (std::is_same_v<T, Sparse>) {
          const Eigen::VectorXd st = scale * theta;
          const int k = des.z.width;
          const double* v = des.z.values.data();
          for (std::size_t i = 0; i < out.size(); ++i, v += k) {
            const int f = des.z.first[i];
            if (f < 0) continue;
            const double* t = st.data() + f;
            double acc = 0.0;
            for (int a = 0; a < k; ++a) acc += v[a] * t[a];
            out[i] += acc;
          }
        } else if constexpr (std::is_same_v<T, Binned>) {
          const Eigen::VectorXd fb = scale * (des.reduced * theta);
          const auto& idx = des.bins.index;
          for (std::size_t i = 0; i < out.size(); ++i) out[i] += fb[idx[i]];
        } else if constexpr (std::is_same_v<T, Ridge>) {
          const Eigen::VectorXd st = scale * theta;
          for (std::size_t i = 0; i < out.size(); ++i) out[i] += st[des.codes[i]];
        } else {
          const double v = scale * theta[0];
          for (auto i : des.rows) out[i] += v;
        }
      },
      design_);
}

std::size_t BaseLearner::memory_bytes() const {
  const auto d = static_cast<std::size_t>(basis_->dimension());
  std::size_t bytes = 3 * d * d * sizeof(double);  // xtwx, penalty, factor
  bytes += std::visit(
      [](const auto& des) -> std::size_t {
        using T = std::decay_t<decltype(des)>;
        if constexpr (std::is_same_v<T, Sparse>) {
          return des.z.values.size() * sizeof(double) + des.z.first.size() * sizeof(int);
        } else if constexpr (std::is_same_v<T, Binned>) {
          return des.bins.index.size() * sizeof(std::uint32_t) + des.bins.design_points.size() * sizeof(double) +
                 static_cast<std::size_t>(des.reduced.size()) * sizeof(double);
        } else if constexpr (std::is_same_v<T, Ridge>) {
          return des.codes.size() * sizeof(int);
        } else {
          return des.rows.size() * sizeof(std::uint32_t);
        }
      },
      design_);
  return bytes;
}

}  // namespace cwb
