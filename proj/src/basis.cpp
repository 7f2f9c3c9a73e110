#include "cwb/basis.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "cwb/errors.hpp"

namespace cwb {

const char* to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::Linear:
      return "linear";
    case BasisKind::PSpline:
      return "pspline";
    case BasisKind::CategoricalRidge:
      return "categorical_ridge";
    case BasisKind::CategoricalBinary:
      return "categorical_binary";
  }
  return "?";
}

BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "linear") return BasisKind::Linear;
  if (s == "pspline") return BasisKind::PSpline;
  if (s == "categorical_ridge") return BasisKind::CategoricalRidge;
  if (s == "categorical_binary") return BasisKind::CategoricalBinary;
  throw ConfigError("unknown basis kind '" + s + "'");
}

BasisSpec BasisSpec::linear(std::string feature) { return {BasisKind::Linear, std::move(feature), 0, 0, {}}; }

BasisSpec BasisSpec::pspline(std::string feature, int degree, int n_knots) {
  if (degree < 1) throw ConfigError("spline degree must be >= 1");
  if (n_knots < 2) throw ConfigError("spline needs n_knots >= 2");
  return {BasisKind::PSpline, std::move(feature), degree, n_knots, {}};
}

BasisSpec BasisSpec::categorical_ridge(std::string feature) {
  return {BasisKind::CategoricalRidge, std::move(feature), 0, 0, {}};
}

BasisSpec BasisSpec::categorical_binary(std::string feature, std::string level) {
  return {BasisKind::CategoricalBinary, std::move(feature), 0, 0, std::move(level)};
}

double SparseRows::dot(std::size_t row, const Eigen::VectorXd& theta) const {
  const int f = first[row];
  if (f < 0) return 0.0;
  const double* v = values.data() + row * static_cast<std::size_t>(width);
  double s = 0.0;
  for (int j = 0; j < width; ++j) s += v[j] * theta[f + j];
  return s;
}

Eigen::MatrixXd SparseRows::to_dense(int cols) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()), cols);
  for (std::size_t i = 0; i < rows(); ++i) {
    if (first[i] < 0) continue;
    for (int j = 0; j < width; ++j) out(static_cast<Eigen::Index>(i), first[i] + j) = values[i * width + j];
  }
  return out;
}

Basis Basis::fit(const BasisSpec& spec, const FeatureColumn& reference) {
  if (reference.name() != spec.feature) {
    throw ConfigError("basis for '" + spec.feature + "' fitted on column '" + reference.name() + "'");
  }
  switch (spec.kind) {
    case BasisKind::Linear:
    case BasisKind::PSpline: {
      if (!reference.is_numeric()) throw ConfigError("feature '" + spec.feature + "' is not numeric");
      const auto x = reference.values();
      if (x.empty()) throw ConfigError("feature '" + spec.feature + "' has no rows");
      const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
      return restore(spec, *lo, *hi, {});
    }
    case BasisKind::CategoricalRidge:
    case BasisKind::CategoricalBinary:
      if (!reference.is_categorical()) throw ConfigError("feature '" + spec.feature + "' is not categorical");
      return restore(spec, 0.0, 0.0, reference.categories().levels);
  }
  throw ConfigError("unhandled basis kind");
}

Basis Basis::restore(const BasisSpec& spec, double lower, double upper, std::vector<std::string> levels) {
  Basis b(spec);
  switch (spec.kind) {
    case BasisKind::Linear:
      b.lower_ = lower;
      b.upper_ = upper;
      b.dim_ = 2;
      break;
    case BasisKind::PSpline:
      if (spec.degree < 1 || spec.n_knots < 2) throw ConfigError("invalid spline spec for '" + spec.feature + "'");
      if (!(lower < upper)) {
        throw DegenerateFeatureError("spline basis needs a non-constant feature ('" + spec.feature + "')");
      }
      b.init_spline(lower, upper);
      break;
    case BasisKind::CategoricalRidge:
      if (levels.empty()) throw ConfigError("categorical basis needs levels");
      b.levels_ = std::move(levels);
      b.dim_ = static_cast<int>(b.levels_.size());
      break;
    case BasisKind::CategoricalBinary: {
      auto it = std::find(levels.begin(), levels.end(), spec.level);
      if (it == levels.end()) throw ConfigError("level '" + spec.level + "' not in feature '" + spec.feature + "'");
      b.binary_code_ = static_cast<int>(it - levels.begin()) + 1;
      b.levels_ = std::move(levels);
      b.dim_ = 1;
      break;
    }
  }
  return b;
}

void Basis::init_spline(double lower, double upper) {
  lower_ = lower;
  upper_ = upper;
  const int p = spec_.degree;
  const int intervals = spec_.n_knots;
  const double h = (upper - lower) / intervals;
  knots_.resize(static_cast<std::size_t>(intervals + 2 * p + 1));
  for (int i = 0; i < static_cast<int>(knots_.size()); ++i) knots_[static_cast<std::size_t>(i)] = lower + (i - p) * h;
  knots_[static_cast<std::size_t>(p)] = lower;
  knots_[static_cast<std::size_t>(p + intervals)] = upper;
  dim_ = intervals + p;
}

std::string Basis::label() const {
  switch (spec_.kind) {
    case BasisKind::Linear:
      return spec_.feature + "_linear";
    case BasisKind::PSpline:
      return spec_.feature + "_spline";
    case BasisKind::CategoricalRidge:
      return spec_.feature + "_ridge";
    case BasisKind::CategoricalBinary:
      return spec_.feature + "_" + spec_.level;
  }
  return spec_.feature;
}

int Basis::spline_row(double x, double* out) const {
  const int p = spec_.degree;
  const int intervals = spec_.n_knots;
  x = std::clamp(x, lower_, upper_);
  const double h = (upper_ - lower_) / intervals;
  int span = p + static_cast<int>(std::floor((x - lower_) / h));
  span = std::clamp(span, p, p + intervals - 1);
  while (span > p && x < knots_[static_cast<std::size_t>(span)]) --span;
  while (span < p + intervals - 1 && x >= knots_[static_cast<std::size_t>(span + 1)]) ++span;

  // Cox-de Boor recursion on the p + 1 functions that are non-zero on the span.
  double left[32];
  double right[32];
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots_[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
  return span - p;
}

Eigen::MatrixXd Basis::evaluate(std::span<const double> x) const {
  const auto n = static_cast<Eigen::Index>(x.size());
  switch (spec_.kind) {
    case BasisKind::Linear: {
      Eigen::MatrixXd z(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        z(i, 0) = 1.0;
        z(i, 1) = x[static_cast<std::size_t>(i)];
      }
      return z;
    }
    case BasisKind::PSpline: {
      if (spec_.degree > 30) throw ConfigError("spline degree too large");
      Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, dim_);
      double vals[32];
      for (Eigen::Index i = 0; i < n; ++i) {
        const int f = spline_row(x[static_cast<std::size_t>(i)], vals);
        for (int j = 0; j <= spec_.degree; ++j) z(i, f + j) = vals[j];
      }
      return z;
    }
    default:
      throw ConfigError("basis '" + label() + "' is categorical; evaluate codes instead");
  }
}

Eigen::MatrixXd Basis::evaluate_codes(std::span<const int> codes) const {
  const auto n = static_cast<Eigen::Index>(codes.size());
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, dim_);
  const int c = static_cast<int>(levels_.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int code = codes[static_cast<std::size_t>(i)];
    if (code < 1 || code > c) continue;
    if (spec_.kind == BasisKind::CategoricalRidge) {
      z(i, code - 1) = 1.0;
    } else if (spec_.kind == BasisKind::CategoricalBinary) {
      z(i, 0) = code == binary_code_ ? 1.0 : 0.0;
    } else {
      throw ConfigError("basis '" + label() + "' is numeric; evaluate values instead");
    }
  }
  return z;
}

std::vector<int> Basis::map_codes(const FeatureColumn& column) const {
  const auto& cat = column.categories();
  std::unordered_map<std::string, int> lookup;
  for (std::size_t k = 0; k < levels_.size(); ++k) lookup.emplace(levels_[k], static_cast<int>(k) + 1);
  std::vector<int> remap(cat.levels.size(), 0);
  for (std::size_t k = 0; k < cat.levels.size(); ++k) {
    if (auto it = lookup.find(cat.levels[k]); it != lookup.end()) remap[k] = it->second;
  }
  std::vector<int> out(cat.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = remap[static_cast<std::size_t>(cat.codes[i] - 1)];
  return out;
}

SparseRows Basis::sparse_rows(std::span<const double> x) const {
  SparseRows rows;
  const std::size_t n = x.size();
  rows.first.resize(n);
  if (spec_.kind == BasisKind::Linear) {
    rows.width = 2;
    rows.values.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      rows.first[i] = 0;
      rows.values[2 * i] = 1.0;
      rows.values[2 * i + 1] = x[i];
    }
    return rows;
  }
  if (spec_.kind != BasisKind::PSpline) throw ConfigError("basis '" + label() + "' is categorical");
  if (spec_.degree > 30) throw ConfigError("spline degree too large");
  rows.width = spec_.degree + 1;
  rows.values.resize(n * static_cast<std::size_t>(rows.width));
  for (std::size_t i = 0; i < n; ++i) rows.first[i] = spline_row(x[i], rows.values.data() + i * rows.width);
  return rows;
}

SparseRows Basis::sparse_rows(const FeatureColumn& column) const {
  if (column.name() != spec_.feature) throw ConfigError("column '" + column.name() + "' does not match basis");
  if (is_numeric()) {
    if (!column.is_numeric()) throw PredictionError("feature '" + spec_.feature + "' must be numeric");
    return sparse_rows(column.values());
  }
  if (!column.is_categorical()) throw PredictionError("feature '" + spec_.feature + "' must be categorical");
  const auto codes = map_codes(column);
  SparseRows rows;
  rows.width = 1;
  rows.first.resize(codes.size());
  rows.values.assign(codes.size(), 1.0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (spec_.kind == BasisKind::CategoricalRidge) {
      rows.first[i] = codes[i] - 1;  // unseen level (0) becomes -1
    } else {
      rows.first[i] = codes[i] == binary_code_ ? 0 : -1;
    }
  }
  return rows;
}

Eigen::MatrixXd Basis::design(const FeatureColumn& column) const {
  if (is_numeric()) return evaluate(column.values());
  return evaluate_codes(map_codes(column));
}

Eigen::MatrixXd second_difference(int d) {
  if (d < 3) throw ConfigError("second differences need d >= 3");
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(d - 2, d);
  for (int i = 0; i < d - 2; ++i) {
    delta(i, i) = 1.0;
    delta(i, i + 1) = -2.0;
    delta(i, i + 2) = 1.0;
  }
  return delta;
}

PenaltyMatrix Basis::penalty() const {
  switch (spec_.kind) {
    case BasisKind::PSpline: {
      const Eigen::MatrixXd delta = second_difference(dim_);
      return {delta.transpose() * delta, 2};
    }
    case BasisKind::CategoricalRidge:
      return {Eigen::MatrixXd::Identity(dim_, dim_), 0};
    case BasisKind::Linear:
    case BasisKind::CategoricalBinary:
      return {Eigen::MatrixXd::Zero(dim_, dim_), dim_};
  }
  return {};
}

}  // namespace cwb
