#include "cwb/loss.hpp"

#include <algorithm>
#include <cmath>

#include "cwb/errors.hpp"

namespace cwb {

const char* to_string(LossKind kind) { return kind == LossKind::SquaredError ? "l2" : "bernoulli"; }

LossKind loss_from_string(const std::string& s) {
  if (s == "l2" || s == "squared_error") return LossKind::SquaredError;
  if (s == "bernoulli") return LossKind::Bernoulli;
  throw ConfigError("unknown loss '" + s + "' (expected l2 or bernoulli)");
}

namespace {

// log(1 + exp(f)) without overflow.
double softplus(double f) { return f > 0.0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f)); }

double sigmoid(double f) {
  if (f >= 0.0) return 1.0 / (1.0 + std::exp(-f));
  const double e = std::exp(f);
  return e / (1.0 + e);
}

void check_sizes(std::span<const double> y, std::span<const double> f) {
  if (y.size() != f.size()) throw LossError("response and prediction lengths differ");
}

}  // namespace

double pointwise_loss(LossKind loss, double y, double f) {
  if (loss == LossKind::SquaredError) {
    const double e = y - f;
    return 0.5 * e * e;
  }
  return softplus(f) - y * f;
}

void pseudo_residuals(LossKind loss, std::span<const double> y, std::span<const double> f, std::span<double> r) {
  check_sizes(y, f);
  if (r.size() != y.size()) throw LossError("residual buffer has wrong length");
  bool finite = true;
  if (loss == LossKind::SquaredError) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      finite &= std::isfinite(f[i]);
      r[i] = y[i] - f[i];
    }
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) {
      finite &= std::isfinite(f[i]);
      r[i] = y[i] - sigmoid(f[i]);
    }
  }
  if (!finite) {
    const auto bad = std::find_if(f.begin(), f.end(), [](double v) { return !std::isfinite(v); });
    throw LossError("non-finite prediction at row " + std::to_string(bad - f.begin() + 1));
  }
}

std::vector<double> pseudo_residuals(LossKind loss, std::span<const double> y, std::span<const double> f) {
  std::vector<double> r(y.size());
  pseudo_residuals(loss, y, f, r);
  return r;
}

double init_constant(LossKind loss, std::span<const double> y) {
  if (y.empty()) throw LossError("cannot initialize on an empty response");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  if (loss == LossKind::SquaredError) return mean;
  if (!(mean > 0.0 && mean < 1.0)) throw LossError("Bernoulli response is constant; log-odds undefined");
  return std::log(mean / (1.0 - mean));
}

double risk(LossKind loss, std::span<const double> y, std::span<const double> f) {
  check_sizes(y, f);
  if (y.empty()) return 0.0;
  double total = 0.0;
  if (loss == LossKind::SquaredError) {
    for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - f[i]) * (y[i] - f[i]);
    total *= 0.5;
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) total += pointwise_loss(loss, y[i], f[i]);
  }
  return total / static_cast<double>(y.size());
}

double response_transform(LossKind loss, double link) {
  return loss == LossKind::Bernoulli ? sigmoid(link) : link;
}

void validate_response(LossKind loss, std::span<const double> y) {
  if (loss != LossKind::Bernoulli) return;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw ConfigError("Bernoulli loss needs a 0/1 response; row " + std::to_string(i + 1) + " has " +
                        std::to_string(y[i]));
    }
  }
}

}  // namespace cwb
