#pragma once

#include <span>
#include <string>
#include <vector>

namespace cwb {

// SquaredError: L = (y - f)^2 / 2.  Bernoulli: y in {0, 1},
// L = log(1 + exp(f)) - y f (negative log-likelihood of the logistic model).
enum class LossKind { SquaredError, Bernoulli };

const char* to_string(LossKind kind);
LossKind loss_from_string(const std::string& s);

double pointwise_loss(LossKind loss, double y, double f);

// r_i = -dL/df at f_i.
void pseudo_residuals(LossKind loss, std::span<const double> y, std::span<const double> f, std::span<double> r);
std::vector<double> pseudo_residuals(LossKind loss, std::span<const double> y, std::span<const double> f);

// Loss-optimal constant model.
double init_constant(LossKind loss, std::span<const double> y);

// Mean pointwise loss.
double risk(LossKind loss, std::span<const double> y, std::span<const double> f);

// Maps a link-scale prediction to the response scale.
double response_transform(LossKind loss, double link);

void validate_response(LossKind loss, std::span<const double> y);

}  // namespace cwb
