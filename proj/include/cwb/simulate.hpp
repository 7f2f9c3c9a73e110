#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cwb/basis.hpp"
#include "cwb/data.hpp"
#include "cwb/model.hpp"

namespace cwb {

struct SimConfig {
  std::size_t n = 1000;
  int p = 5;                 // informative features
  double p_noise_rel = 1.0;  // noise features = round(p * p_noise_rel)
  double snr = 1.0;          // +inf gives a noise-free response
  std::uint64_t seed = 0;

  int noise_features() const;
  void validate() const;
};

// Cubic spline with 10 inner knots over [lower, upper].
inline constexpr int kTruthDegree = 3;
inline constexpr int kTruthIntervals = 11;

struct TrueEffect {
  std::string feature;
  double lower = 0.0;
  double upper = 0.0;
  Eigen::VectorXd tau;

  Basis basis() const;
  std::vector<double> evaluate(std::span<const double> x) const;
};

struct GroundTruth {
  std::vector<TrueEffect> effects;
  std::vector<std::string> noise_features;
  std::string target = "y";
  double snr = 1.0;
  double sigma = 0.0;
  std::vector<double> eta;  // linear predictor of the simulated rows (not serialized)
};

std::pair<Dataset, GroundTruth> simulate(const SimConfig& config);

// Fresh rows from the same truth with a noise-free response (y = eta).
Dataset sample_holdout(const GroundTruth& truth, std::size_t n, std::uint64_t seed);

// Sum of the true effects at the rows of `data`.
std::vector<double> true_predictor(const GroundTruth& truth, const Dataset& data);

// Mean over informative features of the integrated squared difference between
// the true and the estimated partial effect, both centered to mean zero. The
// integral runs over each feature's range with a composite trapezoid rule.
double mise(const TrainedModel& model, const GroundTruth& truth, int quad_points = 1001);

// One categorical feature with `classes` levels and class effects drawn from
// N(0, 1), plus Gaussian noise with sd `noise_sd`.
std::pair<Dataset, std::vector<double>> simulate_categorical(std::size_t n, int classes, double noise_sd,
                                                             std::uint64_t seed);

nlohmann::json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& doc);
void save_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_truth(const std::filesystem::path& path);

}  // namespace cwb
