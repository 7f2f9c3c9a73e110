#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cwb/basis.hpp"
#include "cwb/data.hpp"
#include "cwb/loss.hpp"

namespace cwb {

inline constexpr const char* kModelFormatVersion = "1";

struct ModelLearner {
  std::shared_ptr<const Basis> basis;
  Eigen::VectorXd theta_f;  // aggregated primary-model parameters
  Eigen::VectorXd theta_h;  // aggregated momentum-model parameters (zero for CWB)
};

// Additive model offset + sum_k g_k(x)^T theta_f[k]. Predictions only use
// theta_f; theta_h is kept so accelerated training can be resumed.
struct TrainedModel {
  LossKind loss = LossKind::SquaredError;
  double offset = 0.0;
  std::vector<ModelLearner> learners;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json train_log = nlohmann::json::object();
};

enum class PredictType { Link, Response };

std::vector<double> predict(const TrainedModel& model, const Dataset& data, PredictType type = PredictType::Link);

// Contribution of a single learner at every row of `data`.
std::vector<double> learner_contribution(const ModelLearner& learner, const Dataset& data);

// Sum of all learners on `feature`. Numeric features are evaluated on `grid`;
// categorical features return one value per level (grid is ignored).
std::vector<double> partial_effect(const TrainedModel& model, const std::string& feature,
                                   std::span<const double> grid = {});
// Level names matching partial_effect for a categorical feature.
std::vector<std::string> effect_levels(const TrainedModel& model, const std::string& feature);

nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& doc);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

// Exact decimal text for a double (17 significant digits) and back.
std::string encode_real(double v);
double decode_real(const std::string& s);

}  // namespace cwb
