#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cwb/basis.hpp"
#include "cwb/data.hpp"
#include "cwb/learner.hpp"
#include "cwb/loss.hpp"
#include "cwb/model.hpp"
#include "cwb/parallel.hpp"

namespace cwb {

enum class Algorithm { Cwb, Acwb, Hcwb };
enum class Phase { Accelerated, Vanilla };
enum class CategoricalEncoding { Ridge, Binary };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);
const char* to_string(Phase p);

inline constexpr double kDefaultLearningRate = 0.05;
inline constexpr double kDefaultAcwbMomentum = 0.0034;
inline constexpr double kDefaultHcwbMomentum = 0.037;
inline constexpr int kDefaultPatience = 5;

struct PoolOptions {
  int spline_degree = 3;
  int n_knots = 20;
  bool spline_learners = true;
  bool linear_learners = false;  // unpenalized linear learner per numeric feature
  CategoricalEncoding categorical = CategoricalEncoding::Ridge;
  LearnerOptions learner;
};

// A spline and/or a linear learner per non-constant numeric feature; one ridge learner per categorical feature or one binary learner
// per class. Constant numeric features are listed in `skipped`.
std::vector<BasisSpec> default_specs(const Dataset& data, const PoolOptions& options,
                                     std::vector<std::string>* skipped = nullptr);

struct Selection {
  std::size_t index = 0;
  Eigen::VectorXd theta;
  double sse = 0.0;
};

class LearnerPool {
 public:
  LearnerPool(std::vector<std::shared_ptr<const Basis>> bases, const Dataset& data,
              std::shared_ptr<const std::vector<double>> weights, const LearnerOptions& options,
              Executor* executor = nullptr);

  std::size_t size() const { return learners_.size(); }
  const BaseLearner& operator[](std::size_t k) const { return learners_[k]; }
  const std::vector<BaseLearner>& learners() const { return learners_; }
  std::span<const double> weights() const;
  std::size_t memory_bytes() const;

  // Fits every learner to r and returns the minimum-SSE one; ties go to the
  // lowest index.
  Selection find_best(const Residuals& r, Executor& executor) const;

 private:
  std::vector<BaseLearner> learners_;
  std::shared_ptr<const std::vector<double>> weights_;
};

Selection find_best_baselearner(const Residuals& r, const LearnerPool& pool, Executor& executor);

// Patience rule on a validation-risk sequence: the counter increases when
// risk[m] > risk[m-1] and resets otherwise; training stops once it reaches
// `patience`. Iterations are 1-based; best is the argmin over the sequence
// (last occurrence).
class PatienceTracker {
 public:
  explicit PatienceTracker(int patience);
  // Optional risk of the starting state (iteration 0).
  void set_baseline(double risk);
  // Returns true when patience is exhausted by this observation.
  bool update(int iteration, double risk);

  int counter() const { return counter_; }
  int best_iteration() const { return best_iter_; }
  double best_risk() const { return best_risk_; }
  bool improved_last() const { return improved_last_; }

 private:
  int patience_;
  int counter_ = 0;
  double last_ = std::numeric_limits<double>::quiet_NaN();
  int best_iter_ = 0;
  double best_risk_ = std::numeric_limits<double>::infinity();
  bool improved_last_ = false;
};

struct StopPoint {
  int stop_iteration = 0;
  int best_iteration = 0;
};

std::optional<StopPoint> early_stop_check(std::span<const double> val_risks, int patience);

struct TrainConfig {
  Algorithm algorithm = Algorithm::Cwb;
  LossKind loss = LossKind::SquaredError;
  double learning_rate = kDefaultLearningRate;
  std::optional<double> momentum;  // defaults depend on the algorithm
  int max_iters = 100;
  int patience = kDefaultPatience;
  // Stop on validation risk (when validation data is given) and restore the
  // best iterate. For HCWB this controls the post-switch phase.
  bool early_stopping = true;
  // HCWB: continue with CWB on train + validation rows after the switch.
  bool refit_on_all_data = true;
  // ACWB: false evaluates residuals at f instead of the (f, h) blend.
  bool momentum_blend = true;
  int threads = 1;
  PoolOptions pool;

  double momentum_value() const;
  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  Phase phase = Phase::Vanilla;
  int selected = -1;
  int selected_cor = -1;
  double sse = 0.0;
  double sse_cor = std::numeric_limits<double>::quiet_NaN();
  double train_risk = 0.0;
  double val_risk = std::numeric_limits<double>::quiet_NaN();
  double monitor_risk = std::numeric_limits<double>::quiet_NaN();
  double theta_m = std::numeric_limits<double>::quiet_NaN();  // 2 / (m + 1)
  double eta_m = std::numeric_limits<double>::quiet_NaN();    // gamma * nu / theta_m
};

struct TrainLog {
  std::vector<IterationRecord> records;
  double initial_train_risk = 0.0;
  double initial_val_risk = std::numeric_limits<double>::quiet_NaN();
  double initial_monitor_risk = std::numeric_limits<double>::quiet_NaN();
  std::optional<int> stop_iteration;
  std::optional<int> switch_iteration;  // HCWB: last accelerated iteration
  int model_iteration = 0;              // iterate the returned model corresponds to
};

struct LearnerInfo {
  std::string label;
  BasisKind kind = BasisKind::PSpline;
  int dimension = 0;
  double lambda = 0.0;
  double df = 0.0;
  bool df_capped = false;
  double jitter = 0.0;
  BinPlan bins;
  std::size_t memory_bytes = 0;
};

struct TrainTiming {
  double init_seconds = 0.0;
  double iterate_seconds = 0.0;
  int iterations = 0;
};

struct TrainResult {
  TrainedModel model;
  TrainLog log;
  TrainTiming timing;
  std::vector<LearnerInfo> learners;
  std::vector<std::string> skipped_features;
  std::size_t pool_bytes = 0;
  // Predictions of f accumulated step by step during training, at the last
  // iteration run (before any best-iterate restore). The fit rows are the
  // training rows, or training then validation rows after an HCWB switch with
  // refit_on_all_data.
  std::vector<double> accumulated_link;
  bool accumulated_on_all_rows = false;
  std::vector<double> accumulated_validation_link;
};

// `validation` drives early stopping (and is required for HCWB). `monitor`
// is only evaluated and logged, never used for decisions.
TrainResult train(const Dataset& train_data, const Dataset* validation, const TrainConfig& config,
                  const Dataset* monitor = nullptr);

TrainResult train_cwb(const Dataset& train_data, const Dataset* validation, TrainConfig config,
                      const Dataset* monitor = nullptr);
TrainResult train_acwb(const Dataset& train_data, const Dataset* validation, TrainConfig config,
                       const Dataset* monitor = nullptr);
TrainResult train_hcwb(const Dataset& train_data, const Dataset& validation, TrainConfig config,
                       const Dataset* monitor = nullptr);

nlohmann::json config_to_json(const TrainConfig& config);
nlohmann::json log_to_json(const TrainLog& log, const std::vector<LearnerInfo>& learners);

}  // namespace cwb
