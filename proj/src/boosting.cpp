#include "cwb/boosting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cwb/errors.hpp"

namespace cwb {

using nlohmann::json;

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Cwb:
      return "cwb";
    case Algorithm::Acwb:
      return "acwb";
    case Algorithm::Hcwb:
      return "hcwb";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "cwb") return Algorithm::Cwb;
  if (s == "acwb") return Algorithm::Acwb;
  if (s == "hcwb") return Algorithm::Hcwb;
  throw ConfigError("unknown algorithm '" + s + "' (expected cwb, acwb or hcwb)");
}

const char* to_string(Phase p) { return p == Phase::Accelerated ? "accelerated" : "vanilla"; }

std::vector<BasisSpec> default_specs(const Dataset& data, const PoolOptions& options,
                                     std::vector<std::string>* skipped) {
  std::vector<BasisSpec> specs;
  for (const auto& col : data.columns()) {
    if (col.is_numeric()) {
      const auto x = col.values();
      const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
      if (x.empty() || !(*lo < *hi)) {
        if (skipped != nullptr) skipped->push_back(col.name());
        continue;
      }
      if (options.linear_learners) specs.push_back(BasisSpec::linear(col.name()));
      if (options.spline_learners) specs.push_back(BasisSpec::pspline(col.name(), options.spline_degree, options.n_knots));
    } else if (options.categorical == CategoricalEncoding::Ridge) {
      specs.push_back(BasisSpec::categorical_ridge(col.name()));
    } else {
      for (const auto& level : col.categories().levels) specs.push_back(BasisSpec::categorical_binary(col.name(), level));
    }
  }
  return specs;
}

LearnerPool::LearnerPool(std::vector<std::shared_ptr<const Basis>> bases, const Dataset& data,
                         std::shared_ptr<const std::vector<double>> weights, const LearnerOptions& options,
                         Executor* executor)
    : weights_(std::move(weights)) {
  std::vector<std::optional<BaseLearner>> built(bases.size());
  auto build = [&](std::size_t k) { built[k].emplace(bases[k], data.column(bases[k]->feature()), weights_, options); };
  if (executor != nullptr) {
    executor->parallel_for(bases.size(), build);
  } else {
    for (std::size_t k = 0; k < bases.size(); ++k) build(k);
  }
  learners_.reserve(bases.size());
  for (auto& b : built) learners_.push_back(std::move(*b));
}

std::span<const double> LearnerPool::weights() const {
  return weights_ ? std::span<const double>(*weights_) : std::span<const double>();
}

std::size_t LearnerPool::memory_bytes() const {
  std::size_t total = 0;
  for (const auto& l : learners_) total += l.memory_bytes();
  return total;
}

Selection LearnerPool::find_best(const Residuals& r, Executor& executor) const {
  if (learners_.empty()) throw ConfigError("base-learner pool is empty");
  std::vector<FitResult> fits(learners_.size());
  executor.parallel_for(learners_.size(), [&](std::size_t k) { fits[k] = learners_[k].fit(r); });
  std::size_t best = 0;
  for (std::size_t k = 1; k < fits.size(); ++k) {
    if (fits[k].sse < fits[best].sse) best = k;
  }
  return {best, std::move(fits[best].theta), fits[best].sse};
}

Selection find_best_baselearner(const Residuals& r, const LearnerPool& pool, Executor& executor) {
  return pool.find_best(r, executor);
}

PatienceTracker::PatienceTracker(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

void PatienceTracker::set_baseline(double risk) {
  last_ = risk;
  best_iter_ = 0;
  best_risk_ = risk;
}

bool PatienceTracker::update(int iteration, double risk) {
  if (!std::isnan(last_) && risk > last_) {
    ++counter_;
  } else {
    counter_ = 0;
  }
  last_ = risk;
  // Ties move the best iterate forward.
  improved_last_ = risk <= best_risk_;
  if (improved_last_) {
    best_risk_ = risk;
    best_iter_ = iteration;
  }
  return counter_ >= patience_;
}

std::optional<StopPoint> early_stop_check(std::span<const double> val_risks, int patience) {
  PatienceTracker tracker(patience);
  for (std::size_t i = 0; i < val_risks.size(); ++i) {
    const int m = static_cast<int>(i) + 1;
    if (tracker.update(m, val_risks[i])) return StopPoint{m, tracker.best_iteration()};
  }
  return std::nullopt;
}

double TrainConfig::momentum_value() const {
  if (momentum) return *momentum;
  return algorithm == Algorithm::Hcwb ? kDefaultHcwbMomentum : kDefaultAcwbMomentum;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) throw ConfigError("learning rate must lie in [0, 1]");
  if (momentum && !(*momentum >= 0.0)) throw ConfigError("momentum must be >= 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(pool.learner.df_target > 0.0)) throw ConfigError("df target must be > 0");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Rows that are predicted exactly (validation and monitor data).
struct EvalSet {
  const Dataset* data = nullptr;
  std::vector<SparseRows> design;  // per learner
  std::vector<double> f;
  std::vector<double> h;

  bool active() const { return data != nullptr; }

  void add(std::size_t k, const Eigen::VectorXd& theta, double scale, std::vector<double>& target) const {
    const auto& rows = design[k];
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += scale * rows.dot(i, theta);
  }

  double risk(LossKind loss) const { return cwb::risk(loss, data->response(), f); }
};

// Rows a pool is fitted on, with predictions in that pool's representation.
struct FitRows {
  const LearnerPool* pool = nullptr;
  std::vector<double> y;
  std::vector<double> f;
  std::vector<double> h;
};

struct Snapshot {
  int iteration = 0;
  std::vector<Eigen::VectorXd> theta_f;
  std::vector<Eigen::VectorXd> theta_h;
};

class Booster {
 public:
  Booster(const Dataset& train, const Dataset* val, const Dataset* monitor, const TrainConfig& cfg)
      : train_(train), val_(val), monitor_(monitor), cfg_(cfg), exec_(cfg.threads) {}

  TrainResult run();

 private:
  void init();
  void prepare_eval(EvalSet& set, const Dataset* data);
  Residuals residuals_at(const FitRows& rows, std::span<const double> at, std::vector<double>& buffer) const;
  void add_selected(FitRows& rows, std::vector<double>& train_target, std::size_t k, const Eigen::VectorXd& theta,
                    double scale, bool momentum);
  void cwb_step(FitRows& rows, int m);
  void acwb_step(FitRows& rows, int m);
  void log_risks(IterationRecord& rec, const FitRows& rows);
  Snapshot snapshot(int m) const { return {m, theta_f_, theta_h_}; }
  void restore(const Snapshot& s) {
    theta_f_ = s.theta_f;
    theta_h_ = s.theta_h;
    log_.model_iteration = s.iteration;
  }
  TrainResult finish();

  void run_plain();
  void run_hybrid();

  const Dataset& train_;
  const Dataset* val_;
  const Dataset* monitor_;
  TrainConfig cfg_;
  Executor exec_;

  std::vector<std::shared_ptr<const Basis>> bases_;
  std::vector<std::string> skipped_;
  std::unique_ptr<LearnerPool> pool_;
  std::unique_ptr<LearnerPool> pool_all_;
  FitRows rows_;
  FitRows all_rows_;
  const FitRows* last_rows_ = &rows_;
  EvalSet val_set_;
  EvalSet mon_set_;
  double offset_ = 0.0;
  std::vector<Eigen::VectorXd> theta_f_;
  std::vector<Eigen::VectorXd> theta_h_;

  // ACWB recursion state.
  std::vector<double> correction_;
  std::vector<double> prev_correction_fit_;

  std::vector<double> r_buffer_;
  std::vector<double> c_buffer_;
  TrainLog log_;
  TrainTiming timing_;
};

void Booster::prepare_eval(EvalSet& set, const Dataset* data) {
  if (data == nullptr) return;
  if (!data->has_response()) throw ConfigError("evaluation data needs a response");
  validate_response(cfg_.loss, data->response());
  set.data = data;
  set.design.reserve(bases_.size());
  for (const auto& b : bases_) set.design.push_back(b->sparse_rows(data->column(b->feature())));
  set.f.assign(data->rows(), offset_);
  set.h.assign(data->rows(), offset_);
}

void Booster::init() {
  cfg_.validate();
  if (!train_.has_response()) throw ConfigError("training data needs a response");
  if (train_.rows() == 0) throw ConfigError("training data is empty");
  validate_response(cfg_.loss, train_.response());
  if (val_ != nullptr && val_->rows() == 0) throw ConfigError("validation set is empty");

  // HCWB eventually fits on train + validation rows, so its bases must cover
  // both; the other trainers only see the training rows.
  const bool hybrid = cfg_.algorithm == Algorithm::Hcwb;
  Dataset combined;
  if (hybrid) combined = Dataset::concat(train_, *val_);
  const Dataset& reference = hybrid ? combined : train_;

  const auto specs = default_specs(reference, cfg_.pool, &skipped_);
  if (specs.empty()) throw ConfigError("no usable features for the base-learner pool");
  for (const auto& s : specs) bases_.push_back(std::make_shared<const Basis>(Basis::fit(s, reference.column(s.feature))));

  pool_ = std::make_unique<LearnerPool>(bases_, train_, nullptr, cfg_.pool.learner, &exec_);
  offset_ = init_constant(cfg_.loss, train_.response());

  rows_.pool = pool_.get();
  rows_.y.assign(train_.response().begin(), train_.response().end());
  rows_.f.assign(train_.rows(), offset_);
  rows_.h.assign(train_.rows(), offset_);
  prepare_eval(val_set_, val_);
  prepare_eval(mon_set_, monitor_);

  const auto d_of = [](const std::shared_ptr<const Basis>& b) { return Eigen::VectorXd::Zero(b->dimension()).eval(); };
  for (const auto& b : bases_) {
    theta_f_.push_back(d_of(b));
    theta_h_.push_back(d_of(b));
  }

  log_.initial_train_risk = risk(cfg_.loss, rows_.y, rows_.f);
  if (val_set_.active()) log_.initial_val_risk = val_set_.risk(cfg_.loss);
  if (mon_set_.active()) log_.initial_monitor_risk = mon_set_.risk(cfg_.loss);
}

Residuals Booster::residuals_at(const FitRows& rows, std::span<const double> at, std::vector<double>& buffer) const {
  buffer.resize(rows.y.size());
  pseudo_residuals(cfg_.loss, rows.y, at, buffer);
  return make_residuals(buffer, rows.pool->weights());
}

void Booster::add_selected(FitRows& rows, std::vector<double>& train_target, std::size_t k,
                           const Eigen::VectorXd& theta, double scale, bool momentum) {
  (*rows.pool)[k].add_fitted(theta, scale, train_target);
  for (EvalSet* set : {&val_set_, &mon_set_}) {
    if (!set->active()) continue;
    set->add(k, theta, scale, momentum ? set->h : set->f);
  }
}

void Booster::log_risks(IterationRecord& rec, const FitRows& rows) {
  rec.train_risk = risk(cfg_.loss, rows.y, rows.f);
  if (val_set_.active()) rec.val_risk = val_set_.risk(cfg_.loss);
  if (mon_set_.active()) rec.monitor_risk = mon_set_.risk(cfg_.loss);
}

void Booster::cwb_step(FitRows& rows, int m) {
  const Residuals r = residuals_at(rows, rows.f, r_buffer_);
  Selection sel = rows.pool->find_best(r, exec_);
  const double nu = cfg_.learning_rate;
  add_selected(rows, rows.f, sel.index, sel.theta, nu, false);
  theta_f_[sel.index] += nu * sel.theta;

  IterationRecord rec;
  rec.iteration = m;
  rec.phase = Phase::Vanilla;
  rec.selected = static_cast<int>(sel.index);
  rec.sse = sel.sse;
  log_risks(rec, rows);
  log_.records.push_back(rec);
}

void Booster::acwb_step(FitRows& rows, int m) {
  const double nu = cfg_.learning_rate;
  const double gamma = cfg_.momentum_value();
  const double vartheta = 2.0 / (m + 1.0);

  // g = (1 - vartheta) f + vartheta h, materialized into f.
  if (cfg_.momentum_blend) {
    const double a = 1.0 - vartheta;
    auto blend = [&](std::vector<double>& f, const std::vector<double>& h) {
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = a * f[i] + vartheta * h[i];
    };
    blend(rows.f, rows.h);
    for (EvalSet* set : {&val_set_, &mon_set_}) {
      if (set->active()) blend(set->f, set->h);
    }
    for (std::size_t k = 0; k < theta_f_.size(); ++k) theta_f_[k] = a * theta_f_[k] + vartheta * theta_h_[k];
  }

  const Residuals r = residuals_at(rows, rows.f, r_buffer_);
  Selection sel = rows.pool->find_best(r, exec_);
  add_selected(rows, rows.f, sel.index, sel.theta, nu, false);
  theta_f_[sel.index] += nu * sel.theta;

  // Error-corrected pseudo residuals.
  const std::size_t n = rows.y.size();
  if (correction_.size() != n || m == 1) {
    correction_.assign(r_buffer_.begin(), r_buffer_.end());
  } else {
    const double ratio = m / (m + 1.0);
    for (std::size_t i = 0; i < n; ++i) correction_[i] = r_buffer_[i] + ratio * (correction_[i] - prev_correction_fit_[i]);
  }
  const Residuals c = make_residuals(correction_, rows.pool->weights());
  Selection cor = rows.pool->find_best(c, exec_);
  const double eta = gamma * nu / vartheta;
  add_selected(rows, rows.h, cor.index, cor.theta, eta, true);
  theta_h_[cor.index] += eta * cor.theta;

  prev_correction_fit_.assign(n, 0.0);
  (*rows.pool)[cor.index].add_fitted(cor.theta, 1.0, prev_correction_fit_);

  IterationRecord rec;
  rec.iteration = m;
  rec.phase = Phase::Accelerated;
  rec.selected = static_cast<int>(sel.index);
  rec.selected_cor = static_cast<int>(cor.index);
  rec.sse = sel.sse;
  rec.sse_cor = cor.sse;
  rec.theta_m = vartheta;
  rec.eta_m = eta;
  log_risks(rec, rows);
  log_.records.push_back(rec);
}

void Booster::run_plain() {
  const bool accelerated = cfg_.algorithm == Algorithm::Acwb;
  const bool stopping = cfg_.early_stopping && val_set_.active();
  PatienceTracker tracker(cfg_.patience);
  Snapshot best = snapshot(0);
  if (stopping) tracker.set_baseline(log_.initial_val_risk);

  log_.model_iteration = 0;
  for (int m = 1; m <= cfg_.max_iters; ++m) {
    if (accelerated) {
      acwb_step(rows_, m);
    } else {
      cwb_step(rows_, m);
    }
    log_.model_iteration = m;
    if (!stopping) continue;
    const bool exhausted = tracker.update(m, log_.records.back().val_risk);
    if (tracker.improved_last()) best = snapshot(m);
    if (exhausted) {
      log_.stop_iteration = m;
      restore(best);
      break;
    }
  }
}

void Booster::run_hybrid() {
  PatienceTracker tracker(cfg_.patience);
  tracker.set_baseline(log_.initial_val_risk);
  int m = 1;
  for (; m <= cfg_.max_iters; ++m) {
    acwb_step(rows_, m);
    log_.model_iteration = m;
    if (tracker.update(m, log_.records.back().val_risk)) {
      log_.switch_iteration = m;
      ++m;
      break;
    }
  }
  if (!log_.switch_iteration) return;

  // Fine-tune with plain CWB from f; the momentum trace stays frozen.
  FitRows* rows = &rows_;
  if (cfg_.refit_on_all_data) {
    const Dataset all = Dataset::concat(train_, *val_);
    pool_all_ = std::make_unique<LearnerPool>(bases_, all, nullptr, cfg_.pool.learner, &exec_);
    all_rows_.pool = pool_all_.get();
    all_rows_.y.assign(all.response().begin(), all.response().end());
    // Training rows are followed by validation rows, whose f was tracked exactly.
    all_rows_.f = rows_.f;
    all_rows_.f.insert(all_rows_.f.end(), val_set_.f.begin(), val_set_.f.end());
    rows = &all_rows_;
    last_rows_ = rows;
  }

  const bool stopping = cfg_.early_stopping;
  PatienceTracker post(cfg_.patience);
  post.set_baseline(log_.records.back().val_risk);
  Snapshot best = snapshot(log_.model_iteration);
  for (; m <= cfg_.max_iters; ++m) {
    cwb_step(*rows, m);
    log_.model_iteration = m;
    if (!stopping) continue;
    const bool exhausted = post.update(m, log_.records.back().val_risk);
    if (post.improved_last()) best = snapshot(m);
    if (exhausted) {
      log_.stop_iteration = m;
      restore(best);
      break;
    }
  }
}

TrainResult Booster::finish() {
  TrainResult out;
  out.model.loss = cfg_.loss;
  out.model.offset = offset_;
  for (std::size_t k = 0; k < bases_.size(); ++k) out.model.learners.push_back({bases_[k], theta_f_[k], theta_h_[k]});
  for (std::size_t k = 0; k < pool_->size(); ++k) {
    const auto& l = (*pool_)[k];
    out.learners.push_back({l.basis().label(), l.basis().kind(), l.dimension(), l.lambda(), l.df(), l.df_capped(),
                            l.jitter(), l.bin_plan(), l.memory_bytes()});
  }
  out.pool_bytes = pool_->memory_bytes() + (pool_all_ ? pool_all_->memory_bytes() : 0);
  out.model.config = config_to_json(cfg_);
  json summary;
  summary["iterations"] = log_.model_iteration;
  summary["recorded_iterations"] = log_.records.size();
  summary["stop_iteration"] = log_.stop_iteration ? json(*log_.stop_iteration) : json(nullptr);
  summary["switch_iteration"] = log_.switch_iteration ? json(*log_.switch_iteration) : json(nullptr);
  json selected = json::array();
  json selected_cor = json::array();
  for (const auto& r : log_.records) {
    selected.push_back(r.selected);
    selected_cor.push_back(r.selected_cor);
  }
  summary["selected"] = std::move(selected);
  summary["selected_cor"] = std::move(selected_cor);
  out.model.train_log = std::move(summary);
  out.accumulated_link = last_rows_->f;
  out.accumulated_on_all_rows = last_rows_ == &all_rows_;
  if (val_set_.active()) out.accumulated_validation_link = val_set_.f;
  out.log = std::move(log_);
  out.timing = timing_;
  out.skipped_features = skipped_;
  return out;
}

TrainResult Booster::run() {
  const auto t0 = Clock::now();
  init();
  timing_.init_seconds = seconds_since(t0);
  const auto t1 = Clock::now();
  if (cfg_.algorithm == Algorithm::Hcwb) {
    run_hybrid();
  } else {
    run_plain();
  }
  timing_.iterate_seconds = seconds_since(t1);
  timing_.iterations = static_cast<int>(log_.records.size());
  return finish();
}

}  // namespace

TrainResult train(const Dataset& train_data, const Dataset* validation, const TrainConfig& config,
                  const Dataset* monitor) {
  if (config.algorithm == Algorithm::Hcwb && validation == nullptr) {
    throw ConfigError("HCWB needs a non-empty validation set");
  }
  Booster booster(train_data, validation, monitor, config);
  return booster.run();
}

TrainResult train_cwb(const Dataset& train_data, const Dataset* validation, TrainConfig config,
                      const Dataset* monitor) {
  config.algorithm = Algorithm::Cwb;
  return train(train_data, validation, config, monitor);
}

TrainResult train_acwb(const Dataset& train_data, const Dataset* validation, TrainConfig config,
                       const Dataset* monitor) {
  config.algorithm = Algorithm::Acwb;
  return train(train_data, validation, config, monitor);
}

TrainResult train_hcwb(const Dataset& train_data, const Dataset& validation, TrainConfig config,
                       const Dataset* monitor) {
  config.algorithm = Algorithm::Hcwb;
  return train(train_data, &validation, config, monitor);
}

namespace {

json bins_to_json(const BinConfig& b) {
  switch (b.mode) {
    case BinConfig::Mode::None:
      return "none";
    case BinConfig::Mode::SqrtN:
      return "sqrt";
    case BinConfig::Mode::FourthRootN:
      return "fourthroot";
    case BinConfig::Mode::Fixed:
      return b.fixed;
  }
  return nullptr;
}

}  // namespace

json config_to_json(const TrainConfig& c) {
  json j;
  j["algorithm"] = to_string(c.algorithm);
  j["loss"] = to_string(c.loss);
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.algorithm == Algorithm::Cwb ? json(nullptr) : json(c.momentum_value());
  j["max_iters"] = c.max_iters;
  j["patience"] = c.patience;
  j["early_stopping"] = c.early_stopping;
  j["refit_on_all_data"] = c.refit_on_all_data;
  j["df"] = c.pool.learner.df_target;
  j["df_kind"] = to_string(c.pool.learner.df_kind);
  j["bins"] = bins_to_json(c.pool.learner.bins);
  j["spline_degree"] = c.pool.spline_degree;
  j["n_knots"] = c.pool.n_knots;
  j["linear_learners"] = c.pool.linear_learners;
  j["categorical"] = c.pool.categorical == CategoricalEncoding::Ridge ? "ridge" : "binary";
  return j;
}

json log_to_json(const TrainLog& log, const std::vector<LearnerInfo>& learners) {
  auto label = [&](int k) -> json {
    if (k < 0 || static_cast<std::size_t>(k) >= learners.size()) return nullptr;
    return learners[static_cast<std::size_t>(k)].label;
  };
  json recs = json::array();
  for (const auto& r : log.records) {
    json j;
    j["iter"] = r.iteration;
    j["phase"] = to_string(r.phase);
    j["selected"] = r.selected;
    j["selected_label"] = label(r.selected);
    j["selected_cor"] = r.selected_cor < 0 ? json(nullptr) : json(r.selected_cor);
    j["sse"] = r.sse;
    j["sse_cor"] = r.sse_cor;
    j["train_risk"] = r.train_risk;
    j["val_risk"] = r.val_risk;
    j["monitor_risk"] = r.monitor_risk;
    j["theta_m"] = r.theta_m;
    j["eta_m"] = r.eta_m;
    recs.push_back(std::move(j));
  }
  json out;
  out["records"] = std::move(recs);
  out["initial_train_risk"] = log.initial_train_risk;
  out["initial_val_risk"] = log.initial_val_risk;
  out["stop_iteration"] = log.stop_iteration ? json(*log.stop_iteration) : json(nullptr);
  out["switch_iteration"] = log.switch_iteration ? json(*log.switch_iteration) : json(nullptr);
  out["model_iteration"] = log.model_iteration;
  return out;
}

}  // namespace cwb
