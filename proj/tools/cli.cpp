#include "cli.hpp"

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "CLI11.hpp"

#include "cwb/errors.hpp"
#include "cwb/simulate.hpp"

namespace cwb::cli {

using nlohmann::json;

std::size_t heap_in_use() {
  const struct mallinfo2 info = mallinfo2();
  return info.uordblks + info.hblkhd;
}

namespace {

BinConfig parse_bins(const std::string& s) {
  if (s == "none") return BinConfig::none();
  if (s == "sqrt") return BinConfig::sqrt_n();
  if (s == "fourthroot") return BinConfig::fourth_root_n();
  std::size_t used = 0;
  int k = 0;
  try {
    k = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("--bins expects sqrt, fourthroot, none or an integer, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("--bins expects sqrt, fourthroot, none or an integer, got '" + s + "'");
  return BinConfig::fixed_bins(k);
}

json bin_plan_json(const BinPlan& plan) {
  return {{"requested", plan.requested ? json(*plan.requested) : json(nullptr)},
          {"effective", plan.effective ? json(*plan.effective) : json(nullptr)},
          {"clamped", plan.clamped}};
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::string real_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Options shared by train and bench.
struct ModelFlags {
  std::string algo = "cwb";
  std::string loss = "l2";
  double lr = kDefaultLearningRate;
  std::optional<double> momentum;
  int iters = 100;
  double df = 5.0;
  std::string df_kind = "df1";
  int patience = kDefaultPatience;
  std::string bins = "none";
  int degree = 3;
  int knots = 20;
  bool linear = false;
  bool no_splines = false;
  std::string categorical = "ridge";
  bool no_early_stopping = false;
  bool train_only = false;
  int threads = 1;

  void add_to(CLI::App& app) {
    app.add_option("--algo", algo, "cwb, acwb or hcwb")->check(CLI::IsMember({"cwb", "acwb", "hcwb"}));
    app.add_option("--loss", loss, "l2 or bernoulli")->check(CLI::IsMember({"l2", "bernoulli"}));
    app.add_option("--lr", lr, "learning rate in (0, 1]");
    app.add_option("--momentum", momentum, "momentum for acwb/hcwb (defaults 0.0034 / 0.037)");
    app.add_option("--iters", iters, "maximum number of boosting iterations");
    app.add_option("--df", df, "degrees of freedom per base learner");
    app.add_option("--df-kind", df_kind, "df1 (trace S) or df2 (trace 2S - S^T S)")
        ->check(CLI::IsMember({"df1", "df2"}));
    app.add_option("--patience", patience, "early-stopping patience");
    app.add_option("--bins", bins, "sqrt, fourthroot, none or a number of design points");
    app.add_option("--degree", degree, "spline degree");
    app.add_option("--knots", knots, "number of knot intervals per spline");
    app.add_flag("--linear", linear, "add a linear base learner per numeric feature");
    app.add_flag("--no-splines", no_splines, "drop the spline base learners");
    app.add_option("--categorical", categorical, "ridge or binary")->check(CLI::IsMember({"ridge", "binary"}));
    app.add_flag("--no-early-stopping", no_early_stopping, "train for all iterations");
    app.add_flag("--train-only", train_only, "hcwb: keep fitting on the training split after the switch");
    app.add_option("--threads", threads, "worker threads for candidate fitting");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.algorithm = algorithm_from_string(algo);
    c.loss = loss_from_string(loss);
    if (!(lr > 0.0 && lr <= 1.0)) throw ConfigError("--lr must lie in (0, 1]");
    if (momentum && c.algorithm == Algorithm::Cwb) throw ConfigError("--momentum only applies to acwb and hcwb");
    if (train_only && c.algorithm != Algorithm::Hcwb) throw ConfigError("--train-only only applies to hcwb");
    c.learning_rate = lr;
    c.momentum = momentum;
    c.max_iters = iters;
    c.patience = patience;
    c.early_stopping = !no_early_stopping;
    c.refit_on_all_data = !train_only;
    c.threads = threads;
    c.pool.spline_degree = degree;
    c.pool.n_knots = knots;
    c.pool.linear_learners = linear;
    c.pool.spline_learners = !no_splines;
    c.pool.categorical = categorical == "binary" ? CategoricalEncoding::Binary : CategoricalEncoding::Ridge;
    c.pool.learner.df_target = df;
    c.pool.learner.df_kind = df_kind_from_string(df_kind);
    c.pool.learner.bins = parse_bins(bins);
    if (degree < 1) throw ConfigError("--degree must be >= 1");
    if (knots < 1) throw ConfigError("--knots must be >= 1");
    c.validate();
    return c;
  }
};

struct TrainFlags {
  ModelFlags model;
  std::string data;
  std::string target;
  double val_frac = 0.2;
  std::uint64_t seed = 0;
  std::string out;
  std::string report;
};

struct PredictFlags {
  std::string model;
  std::string data;
  std::string out;
};

struct SimulateFlags {
  std::size_t n = 1000;
  int p = 5;
  double p_noise_rel = 1.0;
  double snr = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth;
};

struct BenchFlags {
  ModelFlags model;
  std::vector<std::size_t> n{10000, 100000};
  std::vector<int> k{10};
  std::string binned = "both";
  int reps = 3;
  std::uint64_t seed = 0;
  std::string out;
  std::string summary;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  TrainConfig config = f.model.config();
  if (!(f.val_frac >= 0.0 && f.val_frac < 1.0)) throw ConfigError("--val-frac must lie in [0, 1)");
  if (config.algorithm == Algorithm::Hcwb && f.val_frac == 0.0) throw ConfigError("hcwb needs --val-frac > 0");

  const std::size_t heap0 = heap_in_use();
  const Dataset data = load_csv(f.data, f.target);
  Dataset train_data;
  Dataset val_data;
  const bool has_val = f.val_frac > 0.0;
  if (has_val) {
    std::tie(train_data, val_data) = split(data, {f.val_frac, f.seed});
  } else {
    train_data = data;
  }
  const std::size_t heap1 = heap_in_use();
  const std::size_t data_bytes = heap1 > heap0 ? heap1 - heap0 : 0;

  TrainResult result = train(train_data, has_val ? &val_data : nullptr, config);
  save_model(result.model, f.out);

  const double train_risk = risk(config.loss, train_data.response(), predict(result.model, train_data));
  const double val_risk = has_val ? risk(config.loss, val_data.response(), predict(result.model, val_data))
                                  : std::numeric_limits<double>::quiet_NaN();
  if (!f.report.empty()) {
    write_json(run_report(result, config, train_risk, val_risk, data_bytes + result.pool_bytes), f.report);
  }
  out << "trained " << to_string(config.algorithm) << ": " << result.log.records.size() << " iterations, model at "
      << result.log.model_iteration << ", train risk " << train_risk;
  if (has_val) out << ", validation risk " << val_risk;
  out << '\n';
  return 0;
}

int cmd_predict(const PredictFlags& f) {
  const TrainedModel model = load_model(f.model);
  SchemaOverrides overrides;
  for (const auto& l : model.learners) {
    overrides[l.basis->feature()] = l.basis->is_numeric() ? ColumnKind::Numeric : ColumnKind::Categorical;
  }
  const Dataset data = load_csv(f.data, "", overrides);
  const auto link = predict(model, data, PredictType::Link);
  std::ofstream out(f.out);
  if (!out) throw IngestionError("cannot write " + f.out);
  out << "row,link,response\n";
  for (std::size_t i = 0; i < link.size(); ++i) {
    out << i << ',' << real_text(link[i]) << ',' << real_text(response_transform(model.loss, link[i])) << '\n';
  }
  return 0;
}

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
  SimConfig c;
  c.n = f.n;
  c.p = f.p;
  c.p_noise_rel = f.p_noise_rel;
  c.snr = f.snr;
  c.seed = f.seed;
  auto [data, truth] = simulate(c);
  write_csv(data, f.out);
  if (!f.truth.empty()) save_truth(truth, f.truth);
  out << "wrote " << data.rows() << " rows with " << data.columns().size() << " features\n";
  return 0;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  TrainConfig base = f.model.config();
  if (f.reps < 1) throw ConfigError("--reps must be >= 1");
  if (f.n.empty() || f.k.empty()) throw ConfigError("--n and --k need at least one value");
  std::vector<bool> modes;
  if (f.binned == "both" || f.binned == "no") modes.push_back(false);
  if (f.binned == "both" || f.binned == "yes") modes.push_back(true);
  const BinConfig bins = base.pool.learner.bins.mode == BinConfig::Mode::None ? BinConfig::sqrt_n()
                                                                               : base.pool.learner.bins;
  base.early_stopping = false;

  struct Cell {
    std::size_t n = 0;
    int k = 0;
    Dataset train;
    Dataset val;
  };
  const bool needs_val = base.algorithm == Algorithm::Hcwb;
  std::vector<Cell> cells;
  for (std::size_t n : f.n) {
    for (int k : f.k) {
      SimConfig sc;
      sc.n = n;
      sc.p = k;
      sc.p_noise_rel = 0.0;
      sc.seed = f.seed;
      Cell cell{n, k, simulate(sc).first, {}};
      if (needs_val) std::tie(cell.train, cell.val) = split(cell.train, {0.2, f.seed});
      cells.push_back(std::move(cell));
    }
  }

  // Repetitions are the outer loop so slow phases of the machine spread over
  // all cells instead of biasing one.
  std::vector<BenchRow> rows;
  for (int rep = 1; rep <= f.reps; ++rep) {
    for (const Cell& cell : cells) {
      for (bool binned : modes) {
        TrainConfig c = base;
        c.pool.learner.bins = binned ? bins : BinConfig::none();
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult r = train(cell.train, needs_val ? &cell.val : nullptr, c);
        const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double per_iter = r.timing.iterate_seconds / std::max(1, r.timing.iterations);
        rows.push_back({cell.n, cell.k, binned, "init", r.timing.init_seconds, r.pool_bytes, rep});
        rows.push_back({cell.n, cell.k, binned, "iteration", per_iter, r.pool_bytes, rep});
        rows.push_back({cell.n, cell.k, binned, "total", total, r.pool_bytes, rep});
        out << "n=" << cell.n << " K=" << cell.k << " binned=" << binned << " rep=" << rep << " total=" << total << "s\n";
      }
    }
  }

  std::ofstream csv(f.out);
  if (!csv) throw IngestionError("cannot write " + f.out);
  csv << "n,K,binned,phase,seconds,alloc_bytes,rep\n";
  for (const auto& r : rows) {
    csv << r.n << ',' << r.k << ',' << (r.binned ? 1 : 0) << ',' << r.phase << ',' << real_text(r.seconds) << ','
        << r.alloc_bytes << ',' << r.rep << '\n';
  }
  if (!f.summary.empty()) write_json(bench_summary(rows), f.summary);
  return 0;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const PredictionError*>(&e) != nullptr) return 2;
  return 1;
}

}  // namespace

json run_report(const TrainResult& result, const TrainConfig& config, double final_train_risk, double final_val_risk,
                std::size_t peak_alloc_bytes) {
  std::map<std::string, int> histogram;
  for (const auto& rec : result.log.records) {
    histogram[result.learners[static_cast<std::size_t>(rec.selected)].label] += 1;
    if (rec.selected_cor >= 0) histogram[result.learners[static_cast<std::size_t>(rec.selected_cor)].label] += 1;
  }
  json learners = json::array();
  json bin_notes = json::array();
  for (const auto& l : result.learners) {
    learners.push_back({{"label", l.label},
                        {"kind", to_string(l.kind)},
                        {"dimension", l.dimension},
                        {"lambda", l.lambda},
                        {"df", l.df},
                        {"df_capped", l.df_capped},
                        {"jitter", l.jitter},
                        {"bins", bin_plan_json(l.bins)},
                        {"memory_bytes", l.memory_bytes}});
    if (l.bins.clamped) {
      bin_notes.push_back(l.label + ": bins clamped from " + std::to_string(*l.bins.requested) + " to " +
                          (l.bins.effective ? std::to_string(*l.bins.effective) : std::string("unbinned")));
    }
  }
  const int iterations = static_cast<int>(result.log.records.size());
  return {{"schema_version", kReportSchemaVersion},
          {"algorithm", to_string(config.algorithm)},
          {"config", config_to_json(config)},
          {"timing",
           {{"init_seconds", result.timing.init_seconds},
            {"iterate_seconds", result.timing.iterate_seconds},
            {"per_iteration_mean_seconds", iterations > 0 ? result.timing.iterate_seconds / iterations : 0.0}}},
          {"peak_alloc_bytes", peak_alloc_bytes},
          {"pool_bytes", result.pool_bytes},
          {"iterations", iterations},
          {"model_iteration", result.log.model_iteration},
          {"stop_iteration", result.log.stop_iteration ? json(*result.log.stop_iteration) : json(nullptr)},
          {"switch_iteration", result.log.switch_iteration ? json(*result.log.switch_iteration) : json(nullptr)},
          {"final_train_risk", final_train_risk},
          {"final_val_risk", std::isnan(final_val_risk) ? json(nullptr) : json(final_val_risk)},
          {"selected_histogram", histogram},
          {"skipped_features", result.skipped_features},
          {"bin_notes", bin_notes},
          {"learners", learners},
          {"log", log_to_json(result.log, result.learners)}};
}

std::vector<ExponentFit> fit_exponents(const std::vector<BenchRow>& rows) {
  // (phase, binned) -> (n, K) -> seconds over reps
  std::map<std::pair<std::string, bool>, std::map<std::pair<std::size_t, int>, std::vector<double>>> cells;
  for (const auto& r : rows) cells[{r.phase, r.binned}][{r.n, r.k}].push_back(r.seconds);

  std::vector<ExponentFit> fits;
  for (const auto& [key, grid] : cells) {
    std::set<std::size_t> ns;
    std::set<int> ks;
    for (const auto& [cell, _] : grid) {
      ns.insert(cell.first);
      ks.insert(cell.second);
    }
    ExponentFit fit;
    fit.phase = key.first;
    fit.binned = key.second;
    fit.has_n = ns.size() > 1;
    fit.has_k = ks.size() > 1;
    fit.cells = static_cast<int>(grid.size());
    const int p = 1 + (fit.has_n ? 1 : 0) + (fit.has_k ? 1 : 0);
    if (p == 1) {
      fits.push_back(fit);
      continue;
    }
    Eigen::MatrixXd x(fit.cells, p);
    Eigen::VectorXd y(fit.cells);
    int i = 0;
    for (const auto& [cell, secs] : grid) {
      int j = 0;
      x(i, j++) = 1.0;
      if (fit.has_n) x(i, j++) = std::log(static_cast<double>(cell.first));
      if (fit.has_k) x(i, j++) = std::log(static_cast<double>(cell.second));
      y(i) = std::log(std::max(median(secs), 1e-12));
      ++i;
    }
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
    const Eigen::VectorXd beta = xtx_inv * x.transpose() * y;
    const int dof = fit.cells - p;
    double half = std::numeric_limits<double>::quiet_NaN();
    const auto ci = [&](int j) {
      if (dof < 1) return std::pair{half, half};
      const double s2 = (y - x * beta).squaredNorm() / dof;
      const boost::math::students_t t(dof);
      const double w = boost::math::quantile(t, 0.975) * std::sqrt(s2 * xtx_inv(j, j));
      return std::pair{beta(j) - w, beta(j) + w};
    };
    int j = 1;
    if (fit.has_n) {
      fit.n_exponent = beta(j);
      std::tie(fit.n_ci_low, fit.n_ci_high) = ci(j);
      ++j;
    }
    if (fit.has_k) {
      fit.k_exponent = beta(j);
      std::tie(fit.k_ci_low, fit.k_ci_high) = ci(j);
    }
    fits.push_back(fit);
  }
  return fits;
}

json bench_summary(const std::vector<BenchRow>& rows) {
  const auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json exps = json::array();
  for (const auto& f : fit_exponents(rows)) {
    json j = {{"phase", f.phase}, {"binned", f.binned}, {"cells", f.cells}};
    j["n_exponent"] = f.has_n ? json({{"estimate", f.n_exponent}, {"ci95", {num(f.n_ci_low), num(f.n_ci_high)}}}) : json(nullptr);
    j["K_exponent"] = f.has_k ? json({{"estimate", f.k_exponent}, {"ci95", {num(f.k_ci_low), num(f.k_ci_high)}}}) : json(nullptr);
    exps.push_back(std::move(j));
  }

  std::map<std::tuple<std::size_t, int, std::string>, std::array<std::vector<double>, 2>> by_cell;
  for (const auto& r : rows) by_cell[{r.n, r.k, r.phase}][r.binned ? 1 : 0].push_back(r.seconds);
  json ratios = json::array();
  for (const auto& [cell, secs] : by_cell) {
    json j = {{"n", std::get<0>(cell)}, {"K", std::get<1>(cell)}, {"phase", std::get<2>(cell)}};
    const bool both = !secs[0].empty() && !secs[1].empty();
    j["unbinned_seconds"] = secs[0].empty() ? json(nullptr) : json(median(secs[0]));
    j["binned_seconds"] = secs[1].empty() ? json(nullptr) : json(median(secs[1]));
    j["binned_to_unbinned_ratio"] = both ? json(median(secs[1]) / median(secs[0])) : json(nullptr);
    ratios.push_back(std::move(j));
  }
  return {{"schema_version", kReportSchemaVersion}, {"exponents", exps}, {"ratios", ratios}};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Componentwise gradient boosting with binning and momentum"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "fit a model from a CSV file");
  train_cmd->add_option("--data", tf.data, "training CSV")->required();
  train_cmd->add_option("--target", tf.target, "response column")->required();
  train_cmd->add_option("--val-frac", tf.val_frac, "fraction of rows held out for validation");
  train_cmd->add_option("--seed", tf.seed, "seed of the train/validation split");
  train_cmd->add_option("--out", tf.out, "model file")->required();
  train_cmd->add_option("--report", tf.report, "run report JSON");
  tf.model.add_to(*train_cmd);

  PredictFlags pf;
  auto* predict_cmd = app.add_subcommand("predict", "predict a CSV file with a stored model");
  predict_cmd->add_option("--model", pf.model, "model file")->required();
  predict_cmd->add_option("--data", pf.data, "CSV with the model's features")->required();
  predict_cmd->add_option("--out", pf.out, "predictions CSV (row, link, response)")->required();

  SimulateFlags sf;
  auto* sim_cmd = app.add_subcommand("simulate", "write a simulated dataset and its ground truth");
  sim_cmd->add_option("--n", sf.n, "rows");
  sim_cmd->add_option("--p", sf.p, "informative features");
  sim_cmd->add_option("--p-noise-rel", sf.p_noise_rel, "noise features per informative feature");
  sim_cmd->add_option("--snr", sf.snr, "signal-to-noise ratio");
  sim_cmd->add_option("--seed", sf.seed, "random seed");
  sim_cmd->add_option("--out", sf.out, "dataset CSV")->required();
  sim_cmd->add_option("--truth", sf.truth, "ground truth JSON");

  BenchFlags bf;
  bf.model.iters = 200;
  auto* bench_cmd = app.add_subcommand("bench", "time training over a grid of n and K");
  bench_cmd->add_option("--n", bf.n, "row counts")->delimiter(',');
  bench_cmd->add_option("--k", bf.k, "feature counts")->delimiter(',');
  bench_cmd->add_option("--binned", bf.binned, "yes, no or both")->check(CLI::IsMember({"yes", "no", "both"}));
  bench_cmd->add_option("--reps", bf.reps, "repetitions per cell");
  bench_cmd->add_option("--seed", bf.seed, "simulation seed");
  bench_cmd->add_option("--out", bf.out, "long-format timing CSV")->required();
  bench_cmd->add_option("--summary", bf.summary, "exponent and ratio summary JSON");
  bf.model.add_to(*bench_cmd);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(tf, out);
    if (*predict_cmd) return cmd_predict(pf);
    if (*sim_cmd) return cmd_simulate(sf, out);
    if (*bench_cmd) return cmd_bench(bf, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cwb::cli
