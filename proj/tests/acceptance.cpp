// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

#include "cli.hpp"
#include "cwb/binning.hpp"
#include "cwb/boosting.hpp"
#include "cwb/learner.hpp"
#include "cwb/simulate.hpp"

using namespace cwb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Eigen::VectorXd to_vec(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::shared_ptr<const Basis> shared(Basis b) { return std::make_shared<const Basis>(std::move(b)); }

std::vector<double> val_risks(const TrainLog& log) {
  std::vector<double> out;
  for (const auto& r : log.records) out.push_back(r.val_risk);
  return out;
}

// Holdout from the same truth with the simulation's noise level.
Dataset noisy_holdout(const GroundTruth& truth, std::size_t n, std::uint64_t seed) {
  const Dataset clean = sample_holdout(truth, n, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> z(0.0, truth.sigma);
  std::vector<double> y(clean.response().begin(), clean.response().end());
  for (auto& v : y) v += z(rng);
  return Dataset(clean.columns(), std::move(y), clean.target_name());
}

// 1. Binned kernels against dense products on the expanded design.
Outcome binned_kernels() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 1999;
    const int degree = 1 + static_cast<int>(rng() % 3);
    const int intervals = 2 + static_cast<int>(rng() % static_cast<unsigned>(23 - degree));
    std::vector<double> x(n);
    std::vector<double> r(n);
    std::vector<double> w;
    for (auto& v : x) v = trial % 5 == 0 ? std::round(u(rng)) : u(rng);
    for (auto& v : r) v = z(rng);
    if (trial % 2 == 1) {
      w.resize(n);
      for (auto& v : w) v = std::exp(z(rng));
    }
    if (count_distinct(x) < 2) x[0] = x[1] + 1.0;
    const int n_star = std::min<int>(2 + static_cast<int>(rng() % 200), static_cast<int>(count_distinct(x)));
    const auto col = FeatureColumn::numeric("x", x);
    const Basis basis = Basis::fit(BasisSpec::pspline("x", degree, intervals), col);
    const BinnedFeature bins = build_bins(x, n_star);
    const Eigen::MatrixXd reduced = basis.evaluate(bins.design_points);

    // oracle: discretize by linear scan and evaluate the recursive B-splines per row
    std::vector<double> xd(n);
    for (std::size_t i = 0; i < n; ++i) xd[i] = bins.design_points[oracle::nearest(bins.design_points, x[i])];
    const Eigen::MatrixXd zx = oracle::spline_design(basis.knots(), degree, basis.upper(), xd);
    const Eigen::VectorXd wv = w.empty() ? Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)) : to_vec(w);
    const Eigen::MatrixXd dense_mm = zx.transpose() * wv.asDiagonal() * zx;
    const Eigen::VectorXd dense_mv = zx.transpose() * (wv.array() * to_vec(r).array()).matrix();

    worst = std::max(worst, oracle::rel_err(bin_mat_mat(reduced, w, bins.index), dense_mm));
    worst = std::max(worst, oracle::rel_err(bin_mat_vec(reduced, r, w, bins.index), dense_mv));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10.0,
          "max rel err " + fmt("%.2e", worst) + " (< 1e-10), " + fmt("%.2f", secs) + " s (< 10 s)"};
}

// 2. df calibration round trip and categorical closed forms.
Outcome df_calibration() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_round = 0.0;
  double worst_dense = 0.0;
  double worst_cat = 0.0;
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = 300 + rng() % 700;
    std::vector<double> x(n);
    for (auto& v : x) v = 100.0 * u(rng) * u(rng);
    auto w = std::make_shared<std::vector<double>>(n, 1.0);
    if (trial % 2 == 1) {
      for (auto& v : *w) v = 0.2 + 2.0 * u(rng);
    }
    const auto col = FeatureColumn::numeric("x", x);
    auto basis = shared(Basis::fit(BasisSpec::pspline("x", 3, 20), col));
    if (basis->dimension() != 23) return {false, "spline dimension is not 23"};
    for (double target : {3.0, 5.0, 9.0}) {
      for (DfKind kind : {DfKind::Df1, DfKind::Df2}) {
        LearnerOptions opt;
        opt.df_target = target;
        opt.df_kind = kind;
        const BaseLearner l(basis, col, w, opt);
        const auto spec = dro_eigenvalues(l.xtwx(), l.penalty());
        const double lam = df_to_lambda(spec.s, target, kind);
        worst_round = std::max(worst_round, std::abs(degrees_of_freedom(spec.s, lam, kind) - target));
        const Eigen::MatrixXd h = oracle::hat(basis->design(col), l.penalty().dense, l.lambda(), to_vec(*w));
        const double dense = kind == DfKind::Df1 ? oracle::df1(h) : oracle::df2(h);
        worst_dense = std::max(worst_dense, std::abs(dense - target));
      }
    }
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int classes = 10 + static_cast<int>(rng() % 11);
    std::vector<double> counts(static_cast<std::size_t>(classes));
    std::vector<int> codes;
    for (int k = 0; k < classes; ++k) {
      counts[static_cast<std::size_t>(k)] = static_cast<double>(1 + rng() % 60);
      for (int i = 0; i < static_cast<int>(counts[static_cast<std::size_t>(k)]); ++i) codes.push_back(k);
    }
    Eigen::MatrixXd zc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(codes.size()), classes);
    for (std::size_t i = 0; i < codes.size(); ++i) zc(static_cast<Eigen::Index>(i), codes[i]) = 1.0;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(classes, classes);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(zc.rows());
    for (DfKind kind : {DfKind::Df1, DfKind::Df2}) {
      for (double target : {3.0, 5.0, 9.0}) {
        const double lam = categorical_df_to_lambda(counts, target, kind);
        worst_round = std::max(worst_round, std::abs(categorical_df(counts, lam, kind) - target));
      }
      const double lam = std::exp(8.0 * u(rng) - 4.0);
      const Eigen::MatrixXd h = oracle::hat(zc, eye, lam, ones);
      const double dense = kind == DfKind::Df1 ? oracle::df1(h) : oracle::df2(h);
      worst_cat = std::max(worst_cat, std::abs(categorical_df(counts, lam, kind) - dense));
    }
  }
  const bool pass = worst_round < 1e-6 && worst_dense < 1e-6 && worst_cat < 1e-10;
  return {pass, "round trip " + fmt("%.2e", worst_round) + ", spline dense trace " + fmt("%.2e", worst_dense) +
                    " (< 1e-6), categorical dense trace " + fmt("%.2e", worst_cat) + " (< 1e-10)"};
}

// 3. MISE with and without binning.
Outcome estimation_parity() {
  const auto t0 = Clock::now();
  SimConfig sc;
  sc.n = 20000;
  sc.p = 4;
  sc.snr = 1.0;
  sc.seed = 303;
  const auto [data, truth] = simulate(sc);
  const Dataset holdout = sample_holdout(truth, 5000, 304);
  TrainConfig c;
  c.max_iters = 100000;
  const TrainResult plain = train(data, &holdout, c);
  c.pool.learner.bins = BinConfig::sqrt_n();
  const TrainResult binned = train(data, &holdout, c);
  const double m_plain = mise(plain.model, truth);
  const double m_binned = mise(binned.model, truth);
  const double rel = std::abs(m_binned - m_plain) / m_plain;
  const double secs = seconds_since(t0);
  const bool stopped = plain.log.stop_iteration && binned.log.stop_iteration;
  return {rel < 0.05 && secs < 300.0 && stopped,
          "MISE " + fmt("%.4f", m_plain) + " vs binned " + fmt("%.4f", m_binned) + " at early-stopped iterations " +
              std::to_string(plain.log.model_iteration) + "/" + std::to_string(binned.log.model_iteration) +
              ", rel diff " + fmt("%.4f", rel) + " (< 0.05), " + fmt("%.0f", secs) + " s"};
}

// 4. Wall time of binned vs unbinned training.
Outcome binning_speedup() {
  SimConfig sc;
  sc.n = 100000;
  sc.p = 10;
  sc.p_noise_rel = 0.0;
  sc.seed = 404;
  const auto data = simulate(sc).first;
  TrainConfig c;
  c.max_iters = 200;
  c.early_stopping = false;
  auto timed = [&](BinConfig bins) {
    c.pool.learner.bins = bins;
    const auto t0 = Clock::now();
    const TrainResult r = train(data, nullptr, c);
    return seconds_since(t0);
  };
  auto median3 = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  std::vector<double> plain_runs;
  std::vector<double> binned_runs;
  for (int rep = 0; rep < 3; ++rep) {
    plain_runs.push_back(timed(BinConfig::none()));
    binned_runs.push_back(timed(BinConfig::sqrt_n()));
  }
  const double plain = median3(plain_runs);
  const double binned = median3(binned_runs);
  const double ratio = binned / plain;
  return {ratio <= 0.5, "median of 3: unbinned " + fmt("%.2f", plain) + " s, binned " + fmt("%.2f", binned) + " s, ratio " +
                            fmt("%.3f", ratio) + " (<= 0.5), speedup " + fmt("%.1f", 1.0 / ratio) + "x"};
}

// 5. Scaling exponents from the bench command.
Outcome scaling_exponents() {
  const auto dir = oracle::temp_dir("accept_bench");
  auto bench = [&](const std::string& ns, const std::string& ks, const std::string& tag) {
    std::ostringstream out;
    std::ostringstream err;
    const std::string summary = (dir / (tag + ".json")).string();
    const int code = cli::run({"cwb", "bench", "--n", ns, "--k", ks, "--binned", "both", "--reps", "5", "--iters", "200",
                               "--seed", "5", "--out", (dir / (tag + ".csv")).string(), "--summary", summary},
                              out, err);
    if (code != 0) throw std::runtime_error("bench failed: " + err.str());
    std::ifstream in(summary);
    return nlohmann::json::parse(in);
  };
  const auto by_n = bench("10000,30000,100000", "10", "n");
  const auto by_k = bench("30000", "5,10,20", "k");
  auto exponent = [](const nlohmann::json& s, bool binned, const char* key) {
    for (const auto& e : s["exponents"]) {
      if (e["phase"] == "iteration" && e["binned"] == binned && !e[key].is_null()) {
        return e[key]["estimate"].get<double>();
      }
    }
    return std::nan("");
  };
  const double n_exp = exponent(by_n, false, "n_exponent");
  const double k_exp = exponent(by_k, false, "K_exponent");
  const double n_exp_b = exponent(by_n, true, "n_exponent");
  const double k_exp_b = exponent(by_k, true, "K_exponent");
  const bool pass = std::abs(n_exp - 1.0) <= 0.2 && std::abs(k_exp - 1.0) <= 0.2;
  return {pass, "per-iteration slopes unbinned n " + fmt("%.3f", n_exp) + ", K " + fmt("%.3f", k_exp) +
                    " (1 +- 0.2); binned n " + fmt("%.3f", n_exp_b) + ", K " + fmt("%.3f", k_exp_b) + " (informational)"};
}

// 6. Iterations HCWB needs to reach the early-stopped CWB validation risk.
Outcome acceleration() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::ostringstream seeds;
  for (int seed = 1; seed <= 20; ++seed) {
    SimConfig sc;
    sc.n = 10000;
    sc.p = 10;
    sc.snr = 1.0;
    sc.seed = static_cast<std::uint64_t>(600 + seed);
    const auto [data, truth] = simulate(sc);
    const Dataset holdout = noisy_holdout(truth, 2500, sc.seed + 1000);
    TrainConfig c;
    c.max_iters = 50000;
    c.pool.learner.bins = BinConfig::sqrt_n();
    const TrainResult cwb = train(data, &holdout, c);
    const int m = cwb.log.model_iteration;
    const double target = m > 0 ? cwb.log.records[static_cast<std::size_t>(m - 1)].val_risk : cwb.log.initial_val_risk;

    TrainConfig h = c;
    h.algorithm = Algorithm::Hcwb;
    h.momentum = 0.037;
    h.refit_on_all_data = false;
    h.early_stopping = false;
    h.max_iters = std::max(1, m);
    const TrainResult hcwb = train(data, &holdout, h);
    const auto risks = val_risks(hcwb.log);
    int reached = -1;
    for (std::size_t i = 0; i < risks.size(); ++i) {
      if (risks[i] <= target) {
        reached = static_cast<int>(i) + 1;
        break;
      }
    }
    const bool win = reached > 0 && reached < m;
    wins += win ? 1 : 0;
    seeds << (seed > 1 ? " " : "") << m << "/" << (reached > 0 ? std::to_string(reached) : std::string("-"));
  }
  const double secs = seconds_since(t0);
  return {wins >= 15 && secs < 900.0, std::to_string(wins) + "/20 seeds faster (>= 15), CWB/HCWB iterations: " +
                                          seeds.str() + ", " + fmt("%.0f", secs) + " s"};
}

// 7. Validation risk past the early-stop point: ACWB vs HCWB after the switch.
Outcome fine_tuning() {
  constexpr int kAhead = 50;
  std::ostringstream notes;
  bool any = false;
  for (int seed = 1; seed <= 10; ++seed) {
    SimConfig sc;
    sc.n = 20000;
    sc.p = 5;
    sc.snr = 0.1;
    sc.seed = static_cast<std::uint64_t>(700 + seed);
    const auto [data, truth] = simulate(sc);
    const Dataset holdout = noisy_holdout(truth, 2000, sc.seed + 1000);

    TrainConfig a;
    a.algorithm = Algorithm::Acwb;
    a.early_stopping = false;
    a.max_iters = 1500;
    a.pool.learner.bins = BinConfig::sqrt_n();
    const TrainResult acwb = train(data, &holdout, a);
    const auto ar = val_risks(acwb.log);
    const auto stop = early_stop_check(ar, a.patience);
    bool acwb_rises = false;
    double acwb_delta = std::nan("");
    if (stop && stop->stop_iteration + kAhead <= static_cast<int>(ar.size())) {
      const auto s = static_cast<std::size_t>(stop->stop_iteration - 1);
      acwb_delta = ar[s + kAhead] - ar[s];
      acwb_rises = acwb_delta > 0.0;
    }

    TrainConfig h = a;
    h.algorithm = Algorithm::Hcwb;
    h.refit_on_all_data = false;
    const TrainResult hcwb = train(data, &holdout, h);
    const auto hr = val_risks(hcwb.log);
    bool hcwb_flat = false;
    double slope = std::nan("");
    if (hcwb.log.switch_iteration && *hcwb.log.switch_iteration + kAhead <= static_cast<int>(hr.size())) {
      const auto s = static_cast<std::size_t>(*hcwb.log.switch_iteration - 1);
      slope = (hr[s + kAhead] - hr[s]) / kAhead;
      hcwb_flat = slope <= 1e-6;
    }
    any = any || (acwb_rises && hcwb_flat);
    notes << (seed > 1 ? "; " : "") << "seed " << sc.seed << (acwb_rises && hcwb_flat ? "*" : "") << ": ACWB "
          << fmt("%+.3g", acwb_delta) << ", HCWB " << fmt("%+.3g", slope) << "/iter";
  }
  return {any, "ACWB risk change 50 iterations past its stop, HCWB mean post-switch change (* = both hold): " +
                   notes.str()};
}

// 8. Aggregated parameters against accumulated predictions.
Outcome aggregation() {
  SimConfig sc;
  sc.n = 1000;
  sc.p = 4;
  sc.seed = 808;
  const auto data = simulate(sc).first;
  auto [tr, va] = split(data, {0.2, 9});
  double worst = 0.0;
  for (Algorithm alg : {Algorithm::Cwb, Algorithm::Acwb, Algorithm::Hcwb}) {
    TrainConfig c;
    c.algorithm = alg;
    c.max_iters = 400;
    c.early_stopping = false;
    c.pool.linear_learners = true;
    const TrainResult r = train(tr, &va, c);
    const Dataset rows = r.accumulated_on_all_rows ? Dataset::concat(tr, va) : tr;
    const auto pt = predict(r.model, rows);
    const auto pv = predict(r.model, va);
    for (std::size_t i = 0; i < pt.size(); ++i) worst = std::max(worst, std::abs(pt[i] - r.accumulated_link[i]));
    for (std::size_t i = 0; i < pv.size(); ++i) {
      worst = std::max(worst, std::abs(pv[i] - r.accumulated_validation_link[i]));
    }
  }
  return {worst < 1e-8, "max abs diff over CWB, ACWB, HCWB " + fmt("%.2e", worst) + " (< 1e-8)"};
}

// 9. Thread count does not change the model or the selections.
Outcome determinism() {
  const auto dir = oracle::temp_dir("accept_det");
  std::ostringstream out;
  std::ostringstream err;
  const auto csv = (dir / "data.csv").string();
  if (cli::run({"cwb", "simulate", "--n", "3000", "--p", "6", "--seed", "9", "--out", csv}, out, err) != 0) {
    return {false, "simulate failed: " + err.str()};
  }
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::vector<std::string> models;
  std::vector<nlohmann::json> selections;
  for (const char* threads : {"1", "8"}) {
    const auto model = dir / (std::string("model_") + threads + ".json");
    const auto report = dir / (std::string("report_") + threads + ".json");
    const int code = cli::run({"cwb", "train", "--data", csv, "--target", "y", "--algo", "hcwb", "--iters", "400",
                               "--bins", "sqrt", "--seed", "3", "--threads", threads, "--out", model.string(),
                               "--report", report.string()},
                              out, err);
    if (code != 0) return {false, "train failed: " + err.str()};
    models.push_back(slurp(model));
    nlohmann::json sel = nlohmann::json::array();
    const auto doc = nlohmann::json::parse(slurp(report));
    for (const auto& rec : doc["log"]["records"]) {
      sel.push_back({rec["selected"], rec["selected_cor"]});
    }
    selections.push_back(sel);
  }
  const bool same_model = models[0] == models[1];
  const bool same_sel = selections[0] == selections[1];
  return {same_model && same_sel, std::string("model files ") + (same_model ? "identical" : "differ") +
                                      ", selections " + (same_sel ? "identical" : "differ") + " over " +
                                      std::to_string(selections[0].size()) + " iterations"};
}

// 10. Categorical encodings.
Outcome categorical_encodings() {
  const auto [data, effects] = simulate_categorical(3000, 12, 1.0, 1010);
  const FeatureColumn& col = data.column("cat");
  const auto& cats = col.categories();
  const auto y = data.response();
  const std::size_t classes = cats.levels.size();

  std::vector<double> sums(classes, 0.0);
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    sums[static_cast<std::size_t>(cats.codes[i] - 1)] += y[i];
    counts[static_cast<std::size_t>(cats.codes[i] - 1)] += 1.0;
  }
  double worst_mean = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    const BaseLearner l(shared(Basis::fit(BasisSpec::categorical_binary("cat", cats.levels[k]), col)), col, nullptr, {});
    const FitResult fit = l.fit(make_residuals(y, {}));
    worst_mean = std::max(worst_mean, std::abs(fit.theta(0) - sums[k] / counts[k]));
  }

  auto ridge_basis = shared(Basis::fit(BasisSpec::categorical_ridge("cat"), col));
  const BaseLearner ridge(ridge_basis, col, nullptr, {});
  const FitResult fit = ridge.fit(make_residuals(y, {}));
  const Eigen::VectorXd ref =
      oracle::penalized_ls(ridge_basis->design(col), Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(classes),
                                                                               static_cast<Eigen::Index>(classes)),
                           ridge.lambda(), Eigen::VectorXd::Ones(static_cast<Eigen::Index>(y.size())), to_vec(y));
  const double worst_ridge = (fit.theta - ref).cwiseAbs().maxCoeff();

  PoolOptions po;
  const auto ridge_specs = default_specs(data, po);
  po.categorical = CategoricalEncoding::Binary;
  const auto binary_specs = default_specs(data, po);
  const bool layout = ridge_specs.size() == 1 && binary_specs.size() == classes;
  return {worst_mean == 0.0 && worst_ridge < 1e-10 && layout,
          "binary vs class means " + fmt("%.1e", worst_mean) + " (exact), ridge vs dense " + fmt("%.2e", worst_ridge) +
              " (< 1e-10), learners ridge " + std::to_string(ridge_specs.size()) + " / binary " +
              std::to_string(binary_specs.size()) + " for " + std::to_string(classes) + " classes"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"binned kernel oracle equivalence", binned_kernels},
      {"df calibration round trip", df_calibration},
      {"estimation parity under binning", estimation_parity},
      {"binning speedup", binning_speedup},
      {"scaling exponents", scaling_exponents},
      {"accelerated convergence", acceleration},
      {"post-switch fine tuning", fine_tuning},
      {"aggregation invariant", aggregation},
      {"determinism across thread counts", determinism},
      {"categorical encodings", categorical_encodings},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
