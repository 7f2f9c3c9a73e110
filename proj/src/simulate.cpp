#include "cwb/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "cwb/errors.hpp"

namespace cwb {

using nlohmann::json;

namespace {

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> uniform_column(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

std::vector<double> normal_column(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = z(rng);
  return x;
}

std::vector<FeatureColumn> feature_columns(const GroundTruth& truth, std::size_t n, std::mt19937_64& rng) {
  std::vector<FeatureColumn> cols;
  for (const auto& e : truth.effects) cols.push_back(FeatureColumn::numeric(e.feature, uniform_column(rng, n, e.lower, e.upper)));
  for (const auto& name : truth.noise_features) cols.push_back(FeatureColumn::numeric(name, normal_column(rng, n)));
  return cols;
}

}  // namespace

int SimConfig::noise_features() const { return static_cast<int>(std::lround(p * p_noise_rel)); }

void SimConfig::validate() const {
  if (n < 2) throw ConfigError("simulation needs n >= 2");
  if (p < 1) throw ConfigError("simulation needs p >= 1");
  if (!(p_noise_rel >= 0.0) || !std::isfinite(p_noise_rel)) throw ConfigError("p_noise_rel must be finite and >= 0");
  if (!(snr > 0.0)) throw ConfigError("SNR must be > 0");
}

Basis TrueEffect::basis() const {
  return Basis::restore(BasisSpec::pspline(feature, kTruthDegree, kTruthIntervals), lower, upper, {});
}

std::vector<double> TrueEffect::evaluate(std::span<const double> x) const {
  const SparseRows rows = basis().sparse_rows(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = rows.dot(i, tau);
  return out;
}

std::pair<Dataset, GroundTruth> simulate(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u100(0.0, 100.0);
  std::normal_distribution<double> coef(0.0, 3.0);

  GroundTruth truth;
  truth.snr = config.snr;
  const int d = kTruthIntervals + kTruthDegree;
  for (int k = 0; k < config.p; ++k) {
    TrueEffect e;
    e.feature = "x" + std::to_string(k + 1);
    e.lower = u100(rng);
    e.upper = e.lower + u100(rng);
    e.tau.resize(d);
    for (int j = 0; j < d; ++j) e.tau[j] = coef(rng);
    truth.effects.push_back(std::move(e));
  }
  for (int k = 0; k < config.noise_features(); ++k) truth.noise_features.push_back("z" + std::to_string(k + 1));

  auto cols = feature_columns(truth, config.n, rng);
  std::vector<double> eta(config.n, 0.0);
  for (std::size_t k = 0; k < truth.effects.size(); ++k) {
    const auto part = truth.effects[k].evaluate(cols[k].values());
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] += part[i];
  }

  truth.sigma = std::isinf(config.snr) ? 0.0 : sample_sd(eta) / config.snr;
  std::vector<double> y = eta;
  if (truth.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, truth.sigma);
    for (auto& v : y) v += noise(rng);
  }
  truth.eta = std::move(eta);
  return {Dataset(std::move(cols), std::move(y), truth.target), std::move(truth)};
}

Dataset sample_holdout(const GroundTruth& truth, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto cols = feature_columns(truth, n, rng);
  Dataset data(std::move(cols), std::vector<double>(n, 0.0), truth.target);
  auto eta = true_predictor(truth, data);
  return Dataset(data.columns(), std::move(eta), truth.target);
}

std::vector<double> true_predictor(const GroundTruth& truth, const Dataset& data) {
  std::vector<double> eta(data.rows(), 0.0);
  for (const auto& e : truth.effects) {
    const auto part = e.evaluate(data.column(e.feature).values());
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] += part[i];
  }
  return eta;
}

namespace {

// Trapezoid weights on an equidistant grid with spacing h.
double trapezoid(std::span<const double> v, double h) {
  double s = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
  return s * h;
}

}  // namespace

double mise(const TrainedModel& model, const GroundTruth& truth, int quad_points) {
  if (quad_points < 101) throw ConfigError("MISE needs at least 101 quadrature points");
  if (truth.effects.empty()) throw ConfigError("ground truth has no informative features");
  const auto q = static_cast<std::size_t>(quad_points);
  double total = 0.0;
  for (const auto& e : truth.effects) {
    const double width = e.upper - e.lower;
    const double h = width / static_cast<double>(q - 1);
    std::vector<double> grid(q);
    for (std::size_t i = 0; i < q; ++i) grid[i] = e.lower + h * static_cast<double>(i);
    grid.back() = e.upper;

    const auto truth_curve = e.evaluate(grid);
    const auto est_curve = partial_effect(model, e.feature, grid);
    std::vector<double> diff(q);
    for (std::size_t i = 0; i < q; ++i) diff[i] = truth_curve[i] - est_curve[i];
    // Centering both curves equals centering their difference.
    const double mean = width > 0.0 ? trapezoid(diff, h) / width : 0.0;
    for (auto& v : diff) v = (v - mean) * (v - mean);
    total += trapezoid(diff, h);
  }
  return total / static_cast<double>(truth.effects.size());
}

std::pair<Dataset, std::vector<double>> simulate_categorical(std::size_t n, int classes, double noise_sd,
                                                             std::uint64_t seed) {
  if (classes < 1) throw ConfigError("need at least one class");
  if (n < 1) throw ConfigError("need at least one row");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> effect(static_cast<std::size_t>(classes));
  for (auto& v : effect) v = z(rng);
  std::vector<std::string> levels;
  for (int c = 0; c < classes; ++c) levels.push_back("c" + std::to_string(c + 1));

  std::uniform_int_distribution<int> pick(1, classes);
  std::vector<int> codes(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    codes[i] = pick(rng);
    y[i] = effect[static_cast<std::size_t>(codes[i] - 1)] + noise_sd * z(rng);
  }
  std::vector<FeatureColumn> cols{FeatureColumn::categorical("cat", std::move(levels), std::move(codes))};
  return {Dataset(std::move(cols), std::move(y), "y"), std::move(effect)};
}

json truth_to_json(const GroundTruth& truth) {
  json effects = json::array();
  for (const auto& e : truth.effects) {
    json tau = json::array();
    for (Eigen::Index j = 0; j < e.tau.size(); ++j) tau.push_back(encode_real(e.tau[j]));
    effects.push_back({{"feature", e.feature},
                       {"lower", encode_real(e.lower)},
                       {"upper", encode_real(e.upper)},
                       {"degree", kTruthDegree},
                       {"inner_knots", kTruthIntervals - 1},
                       {"tau", std::move(tau)}});
  }
  return {{"version", "1"},
          {"target", truth.target},
          {"snr", std::isinf(truth.snr) ? json("inf") : json(encode_real(truth.snr))},
          {"sigma", encode_real(truth.sigma)},
          {"noise_features", truth.noise_features},
          {"effects", std::move(effects)}};
}

GroundTruth truth_from_json(const json& doc) {
  try {
    GroundTruth t;
    t.target = doc.at("target").get<std::string>();
    const auto snr = doc.at("snr").get<std::string>();
    t.snr = snr == "inf" ? std::numeric_limits<double>::infinity() : decode_real(snr);
    t.sigma = decode_real(doc.at("sigma").get<std::string>());
    t.noise_features = doc.at("noise_features").get<std::vector<std::string>>();
    for (const auto& je : doc.at("effects")) {
      TrueEffect e;
      e.feature = je.at("feature").get<std::string>();
      e.lower = decode_real(je.at("lower").get<std::string>());
      e.upper = decode_real(je.at("upper").get<std::string>());
      const auto& tau = je.at("tau");
      e.tau.resize(static_cast<Eigen::Index>(tau.size()));
      for (std::size_t j = 0; j < tau.size(); ++j) e.tau[static_cast<Eigen::Index>(j)] = decode_real(tau[j].get<std::string>());
      if (e.tau.size() != kTruthIntervals + kTruthDegree) throw ModelIOError("truth coefficient vector has wrong length");
      t.effects.push_back(std::move(e));
    }
    return t;
  } catch (const json::exception& ex) {
    throw ModelIOError(std::string("malformed truth file: ") + ex.what());
  }
}

void save_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ModelIOError("cannot write " + path.string());
  out << truth_to_json(truth).dump(2) << '\n';
}

GroundTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelIOError("cannot read " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& ex) {
    throw ModelIOError(std::string("malformed truth file: ") + ex.what());
  }
  return truth_from_json(doc);
}

}  // namespace cwb
