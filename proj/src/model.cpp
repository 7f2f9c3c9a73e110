#include "cwb/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cwb/errors.hpp"

namespace cwb {

using nlohmann::json;

std::vector<double> learner_contribution(const ModelLearner& learner, const Dataset& data) {
  const auto* col = data.find(learner.basis->feature());
  if (col == nullptr) throw PredictionError("data lacks feature '" + learner.basis->feature() + "' used by the model");
  const SparseRows rows = learner.basis->sparse_rows(*col);
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rows.dot(i, learner.theta_f);
  return out;
}

std::vector<double> predict(const TrainedModel& model, const Dataset& data, PredictType type) {
  std::vector<double> f(data.rows(), model.offset);
  for (const auto& l : model.learners) {
    if (l.theta_f.isZero(0.0)) {
      // Still require the column so a schema mismatch is reported.
      if (data.find(l.basis->feature()) == nullptr) {
        throw PredictionError("data lacks feature '" + l.basis->feature() + "' used by the model");
      }
      continue;
    }
    const auto c = learner_contribution(l, data);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += c[i];
  }
  if (type == PredictType::Response) {
    for (auto& v : f) v = response_transform(model.loss, v);
  }
  return f;
}

std::vector<double> partial_effect(const TrainedModel& model, const std::string& feature,
                                   std::span<const double> grid) {
  const ModelLearner* first = nullptr;
  for (const auto& l : model.learners) {
    if (l.basis->feature() == feature) {
      first = &l;
      break;
    }
  }
  if (first == nullptr) return std::vector<double>(grid.size(), 0.0);

  if (first->basis->is_numeric()) {
    std::vector<double> out(grid.size(), 0.0);
    for (const auto& l : model.learners) {
      if (l.basis->feature() != feature) continue;
      const SparseRows rows = l.basis->sparse_rows(grid);
      for (std::size_t i = 0; i < grid.size(); ++i) out[i] += rows.dot(i, l.theta_f);
    }
    return out;
  }

  const auto& levels = first->basis->levels();
  std::vector<int> codes(levels.size());
  for (std::size_t k = 0; k < codes.size(); ++k) codes[k] = static_cast<int>(k) + 1;
  const auto column = FeatureColumn::categorical(feature, levels, codes);
  std::vector<double> out(levels.size(), 0.0);
  for (const auto& l : model.learners) {
    if (l.basis->feature() != feature) continue;
    const SparseRows rows = l.basis->sparse_rows(column);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rows.dot(i, l.theta_f);
  }
  return out;
}

std::vector<std::string> effect_levels(const TrainedModel& model, const std::string& feature) {
  for (const auto& l : model.learners) {
    if (l.basis->feature() == feature) return l.basis->levels();
  }
  return {};
}

std::string encode_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double decode_real(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ModelIOError("bad real '" + s + "' in model file");
  return v;
}

namespace {

json encode_vector(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(encode_real(v[i]));
  return arr;
}

Eigen::VectorXd decode_vector(const json& arr, int expected) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != expected) {
    throw ModelIOError("parameter vector has wrong length");
  }
  Eigen::VectorXd v(expected);
  for (int i = 0; i < expected; ++i) v[i] = decode_real(arr[static_cast<std::size_t>(i)].get<std::string>());
  return v;
}

}  // namespace

json to_json(const TrainedModel& model) {
  json doc;
  doc["version"] = kModelFormatVersion;
  doc["loss"] = to_string(model.loss);
  doc["offset"] = encode_real(model.offset);
  json learners = json::array();
  for (const auto& l : model.learners) {
    const auto& b = *l.basis;
    json e;
    e["kind"] = to_string(b.kind());
    e["feature"] = b.feature();
    e["label"] = b.label();
    e["dimension"] = b.dimension();
    if (b.kind() == BasisKind::PSpline) {
      e["degree"] = b.spec().degree;
      e["n_knots"] = b.spec().n_knots;
    }
    if (b.is_numeric()) {
      e["lower"] = encode_real(b.lower());
      e["upper"] = encode_real(b.upper());
    } else {
      e["levels"] = b.levels();
    }
    if (b.kind() == BasisKind::CategoricalBinary) e["level"] = b.spec().level;
    e["theta_f"] = encode_vector(l.theta_f);
    e["theta_h"] = encode_vector(l.theta_h);
    learners.push_back(std::move(e));
  }
  doc["learners"] = std::move(learners);
  doc["config"] = model.config;
  doc["train_log"] = model.train_log;
  return doc;
}

TrainedModel model_from_json(const json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("version")) throw ModelIOError("model document lacks a version");
    const auto version = doc.at("version").get<std::string>();
    if (version != kModelFormatVersion) throw ModelIOError("unsupported model format version '" + version + "'");
    TrainedModel m;
    m.loss = loss_from_string(doc.at("loss").get<std::string>());
    m.offset = decode_real(doc.at("offset").get<std::string>());
    if (!std::isfinite(m.offset)) throw ModelIOError("non-finite offset");
    for (const auto& e : doc.at("learners")) {
      BasisSpec spec;
      spec.kind = basis_kind_from_string(e.at("kind").get<std::string>());
      spec.feature = e.at("feature").get<std::string>();
      double lower = 0.0;
      double upper = 0.0;
      std::vector<std::string> levels;
      if (spec.kind == BasisKind::PSpline) {
        spec.degree = e.at("degree").get<int>();
        spec.n_knots = e.at("n_knots").get<int>();
      }
      if (spec.kind == BasisKind::PSpline || spec.kind == BasisKind::Linear) {
        lower = decode_real(e.at("lower").get<std::string>());
        upper = decode_real(e.at("upper").get<std::string>());
      } else {
        levels = e.at("levels").get<std::vector<std::string>>();
      }
      if (spec.kind == BasisKind::CategoricalBinary) spec.level = e.at("level").get<std::string>();
      auto basis = std::make_shared<const Basis>(Basis::restore(spec, lower, upper, std::move(levels)));
      const int d = basis->dimension();
      if (e.contains("dimension") && e.at("dimension").get<int>() != d) throw ModelIOError("dimension mismatch");
      ModelLearner l{basis, decode_vector(e.at("theta_f"), d), decode_vector(e.at("theta_h"), d)};
      m.learners.push_back(std::move(l));
    }
    m.config = doc.value("config", json::object());
    m.train_log = doc.value("train_log", json::object());
    return m;
  } catch (const ModelIOError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ModelIOError(std::string("malformed model document: ") + ex.what());
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelIOError("cannot write model to '" + path.string() + "'");
  out << to_json(model).dump(2) << '\n';
  if (!out) throw ModelIOError("write failed for '" + path.string() + "'");
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelIOError("cannot open model '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& ex) {
    throw ModelIOError(std::string("cannot parse model file: ") + ex.what());
  }
  return model_from_json(doc);
}

}  // namespace cwb
