#include "cwb/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cwb/errors.hpp"

namespace cwb {

FeatureColumn FeatureColumn::numeric(std::string name, std::vector<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw IngestionError("column '" + name + "': non-finite value at row " + std::to_string(i + 1));
    }
  }
  return FeatureColumn(std::move(name), NumericValues{std::move(values)});
}

FeatureColumn FeatureColumn::categorical(std::string name, std::vector<std::string> levels,
                                         std::vector<int> codes) {
  if (levels.empty()) {
    throw IngestionError("column '" + name + "': categorical column needs at least one level");
  }
  const int c = static_cast<int>(levels.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 1 || codes[i] > c) {
      throw IngestionError("column '" + name + "': code out of range at row " + std::to_string(i + 1));
    }
  }
  return FeatureColumn(std::move(name), CategoricalValues{std::move(levels), std::move(codes)});
}

std::size_t FeatureColumn::size() const {
  return std::visit(
      [](const auto& d) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(d)>, NumericValues>) {
          return d.values.size();
        } else {
          return d.codes.size();
        }
      },
      data_);
}

std::span<const double> FeatureColumn::values() const {
  const auto* d = std::get_if<NumericValues>(&data_);
  if (d == nullptr) throw ConfigError("column '" + name_ + "' is not numeric");
  return d->values;
}

const CategoricalValues& FeatureColumn::categories() const {
  const auto* d = std::get_if<CategoricalValues>(&data_);
  if (d == nullptr) throw ConfigError("column '" + name_ + "' is not categorical");
  return *d;
}

FeatureColumn FeatureColumn::subset(std::span<const std::size_t> rows) const {
  if (is_numeric()) {
    const auto src = values();
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(src[r]);
    return FeatureColumn(name_, NumericValues{std::move(out)});
  }
  const auto& cat = categories();
  std::vector<int> codes;
  codes.reserve(rows.size());
  for (auto r : rows) codes.push_back(cat.codes[r]);
  return FeatureColumn(name_, CategoricalValues{cat.levels, std::move(codes)});
}

Dataset::Dataset(std::vector<FeatureColumn> columns, std::vector<double> response,
                 std::string target_name)
    : columns_(std::move(columns)), response_(std::move(response)), target_name_(std::move(target_name)) {
  std::unordered_set<std::string> names;
  std::size_t n = target_name_.empty() ? std::size_t{0} : response_.size();
  bool have_n = !target_name_.empty();
  for (const auto& col : columns_) {
    if (!names.insert(col.name()).second) throw IngestionError("duplicate column name '" + col.name() + "'");
    if (!have_n) {
      n = col.size();
      have_n = true;
    } else if (col.size() != n) {
      throw IngestionError("column '" + col.name() + "' has " + std::to_string(col.size()) +
                           " rows, expected " + std::to_string(n));
    }
  }
  if (!target_name_.empty()) {
    if (names.count(target_name_) != 0) throw IngestionError("target '" + target_name_ + "' is also a feature");
    for (std::size_t i = 0; i < response_.size(); ++i) {
      if (!std::isfinite(response_[i])) throw IngestionError("non-finite response at row " + std::to_string(i + 1));
    }
  } else if (!response_.empty()) {
    throw IngestionError("response given without a target name");
  }
  rows_ = n;
}

const FeatureColumn* Dataset::find(const std::string& name) const {
  for (const auto& c : columns_) {
    if (c.name() == name) return &c;
  }
  return nullptr;
}

const FeatureColumn& Dataset::column(const std::string& name) const {
  const auto* c = find(name);
  if (c == nullptr) throw ConfigError("no column named '" + name + "'");
  return *c;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<FeatureColumn> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) cols.push_back(c.subset(rows));
  std::vector<double> resp;
  if (has_response()) {
    resp.reserve(rows.size());
    for (auto r : rows) resp.push_back(response_[r]);
  }
  Dataset out(std::move(cols), std::move(resp), target_name_);
  out.rows_ = rows.size();
  return out;
}

Dataset Dataset::concat(const Dataset& first, const Dataset& second) {
  if (first.columns_.size() != second.columns_.size() || first.target_name_ != second.target_name_) {
    throw ConfigError("cannot concatenate datasets with different schemas");
  }
  std::vector<FeatureColumn> cols;
  for (const auto& a : first.columns_) {
    const auto* b = second.find(a.name());
    if (b == nullptr || b->is_numeric() != a.is_numeric()) {
      throw ConfigError("cannot concatenate: column '" + a.name() + "' differs");
    }
    if (a.is_numeric()) {
      std::vector<double> v(a.values().begin(), a.values().end());
      v.insert(v.end(), b->values().begin(), b->values().end());
      cols.push_back(FeatureColumn::numeric(a.name(), std::move(v)));
    } else {
      auto levels = a.categories().levels;
      auto codes = a.categories().codes;
      std::unordered_map<std::string, int> lookup;
      for (std::size_t k = 0; k < levels.size(); ++k) lookup.emplace(levels[k], static_cast<int>(k) + 1);
      const auto& bc = b->categories();
      std::vector<int> remap(bc.levels.size());
      for (std::size_t k = 0; k < bc.levels.size(); ++k) {
        auto [it, inserted] = lookup.emplace(bc.levels[k], static_cast<int>(levels.size()) + 1);
        if (inserted) levels.push_back(bc.levels[k]);
        remap[k] = it->second;
      }
      for (int code : bc.codes) codes.push_back(remap[static_cast<std::size_t>(code - 1)]);
      cols.push_back(FeatureColumn::categorical(a.name(), std::move(levels), std::move(codes)));
    }
  }
  std::vector<double> resp(first.response_);
  resp.insert(resp.end(), second.response_.begin(), second.response_.end());
  Dataset out(std::move(cols), std::move(resp), first.target_name_);
  out.rows_ = first.rows_ + second.rows_;
  return out;
}

namespace {

// Splits the whole stream into records of fields. Quoted fields may contain
// separators, doubled quotes and line breaks.
std::vector<std::vector<std::string>> parse_records(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A blank line produces a single empty field; skip it.
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field.empty()) throw IngestionError("stray quote on line " + std::to_string(line));
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw IngestionError("unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool parse_real(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string cell_location(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& target, const SchemaOverrides& overrides) {
  auto records = parse_records(in);
  if (records.empty()) throw IngestionError("empty CSV input (no header)");
  const auto header = records.front();
  const std::size_t width = header.size();
  const std::size_t n = records.size() - 1;
  if (n == 0) throw IngestionError("CSV input has a header but no data rows");

  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw IngestionError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                           " fields, header has " + std::to_string(width));
    }
  }
  for (const auto& [name, kind] : overrides) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw ConfigError("schema override for unknown column '" + name + "'");
    }
  }

  std::size_t target_index = width;
  if (!target.empty()) {
    auto it = std::find(header.begin(), header.end(), target);
    if (it == header.end()) throw ConfigError("target column '" + target + "' not found");
    target_index = static_cast<std::size_t>(it - header.begin());
    auto ov = overrides.find(target);
    if (ov != overrides.end() && ov->second == ColumnKind::Categorical) {
      throw ConfigError("target column '" + target + "' must be numeric");
    }
  }

  std::vector<FeatureColumn> columns;
  std::vector<double> response;
  for (std::size_t j = 0; j < width; ++j) {
    const std::string& name = header[j];
    ColumnKind kind = ColumnKind::Auto;
    if (auto ov = overrides.find(name); ov != overrides.end()) kind = ov->second;
    if (j == target_index) kind = ColumnKind::Numeric;
    if (kind == ColumnKind::Auto) {
      double probe = 0.0;
      kind = parse_real(records[1][j], probe) ? ColumnKind::Numeric : ColumnKind::Categorical;
    }

    if (kind == ColumnKind::Numeric) {
      std::vector<double> values(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& cell = records[r + 1][j];
        if (!parse_real(cell, values[r])) {
          if (trim(cell).empty()) throw IngestionError("missing value at " + cell_location(r + 1, name));
          throw IngestionError("cannot parse '" + cell + "' as a real at " + cell_location(r + 1, name));
        }
      }
      if (j == target_index) {
        response = std::move(values);
      } else {
        columns.push_back(FeatureColumn::numeric(name, std::move(values)));
      }
    } else {
      std::vector<std::string> levels;
      std::unordered_map<std::string, int> lookup;
      std::vector<int> codes(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& cell = records[r + 1][j];
        if (cell.empty()) throw IngestionError("missing value at " + cell_location(r + 1, name));
        auto [it, inserted] = lookup.emplace(cell, static_cast<int>(levels.size()) + 1);
        if (inserted) levels.push_back(cell);
        codes[r] = it->second;
      }
      columns.push_back(FeatureColumn::categorical(name, std::move(levels), std::move(codes)));
    }
  }
  return Dataset(std::move(columns), std::move(response), target);
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target, const SchemaOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  return read_csv(in, target, overrides);
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos && trim(s) == s && !s.empty()) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(const Dataset& data, std::ostream& out) {
  const auto& cols = data.columns();
  bool first = true;
  for (const auto& c : cols) {
    out << (first ? "" : ",") << quote_if_needed(c.name());
    first = false;
  }
  if (data.has_response()) out << (first ? "" : ",") << quote_if_needed(data.target_name());
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    first = true;
    for (const auto& c : cols) {
      out << (first ? "" : ",");
      first = false;
      if (c.is_numeric()) {
        out << format_real(c.values()[i]);
      } else {
        const auto& cat = c.categories();
        out << quote_if_needed(cat.levels[static_cast<std::size_t>(cat.codes[i] - 1)]);
      }
    }
    if (data.has_response()) out << (first ? "" : ",") << format_real(data.response()[i]);
    out << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write '" + path.string() + "'");
  write_csv(data, out);
  if (!out) throw IngestionError("write failed for '" + path.string() + "'");
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
    throw SplitError("validation fraction must lie in (0, 1)");
  }
  if (n < 2) throw SplitError("need at least 2 rows to split, got " + std::to_string(n));
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - spec.validation_fraction)));
  if (n_train == 0 || n_train == n) throw SplitError("split leaves one side empty");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  const auto idx = split_indices(data.rows(), spec);
  return {data.subset(idx.train), data.subset(idx.validation)};
}

}  // namespace cwb
