#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace cwb {

struct NumericValues {
  std::vector<double> values;
};

// Codes are 1-based indices into `levels`; level order is first appearance.
struct CategoricalValues {
  std::vector<std::string> levels;
  std::vector<int> codes;
};

class FeatureColumn {
 public:
  static FeatureColumn numeric(std::string name, std::vector<double> values);
  static FeatureColumn categorical(std::string name, std::vector<std::string> levels,
                                   std::vector<int> codes);

  const std::string& name() const { return name_; }
  bool is_numeric() const { return std::holds_alternative<NumericValues>(data_); }
  bool is_categorical() const { return !is_numeric(); }
  std::size_t size() const;

  // Throws ConfigError when called on the wrong kind.
  std::span<const double> values() const;
  const CategoricalValues& categories() const;

  FeatureColumn subset(std::span<const std::size_t> rows) const;

 private:
  FeatureColumn(std::string name, std::variant<NumericValues, CategoricalValues> data)
      : name_(std::move(name)), data_(std::move(data)) {}

  std::string name_;
  std::variant<NumericValues, CategoricalValues> data_;
};

// Immutable columnar table with an optional response. A dataset loaded for
// prediction has no response (target_name() is empty).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<FeatureColumn> columns, std::vector<double> response,
          std::string target_name);

  std::size_t rows() const { return rows_; }
  const std::vector<FeatureColumn>& columns() const { return columns_; }
  std::span<const double> response() const { return response_; }
  bool has_response() const { return !target_name_.empty(); }
  const std::string& target_name() const { return target_name_; }

  const FeatureColumn* find(const std::string& name) const;
  const FeatureColumn& column(const std::string& name) const;

  Dataset subset(std::span<const std::size_t> rows) const;

  // Row-wise concatenation of two datasets with identical column names and
  // kinds. Categorical levels of `second` not seen in `first` are appended.
  static Dataset concat(const Dataset& first, const Dataset& second);

 private:
  std::vector<FeatureColumn> columns_;
  std::vector<double> response_;
  std::string target_name_;
  std::size_t rows_ = 0;
};

enum class ColumnKind { Auto, Numeric, Categorical };
using SchemaOverrides = std::map<std::string, ColumnKind>;

// Reads an RFC-4180 style CSV with a header row. Column kinds are taken from
// `overrides` or, failing that, from the first data row: a cell that parses as
// a finite real makes the column numeric. An empty `target` loads a dataset
// without response.
Dataset load_csv(const std::filesystem::path& path, const std::string& target,
                 const SchemaOverrides& overrides = {});
Dataset read_csv(std::istream& in, const std::string& target,
                 const SchemaOverrides& overrides = {});

// Writes features then the response (when present). Reals use 17 significant
// digits so a reload reproduces them exactly.
void write_csv(const Dataset& data, const std::filesystem::path& path);
void write_csv(const Dataset& data, std::ostream& out);

struct SplitSpec {
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Deterministic shuffle-split; train gets floor(n * (1 - f)) rows. Both index
// sets are returned in ascending order.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);

}  // namespace cwb
