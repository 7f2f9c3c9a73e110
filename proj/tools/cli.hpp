#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "cwb/boosting.hpp"

namespace cwb::cli {

inline constexpr const char* kReportSchemaVersion = "1";

// Runs the `cwb` command line. args[0] is the program name. Returns the exit
// code: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Bytes currently allocated through malloc.
std::size_t heap_in_use();

nlohmann::json run_report(const TrainResult& result, const TrainConfig& config, double final_train_risk,
                          double final_val_risk, std::size_t peak_alloc_bytes);

struct BenchRow {
  std::size_t n = 0;
  int k = 0;
  bool binned = false;
  std::string phase;
  double seconds = 0.0;
  std::size_t alloc_bytes = 0;
  int rep = 0;
};

// Least-squares fit of log(seconds) on log(n) and log(K) over the median of
// each cell. A regressor with a single distinct value is dropped.
struct ExponentFit {
  std::string phase;
  bool binned = false;
  double n_exponent = 0.0;
  double n_ci_low = 0.0;
  double n_ci_high = 0.0;
  bool has_n = false;
  double k_exponent = 0.0;
  double k_ci_low = 0.0;
  double k_ci_high = 0.0;
  bool has_k = false;
  int cells = 0;
};

std::vector<ExponentFit> fit_exponents(const std::vector<BenchRow>& rows);
nlohmann::json bench_summary(const std::vector<BenchRow>& rows);

}  // namespace cwb::cli
