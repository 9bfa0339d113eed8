#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cosrec/bench.hpp"

namespace cosrec {

// (variant - baseline) / baseline, in percent.
double percent_delta(double baseline, double variant);

struct EvalRow {
  std::string dataset;
  Mechanism mechanism = Mechanism::Softmax;
  std::size_t seq_len = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  double ndcg = 0.0;
  double hit = 0.0;
  std::size_t users = 0;
};

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path,
                    const std::string& config_echo);
std::vector<EvalRow> read_eval_csv(const std::string& path);

// One comparison of a variant mechanism against the softmax baseline at a
// fixed (n, d) cell; eval deltas appear when matching eval rows exist.
struct ReportRow {
  std::size_t n = 0;
  std::size_t d = 0;
  Mechanism mechanism = Mechanism::Softmax;
  double mem_pct = 0.0;
  double time_pct = 0.0;
  std::optional<double> ndcg_pct;
  std::optional<double> hit_pct;
};

std::vector<ReportRow> build_report(const std::vector<BenchRecord>& bench,
                                    const std::vector<EvalRow>& eval_rows);

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path,
                      const std::string& config_echo);
std::string format_report_table(const std::vector<ReportRow>& rows);

}  // namespace cosrec
