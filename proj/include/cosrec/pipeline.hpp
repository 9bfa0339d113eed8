#pragma once

#include <string>

#include "cosrec/config.hpp"
#include "cosrec/data.hpp"
#include "cosrec/eval.hpp"

namespace cosrec {

// Command implementations behind the CLI and the C API. Each validates the
// config, does the work, writes its artifacts under cfg.out and returns a
// small summary.

struct PreprocessSummary {
  DatasetStats stats;
  std::size_t malformed = 0;
  std::string dataset_path;
};
PreprocessSummary run_preprocess(const RunConfig& cfg);

struct TrainSummary {
  double final_loss = 0.0;
  std::size_t epochs = 0;
  std::string checkpoint_path;
  std::string log_path;
};
TrainSummary run_train(const RunConfig& cfg);

struct EvalSummary {
  EvalResult result;
  std::string csv_path;
};
EvalSummary run_eval(const RunConfig& cfg);

struct BenchSummary {
  std::size_t records = 0;
  std::string csv_path;
};
BenchSummary run_bench(const RunConfig& cfg);

struct ReportSummary {
  std::string csv_path;
  std::string table;
};
ReportSummary run_report(const RunConfig& cfg);

}  // namespace cosrec
