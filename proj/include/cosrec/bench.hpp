#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cosrec/attention.hpp"

namespace cosrec {

struct BenchRecord {
  Mechanism mechanism = Mechanism::Softmax;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t tile = 0;
  std::size_t rep = 0;
  std::int64_t peak_bytes = 0;
  double seconds = 0.0;
};

// Runs one attention forward per rep on seeded random inputs inside a
// tracking scope; one warm-up run is discarded. peak_bytes counts transient
// buffers only (inputs and the output are exempt).
std::vector<BenchRecord> tracked_run(Mechanism mechanism, std::size_t n, std::size_t d,
                                     std::size_t reps, std::uint64_t seed,
                                     const AttentionConfig& cfg);

// Closed-form transient-byte model the tracker is checked against.
std::int64_t theoretical_bytes(Mechanism mechanism, std::size_t n, std::size_t d,
                               std::size_t tile);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least-squares line through (ln x, ln y); the slope is the empirical
// complexity exponent.
ScalingFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

// max-of-reps bytes and min-of-reps seconds per n, then the log-log fit.
ScalingFit fit_bytes_slope(const std::vector<BenchRecord>& records, Mechanism mechanism);
ScalingFit fit_seconds_slope(const std::vector<BenchRecord>& records, Mechanism mechanism);

struct SweepConfig {
  std::vector<std::size_t> ns;
  std::vector<std::size_t> ds;
  std::vector<Mechanism> mechanisms;
  std::vector<std::uint64_t> seeds;
  std::size_t reps = 3;
  AttentionConfig attn;
};

std::vector<BenchRecord> sweep(const SweepConfig& cfg);

void write_bench_csv(const std::vector<BenchRecord>& records, const std::string& path,
                     const std::string& config_echo);
std::vector<BenchRecord> read_bench_csv(const std::string& path);

// Static SVG line plots: {peak_bytes, seconds} against n and against d.
void write_bench_plots(const std::vector<BenchRecord>& records, const std::string& out_dir);

}  // namespace cosrec
