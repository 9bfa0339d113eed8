#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cosrec/encoder.hpp"

namespace cosrec {

// One flat configuration for every command. Keys are the CLI long-option
// names; unknown keys and unparsable values are usage errors. Defaults are
// the library defaults (lr 0.001, weight decay 0.001, dropout 0.1, clip 1.0,
// batch 128).
struct RunConfig {
  std::string dataset;
  std::string format = "movielens_dat";
  std::string out = "out";
  std::string checkpoint;
  std::string mechanism = "cosine";
  std::size_t seq_len = 50;
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  double mask_prob = 0.15;
  double lr = 0.001;
  double weight_decay = 0.001;
  double dropout = 0.1;
  double clip_norm = 1.0;
  std::size_t batch = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::size_t tile = 32;
  double eps = 1e-6;
  double alpha = 1.0;
  std::size_t threads = 1;
  std::size_t min_inter = 3;
  std::size_t max_inter = 0;  // 0 = unbounded
  std::size_t valid_sample = 0;
  std::string split = "test";
  std::string tie_rule = "optimistic";
  bool exclude_history = false;
  bool dedup = false;
  bool bert_corruption = false;
  bool linear_denominator = true;
  std::string bench_n = "64,128,256,512,1024";
  std::string bench_d = "64";
  std::string bench_seeds = "0";
  std::size_t bench_reps = 3;
  std::string report_bench;
  std::string report_eval;
};

std::vector<std::string> config_keys();
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

// "key=value" pairs in fixed key order; embedded in every output artifact.
std::string config_echo(const RunConfig& cfg);

// Cross-field validation shared by every command; runs before any work.
void validate(const RunConfig& cfg);

std::vector<std::size_t> parse_size_list(const std::string& csv);
std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

ModelConfig model_config_from(const RunConfig& cfg, std::size_t vocab);

}  // namespace cosrec
