#pragma once

#include <cstdint>
#include <vector>

#include "cosrec/data.hpp"
#include "cosrec/encoder.hpp"

namespace cosrec {

struct EvalResult {
  double ndcg_at_k = 0.0;
  double hit_at_k = 0.0;
  std::size_t user_count = 0;
  std::size_t k = 10;
};

// 1 + number of items scored strictly higher than the target. Ties rank the
// target best by default (optimistic but deterministic); the strict variant
// ranks it worst.
std::size_t rank_of_target(const std::vector<double>& scores, std::size_t target,
                           bool target_wins_ties = true);

double ndcg_at_k(std::size_t rank, std::size_t k);
double hit_at_k(std::size_t rank, std::size_t k);

enum class EvalSplit { Test, Validation };

struct EvalOptions {
  EvalSplit split = EvalSplit::Test;
  std::size_t k = 10;
  std::size_t seq_len = 50;
  std::size_t batch_size = 128;
  bool target_wins_ties = true;
  bool exclude_history = false;
};

// Leave-one-out next-item evaluation: append the mask token to each held-out
// context, forward in infer mode, rank the target over the full vocabulary.
EvalResult evaluate(const EncoderParams& params, const ModelConfig& model,
                    const InteractionDataset& ds, const LooSplit& split,
                    const EvalOptions& opt);

}  // namespace cosrec
