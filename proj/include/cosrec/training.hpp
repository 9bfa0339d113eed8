#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cosrec/encoder.hpp"

namespace cosrec {

struct MaskedSeq {
  std::vector<std::int32_t> seq;         // ids with mask tokens substituted
  std::vector<std::size_t> positions;    // masked slots, ascending
  std::vector<std::int32_t> targets;     // original items at those slots
};

// Train mode masks each real position independently with probability p_mask,
// redrawing until at least one position is masked. Infer mode masks exactly
// the final position (the next-item query). With bert_corruption a masked
// slot keeps the 80/10/10 mask/random/keep convention instead of pure
// replacement.
MaskedSeq mask_sequence(const std::vector<std::int32_t>& seq, double p_mask,
                        std::mt19937_64& rng, bool train_mode, std::size_t vocab,
                        bool bert_corruption = false);

struct LossOut {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean negative log softmax probability of the targets over the real-item
// columns; pad and mask columns never enter the partition function.
LossOut nll_loss(const Matrix& logits, const std::vector<std::int32_t>& targets);

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm.
double clip_gradients(EncoderParams& grads, double max_norm);

struct AdamState {
  EncoderParams m1, m2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
};

AdamState make_adam_state(const EncoderParams& params);

void adam_update(double& param, double grad, double& m1, double& m2, long step, double lr,
                 double weight_decay, double beta1, double beta2, double eps);
void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr,
               double weight_decay);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
  std::int64_t peak_attn_bytes = 0;
};

struct TrainOptions {
  ModelConfig model;
  double p_mask = 0.15;
  double lr = 0.001;
  double weight_decay = 0.001;
  double clip_norm = 1.0;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  bool bert_corruption = false;
  std::function<void(const EpochLog&)> on_epoch;  // streamed log rows
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochLog> log;
};

// Masked-item training over per-user sequences (shuffle, mask, forward,
// loss, backward, clip, step). Non-finite loss aborts with a NumericError.
TrainResult train(const std::vector<std::vector<std::int32_t>>& sequences,
                  const TrainOptions& opt);

}  // namespace cosrec
