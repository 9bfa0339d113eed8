#include "cosrec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "cosrec/data.hpp"
#include "cosrec/errors.hpp"
#include "cosrec/rng.hpp"

namespace cosrec {

MaskedSeq mask_sequence(const std::vector<std::int32_t>& seq, double p_mask,
                        std::mt19937_64& rng, bool train_mode, std::size_t vocab,
                        bool bert_corruption) {
  std::vector<std::size_t> real;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] != kPadId) real.push_back(i);
  if (real.empty()) throw DataError("mask_sequence: sequence has no real items");

  MaskedSeq out;
  out.seq = seq;
  const std::int32_t mask_token = mask_id_for(vocab);

  if (!train_mode) {
    const std::size_t last = real.back();
    out.positions.push_back(last);
    out.targets.push_back(seq[last]);
    out.seq[last] = mask_token;
    return out;
  }

  if (!(p_mask > 0.0 && p_mask < 1.0)) throw UsageError("mask_sequence: p_mask must be in (0,1)");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (out.positions.empty()) {
    for (std::size_t pos : real) {
      if (u(rng) >= p_mask) continue;
      out.positions.push_back(pos);
      out.targets.push_back(seq[pos]);
      if (bert_corruption) {
        const double roll = u(rng);
        if (roll < 0.8) {
          out.seq[pos] = mask_token;
        } else if (roll < 0.9) {
          std::uniform_int_distribution<std::int32_t> item(1, static_cast<std::int32_t>(vocab));
          out.seq[pos] = item(rng);
        }  // else keep the original item, still predicted
      } else {
        out.seq[pos] = mask_token;
      }
    }
  }
  return out;
}

LossOut nll_loss(const Matrix& logits, const std::vector<std::int32_t>& targets) {
  require_nonempty(logits, "nll_loss");
  if (logits.cols() < 3) throw ShapeError("nll_loss: logits need pad, mask and item columns");
  if (targets.size() != logits.rows()) throw UsageError("nll_loss: one target per row required");
  const std::size_t k = logits.rows();
  const std::size_t cols = logits.cols();
  const std::size_t vocab = cols - 2;  // column 0 = pad, column vocab+1 = mask

  LossOut out;
  out.d_logits = Matrix(k, cols);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::int32_t t = targets[i];
    if (t < 1 || static_cast<std::size_t>(t) > vocab)
      throw UsageError("nll_loss: target must be a real item id");
    const double* row = logits.row(i);
    double mx = row[1];
    for (std::size_t j = 1; j <= vocab; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 1; j <= vocab; ++j) z += std::exp(row[j] - mx);
    total += -(row[static_cast<std::size_t>(t)] - mx - std::log(z));
    double* grad = out.d_logits.row(i);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t j = 1; j <= vocab; ++j)
      grad[j] = (std::exp(row[j] - mx) / z) * inv_k;
    grad[static_cast<std::size_t>(t)] -= inv_k;
  }
  out.loss = total / static_cast<double>(k);
  return out;
}

double clip_gradients(EncoderParams& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw UsageError("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for_each_matrix(grads, [&](Matrix& m) { sq += sum_squares(m); });
  for_each_scalar(grads, [&](double& s) { sq += s * s; });
  const double norm = std::sqrt(sq);
  // 1e-12 relative guard keeps clipping exactly idempotent under the
  // rounding of the rescale itself.
  if (norm <= max_norm * (1.0 + 1e-12)) return norm;
  const double scale = max_norm / norm;
  for_each_matrix(grads, [&](Matrix& m) { scale_inplace(m, scale); });
  for_each_scalar(grads, [&](double& s) { s *= scale; });
  return norm;
}

AdamState make_adam_state(const EncoderParams& params) {
  AdamState s;
  s.m1 = zeros_like(params);
  s.m2 = zeros_like(params);
  return s;
}

void adam_update(double& param, double grad, double& m1, double& m2, long step, double lr,
                 double weight_decay, double beta1, double beta2, double eps) {
  param -= lr * weight_decay * param;  // decoupled decay
  m1 = beta1 * m1 + (1.0 - beta1) * grad;
  m2 = beta2 * m2 + (1.0 - beta2) * grad * grad;
  const double mhat = m1 / (1.0 - std::pow(beta1, static_cast<double>(step)));
  const double vhat = m2 / (1.0 - std::pow(beta2, static_cast<double>(step)));
  param -= lr * mhat / (std::sqrt(vhat) + eps);
}

void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr,
               double weight_decay) {
  state.step += 1;
  std::vector<Matrix*> ps, gs, m1s, m2s;
  for_each_matrix(params, [&](Matrix& m) { ps.push_back(&m); });
  for_each_matrix(const_cast<EncoderParams&>(grads), [&](Matrix& m) { gs.push_back(&m); });
  for_each_matrix(state.m1, [&](Matrix& m) { m1s.push_back(&m); });
  for_each_matrix(state.m2, [&](Matrix& m) { m2s.push_back(&m); });
  if (ps.size() != gs.size()) throw ShapeError("adam_step: gradient layout mismatch");
  for (std::size_t t = 0; t < ps.size(); ++t) {
    double* p = ps[t]->data();
    const double* g = gs[t]->data();
    double* m1 = m1s[t]->data();
    double* m2 = m2s[t]->data();
    for (std::size_t i = 0; i < ps[t]->size(); ++i)
      adam_update(p[i], g[i], m1[i], m2[i], state.step, lr, weight_decay, state.beta1,
                  state.beta2, state.eps);
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    adam_update(params.layers[l].attn.m, grads.layers[l].attn.m, state.m1.layers[l].attn.m,
                state.m2.layers[l].attn.m, state.step, lr, weight_decay, state.beta1,
                state.beta2, state.eps);
}

TrainResult train(const std::vector<std::vector<std::int32_t>>& sequences,
                  const TrainOptions& opt) {
  if (sequences.empty()) throw DataError("train: no sequences");
  if (opt.epochs == 0) throw UsageError("train: epochs must be >= 1");
  if (opt.batch_size == 0) throw UsageError("train: batch size must be >= 1");

  TrainResult result;
  result.params = init_encoder(opt.model, opt.seed);
  AdamState adam = make_adam_state(result.params);

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    AttentionByteProbe::reset();
    AttentionByteProbe::enable();

    std::mt19937_64 shuffle_rng(mix_seed(opt.seed, epoch, 0x5u));
    std::mt19937_64 mask_rng(mix_seed(opt.seed, epoch, 0xAu));
    auto batches = make_batches(sequences, opt.model.max_seq, opt.batch_size, &shuffle_rng);

    double loss_sum = 0.0;
    std::size_t target_count = 0;
    std::size_t step = 0;
    for (const auto& batch : batches) {
      SequenceBatch sb;
      std::vector<std::int32_t> targets;
      for (const auto& row : batch.rows) {
        MaskedSeq masked = mask_sequence(row, opt.p_mask, mask_rng, true, opt.model.vocab,
                                         opt.bert_corruption);
        sb.ids.push_back(std::move(masked.seq));
        sb.positions.push_back(std::move(masked.positions));
        targets.insert(targets.end(), masked.targets.begin(), masked.targets.end());
      }

      ForwardOut fwd = model_forward(sb, result.params, opt.model, true,
                                     mix_seed(opt.seed, epoch, 0xD000 + step));
      LossOut loss = nll_loss(fwd.logits, targets);
      if (!std::isfinite(loss.loss))
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step));
      EncoderParams grads = model_backward(fwd.cache, result.params, opt.model, loss.d_logits);
      clip_gradients(grads, opt.clip_norm);
      adam_step(result.params, grads, adam, opt.lr, opt.weight_decay);

      loss_sum += loss.loss * static_cast<double>(targets.size());
      target_count += targets.size();
      ++step;
    }

    AttentionByteProbe::disable();
    const auto t1 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(target_count);
    log.seconds = std::chrono::duration<double>(t1 - t0).count();
    log.peak_attn_bytes = AttentionByteProbe::peak();
    result.log.push_back(log);
    if (opt.on_epoch) opt.on_epoch(log);
  }
  return result;
}

}  // namespace cosrec
