#include "cosrec/eval.hpp"

#include <cmath>

#include "cosrec/errors.hpp"
#include "cosrec/training.hpp"

namespace cosrec {

std::size_t rank_of_target(const std::vector<double>& scores, std::size_t target,
                           bool target_wins_ties) {
  if (target >= scores.size()) throw UsageError("rank_of_target: target not scored");
  const double ts = scores[target];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j == target) continue;
    if (scores[j] > ts || (!target_wins_ties && scores[j] == ts)) ++ahead;
  }
  return 1 + ahead;
}

double ndcg_at_k(std::size_t rank, std::size_t k) {
  if (rank == 0) throw UsageError("ndcg_at_k: ranks are 1-based");
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

double hit_at_k(std::size_t rank, std::size_t k) {
  if (rank == 0) throw UsageError("hit_at_k: ranks are 1-based");
  return rank <= k ? 1.0 : 0.0;
}

EvalResult evaluate(const EncoderParams& params, const ModelConfig& model,
                    const InteractionDataset& ds, const LooSplit& split,
                    const EvalOptions& opt) {
  if (split.train.size() != ds.sequences.size())
    throw UsageError("evaluate: split does not match dataset");
  if (opt.seq_len == 0 || opt.seq_len > model.max_seq)
    throw UsageError("evaluate: seq_len must be in [1, max_seq]");

  // Validation restricts to the sampled users when a sample exists.
  std::vector<std::size_t> users;
  if (opt.split == EvalSplit::Validation && !ds.validation_users.empty()) {
    users.assign(ds.validation_users.begin(), ds.validation_users.end());
  } else {
    users.resize(ds.sequences.size());
    for (std::size_t i = 0; i < users.size(); ++i) users[i] = i;
  }

  const std::size_t vocab = ds.item_count();
  const std::int32_t mask_token = mask_id_for(vocab);
  std::vector<double> ndcg(users.size(), 0.0), hit(users.size(), 0.0);

  for (std::size_t start = 0; start < users.size(); start += opt.batch_size) {
    const std::size_t end = std::min(start + opt.batch_size, users.size());
    SequenceBatch batch;
    std::vector<std::int32_t> targets;
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t u = users[i];
      std::vector<std::int32_t> context = split.train[u];
      std::int32_t target;
      if (opt.split == EvalSplit::Validation) {
        target = split.valid_item[u];
      } else {
        context.push_back(split.valid_item[u]);
        target = split.test_item[u];
      }
      context.push_back(mask_token);  // next-item query slot
      batch.ids.push_back(fit_sequence(context, opt.seq_len));
      batch.positions.push_back({opt.seq_len - 1});
      targets.push_back(target);
    }

    ForwardOut fwd = model_forward(batch, params, model, false, 0);
    for (std::size_t row = 0; row < targets.size(); ++row) {
      std::vector<double> scores(fwd.logits.cols());
      for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = fwd.logits(row, j);
      scores[0] = -HUGE_VAL;                  // pad
      scores[vocab + 1] = -HUGE_VAL;          // mask
      const std::size_t u = users[start + row];
      const auto target = static_cast<std::size_t>(targets[row]);
      if (opt.exclude_history) {
        for (std::int32_t it : ds.sequences[u])
          if (static_cast<std::size_t>(it) != target) scores[static_cast<std::size_t>(it)] =
              -HUGE_VAL;
      }
      const std::size_t rank = rank_of_target(scores, target, opt.target_wins_ties);
      ndcg[start + row] = ndcg_at_k(rank, opt.k);
      hit[start + row] = hit_at_k(rank, opt.k);
    }
  }

  EvalResult res;
  res.k = opt.k;
  res.user_count = users.size();
  for (std::size_t i = 0; i < users.size(); ++i) {
    res.ndcg_at_k += ndcg[i];
    res.hit_at_k += hit[i];
  }
  if (!users.empty()) {
    res.ndcg_at_k /= static_cast<double>(users.size());
    res.hit_at_k /= static_cast<double>(users.size());
  }
  return res;
}

}  // namespace cosrec
