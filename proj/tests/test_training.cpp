#include <cmath>
#include <random>

#include "cosrec/errors.hpp"
#include "cosrec/training.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cosrec;
using cosrec::testing::finite_difference;
using cosrec::testing::rel_err;

namespace {

ModelConfig tiny_model(std::size_t vocab, Mechanism mech = Mechanism::Cosine) {
  ModelConfig cfg;
  cfg.vocab = vocab;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.max_seq = 8;
  cfg.dropout = 0.0;
  cfg.attn.mechanism = mech;
  cfg.attn.heads = 2;
  cfg.attn.tile_size = 4;
  return cfg;
}

// Cyclic successor sequences: every user's history walks 1 -> 2 -> ... -> V.
std::vector<std::vector<std::int32_t>> planted_sequences(std::size_t users, std::size_t vocab,
                                                         std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> start(1, static_cast<std::int32_t>(vocab));
  std::vector<std::vector<std::int32_t>> seqs;
  for (std::size_t u = 0; u < users; ++u) {
    std::int32_t cur = start(rng);
    std::vector<std::int32_t> seq;
    for (std::size_t k = 0; k < len; ++k) {
      seq.push_back(cur);
      cur = cur % static_cast<std::int32_t>(vocab) + 1;
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

}  // namespace

TEST_CASE("mask_sequence infer mode masks exactly the final position") {
  std::mt19937_64 rng(1);
  MaskedSeq m = mask_sequence({5, 6, 7}, 0.2, rng, false, 9);
  CHECK(m.seq == std::vector<std::int32_t>{5, 6, 10});  // mask id = vocab + 1
  CHECK(m.positions == std::vector<std::size_t>{2});
  CHECK(m.targets == std::vector<std::int32_t>{7});

  MaskedSeq padded = mask_sequence({0, 0, 3, 4}, 0.2, rng, false, 9);
  CHECK(padded.positions == std::vector<std::size_t>{3});
  CHECK(padded.seq[2] == 3);
}

TEST_CASE("mask_sequence train mode masks only real positions, at least one") {
  std::mt19937_64 rng(2);
  for (int iter = 0; iter < 200; ++iter) {
    MaskedSeq m = mask_sequence({0, 0, 4, 5, 6}, 0.15, rng, true, 9);
    CHECK(!m.positions.empty());
    for (std::size_t i = 0; i < m.positions.size(); ++i) {
      CHECK(m.positions[i] >= 2);
      CHECK(m.seq[m.positions[i]] == 10);
      CHECK(m.targets[i] == std::vector<std::int32_t>{0, 0, 4, 5, 6}[m.positions[i]]);
    }
    CHECK(m.seq[0] == 0);
    CHECK(m.seq[1] == 0);
  }
}

TEST_CASE("mask_sequence near-certain masking covers virtually everything") {
  std::vector<std::int32_t> seq(10000);
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<std::int32_t>(1 + i % 50);
  std::mt19937_64 rng(3);
  MaskedSeq m = mask_sequence(seq, 0.999, rng, true, 50);
  CHECK(m.positions.size() >= 9900);  // binomial bound with huge slack
}

TEST_CASE("mask_sequence is reproducible for a fixed seed") {
  std::vector<std::int32_t> seq = {1, 2, 3, 4, 5, 6, 7, 8};
  std::mt19937_64 r1(77), r2(77);
  MaskedSeq a = mask_sequence(seq, 0.3, r1, true, 9);
  MaskedSeq b = mask_sequence(seq, 0.3, r2, true, 9);
  CHECK(a.seq == b.seq);
  CHECK(a.positions == b.positions);
}

TEST_CASE("mask_sequence rejects empty input and bad p") {
  std::mt19937_64 rng(4);
  std::vector<std::int32_t> all_pad = {0, 0, 0};
  CHECK_THROWS_AS(mask_sequence(all_pad, 0.2, rng, true, 9), DataError);
  std::vector<std::int32_t> ok = {1, 2};
  CHECK_THROWS_AS(mask_sequence(ok, 0.0, rng, true, 9), UsageError);
  CHECK_THROWS_AS(mask_sequence(ok, 1.0, rng, true, 9), UsageError);
}

TEST_CASE("bert corruption keeps or replaces some masked slots") {
  std::vector<std::int32_t> seq(4000, 3);
  std::mt19937_64 rng(5);
  MaskedSeq m = mask_sequence(seq, 0.5, rng, true, 9, true);
  std::size_t masked = 0, kept_or_random = 0;
  for (std::size_t pos : m.positions) {
    if (m.seq[pos] == 10) {
      ++masked;
    } else {
      ++kept_or_random;
    }
  }
  CHECK(masked > 0);
  CHECK(kept_or_random > 0);
  CHECK(masked > kept_or_random);  // 80/20 by construction
}

TEST_CASE("nll_loss: uniform logits give ln(vocab)") {
  Matrix logits(3, 12);  // vocab = 10
  std::vector<std::int32_t> targets = {1, 5, 10};
  LossOut out = nll_loss(logits, targets);
  CHECK(std::abs(out.loss - std::log(10.0)) < 1e-9);
  CHECK(std::abs(out.loss - 2.302585) < 1e-5);
}

TEST_CASE("nll_loss saturates to zero for a dominant target logit") {
  Matrix logits(1, 8);
  logits(0, 3) = 30.0;
  LossOut out = nll_loss(logits, {3});
  CHECK(out.loss < 1e-9);
}

TEST_CASE("nll_loss ignores pad and mask columns in the partition function") {
  Matrix logits(1, 7);  // vocab = 5
  logits(0, 0) = 100.0;  // pad column: huge, must not matter
  logits(0, 6) = 100.0;  // mask column: huge, must not matter
  LossOut out = nll_loss(logits, {2});
  CHECK(std::abs(out.loss - std::log(5.0)) < 1e-12);
  CHECK(out.d_logits(0, 0) == 0.0);
  CHECK(out.d_logits(0, 6) == 0.0);
}

TEST_CASE("nll_loss rejects pad/mask targets") {
  Matrix logits(1, 7);
  CHECK_THROWS_AS(nll_loss(logits, {0}), UsageError);
  CHECK_THROWS_AS(nll_loss(logits, {6}), UsageError);
}

TEST_CASE("nll_loss gradient matches finite differences") {
  std::mt19937_64 rng(6);
  Matrix logits = cosrec::testing::random_matrix(4, 9, rng, -2.0, 2.0);
  std::vector<std::int32_t> targets = {1, 7, 3, 2};
  LossOut out = nll_loss(logits, targets);
  auto f = [&] { return nll_loss(logits, targets).loss; };
  Matrix num = finite_difference(logits, f);
  double worst = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    worst = std::max(worst, rel_err(out.d_logits.data()[i], num.data()[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("loss is non-negative and ln(vocab) for an all-zero model") {
  ModelConfig cfg = tiny_model(10);
  EncoderParams zero = zeros_like(init_encoder(cfg, 7));
  SequenceBatch batch;
  batch.ids = {{0, 1, 2, 11, 4, 5, 6, 7}};
  batch.positions = {{3}};
  ForwardOut fwd = model_forward(batch, zero, cfg, false, 0);
  LossOut out = nll_loss(fwd.logits, {3});
  CHECK(out.loss >= 0.0);
  CHECK(std::abs(out.loss - std::log(10.0)) < 1e-6);
}

TEST_CASE("clip_gradients: below threshold unchanged, above scaled to the norm") {
  ModelConfig cfg = tiny_model(5);
  EncoderParams g = init_encoder(cfg, 8);

  // scale so the norm is 0.5: untouched
  double sq = 0;
  for_each_matrix(g, [&](Matrix& m) { sq += sum_squares(m); });
  for_each_scalar(g, [&](double& s) { sq += s * s; });
  const double factor = 0.5 / std::sqrt(sq);
  for_each_matrix(g, [&](Matrix& m) { scale_inplace(m, factor); });
  for_each_scalar(g, [&](double& s) { s *= factor; });
  EncoderParams before = g;
  const double norm1 = clip_gradients(g, 1.0);
  CHECK(norm1 == doctest::Approx(0.5));
  CHECK(before.item_embeddings == g.item_embeddings);

  // scale to norm 4: clipped to 1 within 1e-12
  for_each_matrix(g, [&](Matrix& m) { scale_inplace(m, 8.0); });
  for_each_scalar(g, [&](double& s) { s *= 8.0; });
  const double norm2 = clip_gradients(g, 1.0);
  CHECK(norm2 == doctest::Approx(4.0));
  double sq2 = 0;
  for_each_matrix(g, [&](Matrix& m) { sq2 += sum_squares(m); });
  for_each_scalar(g, [&](double& s) { sq2 += s * s; });
  CHECK(std::abs(std::sqrt(sq2) - 1.0) < 1e-12);

  // idempotence: a second clip leaves it bitwise untouched
  EncoderParams once = g;
  clip_gradients(g, 1.0);
  std::vector<Matrix*> a, b;
  for_each_matrix(once, [&](Matrix& m) { a.push_back(&m); });
  for_each_matrix(g, [&](Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  // zero gradients stay zero
  EncoderParams zeros = zeros_like(g);
  CHECK(clip_gradients(zeros, 1.0) == 0.0);
  double zmax = 0;
  for_each_matrix(zeros, [&](Matrix& m) { zmax = std::max(zmax, cosrec::testing::max_abs(m)); });
  CHECK(zmax == 0.0);
}

TEST_CASE("adam single-step closed form and invariances") {
  // one scalar step from gradient g is lr*sign(g) up to adam_eps
  double p = 0.0, m1 = 0.0, m2 = 0.0;
  adam_update(p, 0.3, m1, m2, 1, 0.001, 0.0, 0.9, 0.999, 1e-8);
  CHECK(std::abs(p + 0.001 * 0.3 / (0.3 + 1e-8)) < 1e-12);

  double pn = 0.5, m1n = 0.0, m2n = 0.0;
  adam_update(pn, -2.0, m1n, m2n, 1, 0.001, 0.0, 0.9, 0.999, 1e-8);
  CHECK(pn > 0.5);  // moves against the gradient

  // zero grads, zero decay: parameters unchanged
  ModelConfig cfg = tiny_model(5);
  EncoderParams params = init_encoder(cfg, 9);
  EncoderParams copy = params;
  AdamState state = make_adam_state(params);
  adam_step(params, zeros_like(params), state, 0.001, 0.0);
  CHECK(params.item_embeddings == copy.item_embeddings);
  CHECK(params.head_w == copy.head_w);

  // lr = 0, wd = 0: bitwise unchanged even with real gradients
  EncoderParams grads = init_encoder(cfg, 10);
  adam_step(params, grads, state, 0.0, 0.0);
  CHECK(params.item_embeddings == copy.item_embeddings);

  // lr = 0 with decay: also unchanged (decay scales by lr)
  adam_step(params, grads, state, 0.0, 0.01);
  CHECK(params.item_embeddings == copy.item_embeddings);

  // two identical runs are bitwise equal
  EncoderParams pa = init_encoder(cfg, 11), pb = init_encoder(cfg, 11);
  AdamState sa = make_adam_state(pa), sb = make_adam_state(pb);
  adam_step(pa, grads, sa, 0.001, 0.001);
  adam_step(pb, grads, sb, 0.001, 0.001);
  CHECK(pa.item_embeddings == pb.item_embeddings);
  CHECK(pa.layers[0].attn.m == pb.layers[0].attn.m);
}

TEST_CASE("training on a planted pattern drives the loss down") {
  TrainOptions opt;
  opt.model = tiny_model(20, Mechanism::Cosine);
  opt.model.max_seq = 8;
  opt.epochs = 3;
  opt.batch_size = 8;
  opt.lr = 0.01;
  opt.p_mask = 0.3;
  opt.seed = 0;
  auto seqs = planted_sequences(200, 20, 8, 5);

  TrainResult run = train(seqs, opt);
  REQUIRE(run.log.size() == 3);  // epoch log length == epoch count
  CHECK(run.log[0].loss > run.log[1].loss);
  CHECK(run.log[1].loss > run.log[2].loss);
  for (const auto& e : run.log) {
    CHECK(e.seconds > 0.0);
    CHECK(e.peak_attn_bytes > 0);
  }

  // same seed, same final loss (bitwise)
  TrainResult rerun = train(seqs, opt);
  CHECK(run.log.back().loss == rerun.log.back().loss);
  CHECK(run.params.head_w == rerun.params.head_w);
}

TEST_CASE("training aborts with a numeric error when the loss diverges") {
  TrainOptions opt;
  opt.model = tiny_model(20, Mechanism::Cosine);
  opt.model.max_seq = 8;
  opt.epochs = 5;
  opt.batch_size = 32;
  opt.lr = 1e6;  // deliberately explosive
  auto seqs = planted_sequences(64, 20, 8, 6);
  CHECK_THROWS_AS(train(seqs, opt), NumericError);
}
