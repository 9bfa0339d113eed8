#include <cmath>
#include <random>

#include "cosrec/attention.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cosrec;
using cosrec::testing::finite_difference;
using cosrec::testing::max_abs_diff;
using cosrec::testing::random_matrix;
using cosrec::testing::rel_err;

namespace {

// Scalar objective sum(out o w) so finite differences probe every output.
double weighted_forward(Mechanism mech, const Matrix& q, const Matrix& k, const Matrix& v,
                        double m, const Matrix& w) {
  AttentionConfig cfg;
  cfg.mechanism = mech;
  cfg.tile_size = 3;
  cfg.eps = 1e-6;
  Matrix out = attention_forward(q, k, v, m, cfg);
  return dot_all(out, w);
}

double check_attention_fd(Mechanism mech, std::uint64_t seed, std::size_t n, std::size_t d) {
  std::mt19937_64 rng(seed);
  Matrix q = random_matrix(n, d, rng), k = random_matrix(n, d, rng), v = random_matrix(n, d, rng);
  Matrix w = random_matrix(n, d, rng);
  double m = 0.5 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);

  AttentionConfig cfg;
  cfg.mechanism = mech;
  cfg.tile_size = 3;
  cfg.eps = 1e-6;
  AttentionCache cache;
  attention_forward(q, k, v, m, cfg, &cache);
  AttentionGrads g = attention_backward(cache, w);

  auto f = [&] { return weighted_forward(mech, q, k, v, m, w); };
  Matrix nq = finite_difference(q, f);
  Matrix nk = finite_difference(k, f);
  Matrix nv = finite_difference(v, f);

  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    worst = std::max(worst, rel_err(g.dq.data()[i], nq.data()[i]));
    worst = std::max(worst, rel_err(g.dk.data()[i], nk.data()[i]));
    worst = std::max(worst, rel_err(g.dv.data()[i], nv.data()[i]));
  }
  if (mech == Mechanism::Cosine) {
    const double nm = cosrec::testing::finite_difference_scalar(m, f);
    worst = std::max(worst, rel_err(g.dm, nm));
  }
  return worst;
}

}  // namespace

TEST_CASE("zero upstream gradient gives zero attention gradients") {
  std::mt19937_64 rng(100);
  Matrix q = random_matrix(4, 3, rng), k = random_matrix(4, 3, rng), v = random_matrix(4, 3, rng);
  Matrix zeros(4, 3);
  for (Mechanism mech : {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine}) {
    AttentionConfig cfg;
    cfg.mechanism = mech;
    cfg.tile_size = 2;
    AttentionCache cache;
    attention_forward(q, k, v, 1.0, cfg, &cache);
    AttentionGrads g = attention_backward(cache, zeros);
    CHECK(cosrec::testing::max_abs(g.dq) == 0.0);
    CHECK(cosrec::testing::max_abs(g.dk) == 0.0);
    CHECK(cosrec::testing::max_abs(g.dv) == 0.0);
    CHECK(g.dm == 0.0);
  }
}

TEST_CASE("softmax backward matches finite differences") {
  CHECK(check_attention_fd(Mechanism::Softmax, 201, 5, 3) < 1e-4);
  CHECK(check_attention_fd(Mechanism::Softmax, 202, 7, 4) < 1e-4);
}

TEST_CASE("elu linear backward matches finite differences") {
  CHECK(check_attention_fd(Mechanism::EluLinear, 301, 6, 4) < 1e-4);
  CHECK(check_attention_fd(Mechanism::EluLinear, 302, 5, 2) < 1e-4);
}

TEST_CASE("cosine backward matches finite differences including dm") {
  CHECK(check_attention_fd(Mechanism::Cosine, 401, 6, 4) < 1e-4);
  CHECK(check_attention_fd(Mechanism::Cosine, 402, 9, 5) < 1e-4);
}

TEST_CASE("elu linear n=1 passes dV straight through") {
  std::mt19937_64 rng(500);
  Matrix q = random_matrix(1, 4, rng), k = random_matrix(1, 4, rng), v = random_matrix(1, 4, rng);
  AttentionConfig cfg;
  cfg.mechanism = Mechanism::EluLinear;
  AttentionCache cache;
  attention_forward(q, k, v, 1.0, cfg, &cache);
  Matrix d_out = random_matrix(1, 4, rng);
  AttentionGrads g = attention_backward(cache, d_out);
  CHECK(max_abs_diff(g.dv, d_out) < 1e-12);
}

TEST_CASE("cosine dm equals -ln(n) * sum(out o out) when d_out == out") {
  std::mt19937_64 rng(600);
  const std::size_t n = 4, d = 3;
  Matrix q = random_matrix(n, d, rng, 0.1, 1.0);  // positively correlated inputs
  Matrix k = q;
  Matrix v = random_matrix(n, d, rng, 0.1, 1.0);
  AttentionConfig cfg;
  cfg.mechanism = Mechanism::Cosine;
  cfg.tile_size = 2;
  cfg.eps = 1e-9;
  AttentionCache cache;
  Matrix out = attention_forward(q, k, v, 1.0, cfg, &cache);
  AttentionGrads g = attention_backward(cache, out);
  const double expect = -std::log(4.0) * dot_all(out, out);
  CHECK(std::abs(g.dm - expect) < 1e-8);
  CHECK(g.dm < 0.0);
}

TEST_CASE("softmax attention is permutation symmetric in keys and values") {
  std::mt19937_64 rng(700);
  const std::size_t n = 5, d = 3;
  Matrix q = random_matrix(n, d, rng), k = random_matrix(n, d, rng), v = random_matrix(n, d, rng);
  const std::size_t perm[n] = {3, 0, 4, 1, 2};
  Matrix kp(n, d), vp(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      kp(i, j) = k(perm[i], j);
      vp(i, j) = v(perm[i], j);
    }

  AttentionCache c1, c2;
  Matrix o1 = softmax_attention(q, k, v, &c1);
  Matrix o2 = softmax_attention(q, kp, vp, &c2);
  CHECK(max_abs_diff(o1, o2) < 1e-12);

  Matrix d_out = random_matrix(n, d, rng);
  AttentionGrads g1 = softmax_attention_backward(c1, d_out);
  AttentionGrads g2 = softmax_attention_backward(c2, d_out);
  CHECK(max_abs_diff(g1.dq, g2.dq) < 1e-12);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(std::abs(g1.dk(perm[i], j) - g2.dk(i, j)) < 1e-12);
      CHECK(std::abs(g1.dv(perm[i], j) - g2.dv(i, j)) < 1e-12);
    }
}

TEST_CASE("masked attention gradients match finite differences over real rows") {
  std::mt19937_64 rng(800);
  const std::size_t n = 6, d = 3, n_pad = 2;
  std::vector<std::uint8_t> valid(n, 1);
  valid[0] = 0;
  valid[1] = 0;
  RowMask mask = RowMask::from_valid(valid);
  Matrix q = random_matrix(n, d, rng), k = random_matrix(n, d, rng), v = random_matrix(n, d, rng);
  Matrix w = random_matrix(n, d, rng);
  for (std::size_t i = 0; i < n_pad; ++i)
    for (std::size_t j = 0; j < d; ++j) w(i, j) = 0.0;  // upstream never uses padded rows

  for (Mechanism mech : {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine}) {
    AttentionConfig cfg;
    cfg.mechanism = mech;
    cfg.tile_size = 4;
    cfg.eps = 1e-6;
    AttentionCache cache;
    attention_forward(q, k, v, 1.0, cfg, &cache, &mask);
    AttentionGrads g = attention_backward(cache, w);

    auto f = [&] {
      Matrix out = attention_forward(q, k, v, 1.0, cfg, nullptr, &mask);
      return dot_all(out, w);
    };
    Matrix nq = finite_difference(q, f);
    Matrix nk = finite_difference(k, f);
    Matrix nv = finite_difference(v, f);
    double worst = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      worst = std::max(worst, rel_err(g.dq.data()[i], nq.data()[i]));
      worst = std::max(worst, rel_err(g.dk.data()[i], nk.data()[i]));
      worst = std::max(worst, rel_err(g.dv.data()[i], nv.data()[i]));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("multi-head backward matches finite differences") {
  std::mt19937_64 rng(900);
  const std::size_t n = 4, d = 6, heads = 2, dh = d / heads;
  Matrix h = random_matrix(n, d, rng);
  AttentionParams p;
  for (std::size_t i = 0; i < heads; ++i) {
    p.w_q.push_back(random_matrix(d, dh, rng, -0.5, 0.5));
    p.w_k.push_back(random_matrix(d, dh, rng, -0.5, 0.5));
    p.w_v.push_back(random_matrix(d, dh, rng, -0.5, 0.5));
  }
  p.w_o = random_matrix(d, d, rng, -0.5, 0.5);
  p.m = 1.0;
  Matrix w = random_matrix(n, d, rng);

  for (Mechanism mech : {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine}) {
    AttentionConfig cfg;
    cfg.mechanism = mech;
    cfg.heads = heads;
    cfg.tile_size = 3;
    MultiHeadCache cache;
    multi_head_attention(h, p, cfg, &cache);
    MultiHeadGrads g = multi_head_attention_backward(cache, p, cfg, w);

    auto f = [&] { return dot_all(multi_head_attention(h, p, cfg), w); };
    Matrix nh = finite_difference(h, f);
    double worst = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i)
      worst = std::max(worst, rel_err(g.d_input.data()[i], nh.data()[i]));
    Matrix nwo = finite_difference(p.w_o, f);
    for (std::size_t i = 0; i < p.w_o.size(); ++i)
      worst = std::max(worst, rel_err(g.d_params.w_o.data()[i], nwo.data()[i]));
    Matrix nwq = finite_difference(p.w_q[1], f);
    for (std::size_t i = 0; i < nwq.size(); ++i)
      worst = std::max(worst, rel_err(g.d_params.w_q[1].data()[i], nwq.data()[i]));
    if (mech == Mechanism::Cosine) {
      const double nm = cosrec::testing::finite_difference_scalar(p.m, f);
      worst = std::max(worst, rel_err(g.d_params.m, nm));
    }
    CHECK(worst < 1e-4);
  }
}
