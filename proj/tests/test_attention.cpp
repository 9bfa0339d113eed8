#include <cmath>
#include <random>

#include "cosrec/alloc_tracker.hpp"
#include "cosrec/attention.hpp"
#include "cosrec/errors.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cosrec;
using cosrec::testing::max_abs_diff;
using cosrec::testing::random_matrix;

namespace {

AttentionConfig cosine_cfg(std::size_t tile, double eps = 1e-9) {
  AttentionConfig cfg;
  cfg.mechanism = Mechanism::Cosine;
  cfg.tile_size = tile;
  cfg.eps = eps;
  return cfg;
}

}  // namespace

TEST_CASE("softmax attention: n=1 returns V") {
  std::mt19937_64 rng(1);
  Matrix q = random_matrix(1, 5, rng), k = random_matrix(1, 5, rng), v = random_matrix(1, 5, rng);
  CHECK(max_abs_diff(softmax_attention(q, k, v), v) < 1e-15);
}

TEST_CASE("softmax attention: identical keys give column-mean of V") {
  std::mt19937_64 rng(2);
  const std::size_t n = 6, d = 3;
  Matrix q = random_matrix(n, d, rng);
  Matrix k(n, d), v = random_matrix(n, d, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) k(i, j) = 0.3 * (j + 1);
  Matrix out = softmax_attention(q, k, v);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += v(r, j);
      mean /= n;
      CHECK(std::abs(out(i, j) - mean) < 1e-12);
    }
}

TEST_CASE("softmax attention matches three-step scalar oracle") {
  std::mt19937_64 rng(3);
  Matrix q = random_matrix(4, 3, rng), k = random_matrix(4, 3, rng), v = random_matrix(4, 3, rng);
  CHECK(max_abs_diff(softmax_attention(q, k, v), testing::softmax_attention_oracle(q, k, v)) <
        1e-10);
}

TEST_CASE("softmax attention rejects non-finite input") {
  Matrix q(2, 2), k(2, 2), v(2, 2);
  q(0, 0) = HUGE_VAL;
  CHECK_THROWS_AS(softmax_attention(q, k, v), NumericError);
}

TEST_CASE("elu linear attention: n=1 collapses to V") {
  std::mt19937_64 rng(4);
  Matrix q = random_matrix(1, 4, rng), k = random_matrix(1, 4, rng), v = random_matrix(1, 4, rng);
  CHECK(max_abs_diff(elu_linear_attention(q, k, v, 1.0, 1e-9), v) < 1e-12);
}

TEST_CASE("elu linear attention: denominators strictly positive") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 20; ++iter) {
    Matrix q = random_matrix(5, 3, rng, -4.0, 4.0);
    Matrix k = random_matrix(5, 3, rng, -4.0, 4.0);
    Matrix v = random_matrix(5, 3, rng);
    AttentionCache cache;
    elu_linear_attention(q, k, v, 1.0, 1e-9, &cache);
    for (std::size_t i = 0; i < 5; ++i) CHECK(cache.denom(i, 0) > 0.0);
  }
}

TEST_CASE("elu linear attention matches materialized oracle") {
  std::mt19937_64 rng(6);
  Matrix q = random_matrix(5, 2, rng), k = random_matrix(5, 2, rng), v = random_matrix(5, 2, rng);
  Matrix got = elu_linear_attention(q, k, v, 1.0, 1e-9);
  Matrix want = testing::elu_linear_attention_oracle(q, k, v, 1.0, 1e-9, true);
  CHECK(max_abs_diff(got, want) < 1e-10);

  Matrix got_nd = elu_linear_attention(q, k, v, 1.0, 1e-9, nullptr, nullptr, false);
  Matrix want_nd = testing::elu_linear_attention_oracle(q, k, v, 1.0, 1e-9, false);
  CHECK(max_abs_diff(got_nd, want_nd) < 1e-10);
}

TEST_CASE("cosine attention naive: n=1 with q==k returns V") {
  std::mt19937_64 rng(7);
  Matrix q = random_matrix(1, 6, rng);
  Matrix v = random_matrix(1, 6, rng);
  Matrix out = cosine_attention_naive(q, q, v, 0.7, 1e-12);
  CHECK(max_abs_diff(out, v) < 1e-10);
}

TEST_CASE("cosine attention naive: orthogonal Q and K give zeros") {
  Matrix q(2, 4), k(2, 4), v(2, 4);
  q(0, 0) = 1.0;
  q(1, 1) = 2.0;
  k(0, 2) = 3.0;
  k(1, 3) = -1.0;
  v.fill(5.0);
  Matrix out = cosine_attention_naive(q, k, v, 1.0, 1e-12);
  CHECK(cosrec::testing::max_abs(out) < 1e-12);
}

TEST_CASE("cosine attention naive: 2x2 hand computation") {
  Matrix q(2, 2), v(2, 2);
  q(0, 0) = 1.0;
  q(1, 1) = 1.0;
  v(0, 0) = 2.0;
  v(1, 1) = 4.0;
  Matrix out = cosine_attention_naive(q, q, v, 1.0, 1e-13);
  CHECK(std::abs(out(0, 0) - 1.0) < 1e-9);
  CHECK(std::abs(out(1, 1) - 2.0) < 1e-9);
  CHECK(std::abs(out(0, 1)) < 1e-9);
  CHECK(std::abs(out(1, 0)) < 1e-9);
}

TEST_CASE("fused cosine kernel equals naive oracle across tile sizes") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> nd(1, 128), dd(1, 16);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = nd(rng), d = dd(rng);
    Matrix q = random_matrix(n, d, rng, -2.0, 2.0);
    Matrix k = random_matrix(n, d, rng, -2.0, 2.0);
    Matrix v = random_matrix(n, d, rng, -2.0, 2.0);
    const double m = 0.25 * static_cast<double>(iter % 8);
    Matrix want = cosine_attention_naive(q, k, v, m, 1e-9);
    for (std::size_t tile : {std::size_t{1}, std::size_t{3}, std::size_t{32}, n + 7}) {
      Matrix got = cosine_attention_fused(q, k, v, m, cosine_cfg(tile));
      CHECK(max_abs_diff(got, want) < 1e-10);
    }
  }
}

TEST_CASE("fused cosine kernel: n=1 with q==k returns V") {
  std::mt19937_64 rng(9);
  Matrix q = random_matrix(1, 8, rng);
  Matrix v = random_matrix(1, 8, rng);
  Matrix out = cosine_attention_fused(q, q, v, 1.3, cosine_cfg(32, 1e-12));
  CHECK(max_abs_diff(out, v) < 1e-10);
}

TEST_CASE("cosine attention is invariant to scaling a single row of Q or K") {
  std::mt19937_64 rng(10);
  Matrix q = random_matrix(7, 5, rng), k = random_matrix(7, 5, rng), v = random_matrix(7, 5, rng);
  Matrix base = cosine_attention_fused(q, k, v, 1.0, cosine_cfg(4, 1e-14));
  Matrix q2 = q;
  for (std::size_t j = 0; j < 5; ++j) q2(3, j) *= 17.5;
  Matrix k2 = k;
  for (std::size_t j = 0; j < 5; ++j) k2(5, j) *= 0.004;
  CHECK(max_abs_diff(cosine_attention_fused(q2, k, v, 1.0, cosine_cfg(4, 1e-14)), base) < 1e-9);
  CHECK(max_abs_diff(cosine_attention_fused(q, k2, v, 1.0, cosine_cfg(4, 1e-14)), base) < 1e-9);
}

TEST_CASE("cosine attention output bounded by max |v| when m=1") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 25; ++iter) {
    Matrix q = random_matrix(9, 4, rng), k = random_matrix(9, 4, rng),
           v = random_matrix(9, 4, rng, -3.0, 3.0);
    Matrix out = cosine_attention_fused(q, k, v, 1.0, cosine_cfg(5));
    CHECK(cosrec::testing::max_abs(out) <= cosrec::testing::max_abs(v) + 1e-12);
  }
}

TEST_CASE("fused kernel transient peak is the accumulator plus one tile") {
  std::mt19937_64 rng(12);
  const std::size_t d = 8, tile = 32;
  const std::int64_t expect = static_cast<std::int64_t>((d * d + tile * d) * sizeof(double));
  std::int64_t peaks[3];
  int idx = 0;
  for (std::size_t n : {std::size_t{64}, std::size_t{256}, std::size_t{1024}}) {
    Matrix q = random_matrix(n, d, rng), k = random_matrix(n, d, rng), v = random_matrix(n, d, rng);
    AllocTracker scope;
    Matrix out = cosine_attention_fused(q, k, v, 1.0, cosine_cfg(tile));
    peaks[idx++] = scope.peak_bytes();
  }
  CHECK(peaks[0] == expect);
  CHECK(peaks[1] == expect);
  CHECK(peaks[2] == expect);  // independent of n
}

TEST_CASE("softmax attention transient peak is the n x n score matrix") {
  std::mt19937_64 rng(13);
  const std::size_t n = 256, d = 16;
  Matrix q = random_matrix(n, d, rng), k = random_matrix(n, d, rng), v = random_matrix(n, d, rng);
  AllocTracker scope;
  Matrix out = softmax_attention(q, k, v);
  CHECK(scope.peak_bytes() >= static_cast<std::int64_t>(n * n * sizeof(double)));
}

TEST_CASE("tracker sees every transient released by scope end") {
  std::mt19937_64 rng(14);
  Matrix q = random_matrix(64, 8, rng), k = random_matrix(64, 8, rng), v = random_matrix(64, 8, rng);
  AllocTracker scope;
  {
    Matrix a = softmax_attention(q, k, v);
    Matrix b = elu_linear_attention(q, k, v, 1.0, 1e-6);
    Matrix c = cosine_attention_fused(q, k, v, 1.0, cosine_cfg(16));
  }
  CHECK(scope.live_bytes() == 0);
  CHECK(scope.alloc_count() == scope.release_count());
  CHECK(scope.alloc_count() > 0);
}

TEST_CASE("masked attention equals attention over the real rows only") {
  std::mt19937_64 rng(15);
  const std::size_t n_real = 5, n_pad = 3, d = 4;
  Matrix qr = random_matrix(n_real, d, rng), kr = random_matrix(n_real, d, rng),
         vr = random_matrix(n_real, d, rng);
  const std::size_t n = n_real + n_pad;
  Matrix q(n, d), k(n, d), v(n, d);
  std::vector<std::uint8_t> valid(n, 0);
  // real rows occupy the tail, mirroring left-padded batches
  for (std::size_t i = 0; i < n_real; ++i) {
    valid[n_pad + i] = 1;
    for (std::size_t j = 0; j < d; ++j) {
      q(n_pad + i, j) = qr(i, j);
      k(n_pad + i, j) = kr(i, j);
      v(n_pad + i, j) = vr(i, j);
    }
  }
  std::mt19937_64 junk(99);
  for (std::size_t i = 0; i < n_pad; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      std::uniform_real_distribution<double> u(-9.0, 9.0);
      q(i, j) = u(junk);
      k(i, j) = u(junk);
      v(i, j) = u(junk);
    }
  RowMask mask = RowMask::from_valid(valid);

  Matrix s_full = softmax_attention(q, k, v, nullptr, &mask);
  Matrix s_sub = softmax_attention(qr, kr, vr);
  Matrix e_full = elu_linear_attention(q, k, v, 1.0, 1e-9, nullptr, &mask);
  Matrix e_sub = elu_linear_attention(qr, kr, vr, 1.0, 1e-9);
  Matrix c_full = cosine_attention_fused(q, k, v, 1.0, cosine_cfg(3), nullptr, &mask);
  Matrix c_sub = cosine_attention_fused(qr, kr, vr, 1.0, cosine_cfg(3));
  for (std::size_t i = 0; i < n_real; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(std::abs(s_full(n_pad + i, j) - s_sub(i, j)) < 1e-10);
      CHECK(std::abs(e_full(n_pad + i, j) - e_sub(i, j)) < 1e-10);
      CHECK(std::abs(c_full(n_pad + i, j) - c_sub(i, j)) < 1e-10);
    }
}

TEST_CASE("multi-head with identity projections reduces to the raw mechanism") {
  std::mt19937_64 rng(16);
  const std::size_t n = 5, d = 6;
  Matrix h = random_matrix(n, d, rng);
  AttentionParams p;
  Matrix eye(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  p.w_q = {eye};
  p.w_k = {eye};
  p.w_v = {eye};
  p.w_o = eye;
  p.m = 1.0;
  for (Mechanism mech : {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine}) {
    AttentionConfig cfg;
    cfg.mechanism = mech;
    cfg.heads = 1;
    cfg.tile_size = 4;
    Matrix got = multi_head_attention(h, p, cfg);
    Matrix want = attention_forward(h, h, h, p.m, cfg);
    CHECK(max_abs_diff(got, want) < 1e-13);
  }
}

TEST_CASE("multi-head h=2 equals manual per-head slice-and-stitch oracle") {
  std::mt19937_64 rng(17);
  const std::size_t n = 4, d = 6, heads = 2, dh = d / heads;
  Matrix h = random_matrix(n, d, rng);
  AttentionParams p;
  for (std::size_t i = 0; i < heads; ++i) {
    p.w_q.push_back(random_matrix(d, dh, rng));
    p.w_k.push_back(random_matrix(d, dh, rng));
    p.w_v.push_back(random_matrix(d, dh, rng));
  }
  p.w_o = random_matrix(d, d, rng);
  p.m = 0.8;
  AttentionConfig cfg;
  cfg.mechanism = Mechanism::Cosine;
  cfg.heads = heads;
  cfg.tile_size = 3;
  Matrix got = multi_head_attention(h, p, cfg);

  Matrix concat(n, d);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    Matrix head = cosine_attention_fused(gemm(h, p.w_q[hd]), gemm(h, p.w_k[hd]),
                                         gemm(h, p.w_v[hd]), p.m, cfg);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dh; ++j) concat(i, hd * dh + j) = head(i, j);
  }
  Matrix want = gemm(concat, p.w_o);
  CHECK(max_abs_diff(got, want) < 1e-10);
}

TEST_CASE("multi-head output shape is n x d for every mechanism") {
  std::mt19937_64 rng(18);
  const std::size_t n = 7, d = 8;
  Matrix h = random_matrix(n, d, rng);
  for (Mechanism mech : {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine}) {
    AttentionConfig cfg;
    cfg.mechanism = mech;
    cfg.heads = 2;
    AttentionParams p;
    for (std::size_t i = 0; i < cfg.heads; ++i) {
      p.w_q.push_back(random_matrix(d, d / cfg.heads, rng));
      p.w_k.push_back(random_matrix(d, d / cfg.heads, rng));
      p.w_v.push_back(random_matrix(d, d / cfg.heads, rng));
    }
    p.w_o = random_matrix(d, d, rng);
    Matrix out = multi_head_attention(h, p, cfg);
    CHECK(out.rows() == n);
    CHECK(out.cols() == d);
  }
}

TEST_CASE("multi-head rejects dim not divisible by heads") {
  Matrix h(3, 7);
  AttentionParams p;
  AttentionConfig cfg;
  cfg.heads = 2;
  CHECK_THROWS_AS(multi_head_attention(h, p, cfg), ShapeError);
}

TEST_CASE("backward without a forward cache is a usage error") {
  AttentionCache cache;
  Matrix d_out(2, 2);
  CHECK_THROWS_AS(softmax_attention_backward(cache, d_out), UsageError);
  CHECK_THROWS_AS(cosine_attention_backward(cache, d_out), UsageError);
  cache.mechanism = Mechanism::EluLinear;
  CHECK_THROWS_AS(elu_linear_attention_backward(cache, d_out), UsageError);
}
