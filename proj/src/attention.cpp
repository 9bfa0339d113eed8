#include "cosrec/attention.hpp"

#include <atomic>
#include <cmath>

#include "cosrec/errors.hpp"

namespace cosrec {

Mechanism mechanism_from_string(const std::string& name) {
  if (name == "softmax") return Mechanism::Softmax;
  if (name == "elu_linear") return Mechanism::EluLinear;
  if (name == "cosine") return Mechanism::Cosine;
  throw UsageError("unknown mechanism: " + name);
}

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::Softmax: return "softmax";
    case Mechanism::EluLinear: return "elu_linear";
    case Mechanism::Cosine: return "cosine";
  }
  throw UsageError("bad mechanism value");
}

RowMask RowMask::from_valid(std::vector<std::uint8_t> v) {
  RowMask m;
  m.true_count = 0;
  for (auto f : v)
    if (f) m.true_count += 1;
  m.valid = std::move(v);
  return m;
}

namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const RowMask* mask,
               const char* what) {
  require_nonempty(q, what);
  require_same_shape(q, k, what);
  require_same_shape(q, v, what);
  if (mask != nullptr) {
    if (mask->valid.size() != q.rows()) throw ShapeError(std::string(what) + ": mask length");
    if (mask->true_count == 0) throw UsageError(std::string(what) + ": no real rows");
  }
}

bool row_valid(const RowMask* mask, std::size_t i) {
  return mask == nullptr || mask->valid[i] != 0;
}

bool row_valid(const std::vector<std::uint8_t>& valid, std::size_t i) {
  return valid.empty() || valid[i] != 0;
}

// Softmax over valid key columns only; invalid columns get probability zero.
void masked_softmax_rows_inplace(Matrix& m, const RowMask* mask) {
  if (mask == nullptr) {
    softmax_rows_inplace(m);
    return;
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row(i);
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(row[j])) throw NumericError("softmax_attention: non-finite scores");
      if (row_valid(mask, j)) mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (row_valid(mask, j)) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      } else {
        row[j] = 0.0;
      }
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] *= inv;
  }
}

double inv_norm(const double* row, std::size_t d, double eps) {
  double ss = 0.0;
  for (std::size_t j = 0; j < d; ++j) ss += row[j] * row[j];
  return std::sqrt(ss + eps);
}

void zero_invalid_rows(Matrix& m, const std::vector<std::uint8_t>& valid) {
  if (valid.empty()) return;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (valid[i]) continue;
    double* row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] = 0.0;
  }
}

}  // namespace

Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                         AttentionCache* cache, const RowMask* mask) {
  check_qkv(q, k, v, mask, "softmax_attention");
  const std::size_t n = q.rows(), d = q.cols();
  Matrix out = make_result(n, d);

  Matrix scores = gemm_nt(q, k);
  scale_inplace(scores, 1.0 / std::sqrt(static_cast<double>(d)));
  masked_softmax_rows_inplace(scores, mask);
  gemm_into(scores, v, out);

  if (cache != nullptr) {
    cache->mechanism = Mechanism::Softmax;
    cache->probs = std::move(scores);
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->valid = mask != nullptr ? mask->valid : std::vector<std::uint8_t>{};
    cache->true_n = mask != nullptr ? mask->true_count : n;
  }
  return out;
}

AttentionGrads softmax_attention_backward(const AttentionCache& cache, const Matrix& d_out) {
  if (cache.mechanism != Mechanism::Softmax || cache.probs.empty())
    throw UsageError("softmax_attention_backward: cache missing");
  require_same_shape(cache.q, d_out, "softmax_attention_backward");
  const Matrix& p = cache.probs;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cache.q.cols()));

  AttentionGrads g;
  g.dv = gemm_tn(p, d_out);
  Matrix dp = gemm_nt(d_out, cache.v);
  // dS = P o (dP - rowsum(dP o P))
  Matrix ds = std::move(dp);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    double* dsr = ds.row(i);
    const double* pr = p.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < ds.cols(); ++j) acc += dsr[j] * pr[j];
    for (std::size_t j = 0; j < ds.cols(); ++j) dsr[j] = pr[j] * (dsr[j] - acc);
  }
  g.dq = gemm(ds, cache.k);
  scale_inplace(g.dq, scale);
  g.dk = gemm_tn(ds, cache.q);
  scale_inplace(g.dk, scale);
  return g;
}

Matrix elu_linear_attention(const Matrix& q, const Matrix& k, const Matrix& v, double alpha,
                            double eps, AttentionCache* cache, const RowMask* mask,
                            bool denominator) {
  check_qkv(q, k, v, mask, "elu_linear_attention");
  const std::size_t n = q.rows(), d = q.cols();
  Matrix out = make_result(n, d);

  Matrix phi_q(n, d);
  Matrix phi_k(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qr = q.row(i);
    const double* kr = k.row(i);
    double* pq = phi_q.row(i);
    double* pk = phi_k.row(i);
    const bool keep = row_valid(mask, i);
    for (std::size_t j = 0; j < d; ++j) {
      pq[j] = elu(qr[j], alpha) + 1.0;
      pk[j] = keep ? elu(kr[j], alpha) + 1.0 : 0.0;  // padded keys contribute nothing
    }
  }

  Matrix acc = gemm_tn(phi_k, v);  // d x d "key-value" product
  Matrix ksum(1, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* pk = phi_k.row(i);
    double* s = ksum.row(0);
    for (std::size_t j = 0; j < d; ++j) s[j] += pk[j];
  }

  gemm_into(phi_q, acc, out);
  Matrix den(n, 1);
  if (denominator) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* pq = phi_q.row(i);
      const double* s = ksum.row(0);
      double acc_d = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc_d += pq[j] * s[j];
      den(i, 0) = acc_d;
      const double inv = 1.0 / std::max(acc_d, eps);
      double* orow = out.row(i);
      for (std::size_t j = 0; j < d; ++j) orow[j] *= inv;
    }
  } else {
    den.fill(1.0);
  }

  if (cache != nullptr) {
    cache->mechanism = Mechanism::EluLinear;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->phi_q = std::move(phi_q);
    cache->phi_k = std::move(phi_k);
    cache->kv = std::move(acc);
    cache->kv_sum = std::move(ksum);
    cache->denom = std::move(den);
    cache->alpha = alpha;
    cache->eps = eps;
    cache->linear_denominator = denominator;
    cache->valid = mask != nullptr ? mask->valid : std::vector<std::uint8_t>{};
    cache->true_n = mask != nullptr ? mask->true_count : n;
  }
  return out;
}

AttentionGrads elu_linear_attention_backward(const AttentionCache& cache, const Matrix& d_out) {
  if (cache.mechanism != Mechanism::EluLinear || cache.phi_q.empty())
    throw UsageError("elu_linear_attention_backward: cache missing");
  require_same_shape(cache.q, d_out, "elu_linear_attention_backward");
  const std::size_t n = d_out.rows(), d = d_out.cols();
  const bool denom = cache.linear_denominator;

  // d(numerator) rows scaled by 1/denc; d(denominator) via the quotient rule,
  // gated where the eps clamp was active.
  Matrix dnum = d_out;
  std::vector<double> dden(n, 0.0);
  if (denom) {
    Matrix num = gemm(cache.phi_q, cache.kv);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = cache.denom(i, 0);
      const double denc = std::max(raw, cache.eps);
      double* dn = dnum.row(i);
      const double* nr = num.row(i);
      const double* go = d_out.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += go[j] * nr[j];
      const double inv = 1.0 / denc;
      for (std::size_t j = 0; j < d; ++j) dn[j] *= inv;
      if (raw > cache.eps) dden[i] = -acc * inv * inv;
    }
  }

  Matrix d_phi_q = gemm_nt(dnum, cache.kv);
  Matrix da = gemm_tn(cache.phi_q, dnum);
  if (denom) {
    const double* s = cache.kv_sum.row(0);
    for (std::size_t i = 0; i < n; ++i) {
      double* r = d_phi_q.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] += dden[i] * s[j];
    }
  }

  Matrix d_phi_k = gemm_nt(cache.v, da);
  if (denom) {
    // dksum = sum_i dden_i phi(q_i), broadcast back onto every real key row
    std::vector<double> dksum(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (dden[i] == 0.0) continue;
      const double* pq = cache.phi_q.row(i);
      for (std::size_t j = 0; j < d; ++j) dksum[j] += dden[i] * pq[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* r = d_phi_k.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] += dksum[j];
    }
  }

  AttentionGrads g;
  g.dv = gemm(cache.phi_k, da);
  g.dq = std::move(d_phi_q);
  g.dk = std::move(d_phi_k);
  for (std::size_t i = 0; i < n; ++i) {
    double* rq = g.dq.row(i);
    double* rk = g.dk.row(i);
    const double* qr = cache.q.row(i);
    const double* kr = cache.k.row(i);
    const bool keep = row_valid(cache.valid, i);
    for (std::size_t j = 0; j < d; ++j) {
      rq[j] *= elu_prime(qr[j], cache.alpha);
      rk[j] = keep ? rk[j] * elu_prime(kr[j], cache.alpha) : 0.0;
    }
  }
  zero_invalid_rows(g.dv, cache.valid);
  return g;
}

Matrix cosine_attention_naive(const Matrix& q, const Matrix& k, const Matrix& v, double m,
                              double eps) {
  check_qkv(q, k, v, nullptr, "cosine_attention_naive");
  const std::size_t n = q.rows();
  Matrix qn = row_l2_normalize(q, eps);
  Matrix kn = row_l2_normalize(k, eps);
  Matrix sim = gemm_nt(qn, kn);
  Matrix out = gemm(sim, v);
  scale_inplace(out, std::exp(-m * std::log(static_cast<double>(n))));
  return out;
}

Matrix cosine_attention_fused(const Matrix& q, const Matrix& k, const Matrix& v, double m,
                              const AttentionConfig& cfg, AttentionCache* cache,
                              const RowMask* mask) {
  check_qkv(q, k, v, mask, "cosine_attention_fused");
  if (cfg.tile_size == 0) throw UsageError("cosine_attention_fused: tile_size must be >= 1");
  const std::size_t n = q.rows(), d = q.cols(), tile_rows = cfg.tile_size;
  const std::size_t true_n = mask != nullptr ? mask->true_count : n;
  const double scale = std::exp(-m * std::log(static_cast<double>(true_n)));
  const double eps = cfg.eps;

  Matrix out = make_result(n, d);
  if (cache != nullptr) {
    AllocTracker::Pause pause;  // cache buffers are results, sized here up front
    cache->mechanism = Mechanism::Cosine;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->qn = Matrix(n, d);
    cache->kn = Matrix(n, d);
    cache->norm_q = Matrix(n, 1);
    cache->norm_k = Matrix(n, 1);
    cache->m = m;
    cache->eps = eps;
    cache->valid = mask != nullptr ? mask->valid : std::vector<std::uint8_t>{};
    cache->true_n = true_n;
  }

  // The only transient working set: the d x d accumulator and one tile.
  Matrix acc(d, d);
  Matrix tile(tile_rows, d);

  // Pass 1: stream K in tiles, normalize rows on the fly, accumulate K~^T V.
  for (std::size_t t0 = 0; t0 < n; t0 += tile_rows) {
    const std::size_t rows = std::min(tile_rows, n - t0);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = t0 + r;
      double* trow = tile.row(r);
      if (!row_valid(mask, i)) {
        for (std::size_t j = 0; j < d; ++j) trow[j] = 0.0;
        if (cache != nullptr) cache->norm_k(i, 0) = 1.0;
        continue;
      }
      const double* krow = k.row(i);
      const double norm = inv_norm(krow, d, eps);
      const double inv = 1.0 / norm;
      for (std::size_t j = 0; j < d; ++j) trow[j] = krow[j] * inv;
      if (cache != nullptr) cache->norm_k(i, 0) = norm;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double* trow = tile.row(r);
      const double* vrow = v.row(t0 + r);
      for (std::size_t a = 0; a < d; ++a) {
        const double ta = trow[a];
        double* arow = acc.row(a);
        for (std::size_t b = 0; b < d; ++b) arow[b] += ta * vrow[b];
      }
    }
    if (cache != nullptr) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* trow = tile.row(r);
        double* crow = cache->kn.row(t0 + r);
        for (std::size_t j = 0; j < d; ++j) crow[j] = trow[j];
      }
    }
  }

  // Pass 2: stream Q in tiles, normalize on the fly, emit (1/n^m) Q~ (K~^T V).
  for (std::size_t t0 = 0; t0 < n; t0 += tile_rows) {
    const std::size_t rows = std::min(tile_rows, n - t0);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = t0 + r;
      const double* qrow = q.row(i);
      const double norm = inv_norm(qrow, d, eps);
      const double inv = 1.0 / norm;
      double* trow = tile.row(r);
      for (std::size_t j = 0; j < d; ++j) trow[j] = qrow[j] * inv;
      if (cache != nullptr) {
        cache->norm_q(i, 0) = norm;
        double* crow = cache->qn.row(i);
        for (std::size_t j = 0; j < d; ++j) crow[j] = trow[j];
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double* trow = tile.row(r);
      double* orow = out.row(t0 + r);
      for (std::size_t a = 0; a < d; ++a) {
        const double w = scale * trow[a];
        const double* arow = acc.row(a);
        for (std::size_t b = 0; b < d; ++b) orow[b] += w * arow[b];
      }
    }
  }

  if (cache != nullptr) {
    AllocTracker::Pause pause;
    cache->kv = acc;
  }
  return out;
}

AttentionGrads cosine_attention_backward(const AttentionCache& cache, const Matrix& d_out) {
  if (cache.mechanism != Mechanism::Cosine || cache.qn.empty())
    throw UsageError("cosine_attention_backward: cache missing");
  require_same_shape(cache.qn, d_out, "cosine_attention_backward");
  const std::size_t n = d_out.rows(), d = d_out.cols();
  const double log_n = std::log(static_cast<double>(cache.true_n));
  const double scale = std::exp(-cache.m * log_n);

  Matrix qt_dout = gemm_tn(cache.qn, d_out);  // d x d

  AttentionGrads g;
  g.dm = -log_n * scale * dot_all(qt_dout, cache.kv);

  Matrix d_qn = gemm_nt(d_out, cache.kv);
  scale_inplace(d_qn, scale);
  Matrix da = std::move(qt_dout);
  scale_inplace(da, scale);

  Matrix d_kn = gemm_nt(cache.v, da);
  g.dv = gemm(cache.kn, da);

  // Pull dQ~, dK~ through q -> q/sqrt(|q|^2 + eps): (g - (g.q~) q~) / norm.
  g.dq = Matrix(n, d);
  g.dk = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* gq = d_qn.row(i);
    const double* un = cache.qn.row(i);
    double proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) proj += gq[j] * un[j];
    const double inv = 1.0 / cache.norm_q(i, 0);
    double* dst = g.dq.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = (gq[j] - proj * un[j]) * inv;

    if (!row_valid(cache.valid, i)) continue;  // padded keys: dk stays zero
    const double* gk = d_kn.row(i);
    const double* kn_row = cache.kn.row(i);
    proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) proj += gk[j] * kn_row[j];
    const double invk = 1.0 / cache.norm_k(i, 0);
    double* dstk = g.dk.row(i);
    for (std::size_t j = 0; j < d; ++j) dstk[j] = (gk[j] - proj * kn_row[j]) * invk;
  }
  zero_invalid_rows(g.dv, cache.valid);
  return g;
}

Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, double m,
                         const AttentionConfig& cfg, AttentionCache* cache,
                         const RowMask* mask) {
  switch (cfg.mechanism) {
    case Mechanism::Softmax:
      return softmax_attention(q, k, v, cache, mask);
    case Mechanism::EluLinear:
      return elu_linear_attention(q, k, v, cfg.alpha, cfg.eps, cache, mask,
                                  cfg.linear_denominator);
    case Mechanism::Cosine:
      return cosine_attention_fused(q, k, v, m, cfg, cache, mask);
  }
  throw UsageError("bad mechanism value");
}

AttentionGrads attention_backward(const AttentionCache& cache, const Matrix& d_out) {
  switch (cache.mechanism) {
    case Mechanism::Softmax:
      return softmax_attention_backward(cache, d_out);
    case Mechanism::EluLinear:
      return elu_linear_attention_backward(cache, d_out);
    case Mechanism::Cosine:
      return cosine_attention_backward(cache, d_out);
  }
  throw UsageError("bad mechanism value");
}

namespace {
std::atomic<bool> g_probe_enabled{false};
std::atomic<std::int64_t> g_probe_peak{0};
}  // namespace

void AttentionByteProbe::enable() { g_probe_enabled.store(true); }
void AttentionByteProbe::disable() { g_probe_enabled.store(false); }
bool AttentionByteProbe::enabled() { return g_probe_enabled.load(); }
void AttentionByteProbe::reset() { g_probe_peak.store(0); }
std::int64_t AttentionByteProbe::peak() { return g_probe_peak.load(); }

void AttentionByteProbe::report(std::int64_t bytes) {
  std::int64_t cur = g_probe_peak.load();
  while (bytes > cur && !g_probe_peak.compare_exchange_weak(cur, bytes)) {
  }
}

Matrix multi_head_attention(const Matrix& h, const AttentionParams& params,
                            const AttentionConfig& cfg, MultiHeadCache* cache,
                            const RowMask* mask) {
  require_nonempty(h, "multi_head_attention");
  const std::size_t n = h.rows(), d = h.cols(), heads = cfg.heads;
  if (heads == 0) throw UsageError("multi_head_attention: heads must be >= 1");
  if (d % heads != 0) throw ShapeError("multi_head_attention: dim not divisible by heads");
  if (params.w_q.size() != heads || params.w_k.size() != heads || params.w_v.size() != heads)
    throw ShapeError("multi_head_attention: per-head projection count");
  const std::size_t dh = d / heads;

  if (cache != nullptr) {
    cache->heads.assign(heads, AttentionCache{});
    cache->input = h;
  }
  Matrix concat(n, d);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    if (params.w_q[hd].rows() != d || params.w_q[hd].cols() != dh)
      throw ShapeError("multi_head_attention: projection shape");
    Matrix q = gemm(h, params.w_q[hd]);
    Matrix k = gemm(h, params.w_k[hd]);
    Matrix v = gemm(h, params.w_v[hd]);
    AttentionCache* hc = cache != nullptr ? &cache->heads[hd] : nullptr;
    Matrix head_out;
    if (AttentionByteProbe::enabled()) {
      AllocTracker scope;
      head_out = attention_forward(q, k, v, params.m, cfg, hc, mask);
      AttentionByteProbe::report(scope.peak_bytes());
    } else {
      head_out = attention_forward(q, k, v, params.m, cfg, hc, mask);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = head_out.row(i);
      double* dst = concat.row(i) + hd * dh;
      for (std::size_t j = 0; j < dh; ++j) dst[j] = src[j];
    }
  }
  Matrix out = gemm(concat, params.w_o);
  if (cache != nullptr) cache->concat = std::move(concat);
  return out;
}

MultiHeadGrads multi_head_attention_backward(const MultiHeadCache& cache,
                                             const AttentionParams& params,
                                             const AttentionConfig& cfg, const Matrix& d_out) {
  if (cache.heads.empty() || cache.concat.empty())
    throw UsageError("multi_head_attention_backward: cache missing");
  const std::size_t n = d_out.rows(), d = d_out.cols();
  const std::size_t heads = cache.heads.size();
  const std::size_t dh = d / heads;

  MultiHeadGrads g;
  g.d_params.w_o = gemm_tn(cache.concat, d_out);
  g.d_params.m = 0.0;
  Matrix d_concat = gemm_nt(d_out, params.w_o);
  g.d_input = Matrix(n, d);
  g.d_params.w_q.resize(heads);
  g.d_params.w_k.resize(heads);
  g.d_params.w_v.resize(heads);

  for (std::size_t hd = 0; hd < heads; ++hd) {
    Matrix d_head(n, dh);
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = d_concat.row(i) + hd * dh;
      double* dst = d_head.row(i);
      for (std::size_t j = 0; j < dh; ++j) dst[j] = src[j];
    }
    AttentionGrads ag = attention_backward(cache.heads[hd], d_head);
    g.d_params.m += ag.dm;
    gemm_nt_into(ag.dq, params.w_q[hd], g.d_input, true);
    gemm_nt_into(ag.dk, params.w_k[hd], g.d_input, true);
    gemm_nt_into(ag.dv, params.w_v[hd], g.d_input, true);
    g.d_params.w_q[hd] = gemm_tn(cache.input, ag.dq);
    g.d_params.w_k[hd] = gemm_tn(cache.input, ag.dk);
    g.d_params.w_v[hd] = gemm_tn(cache.input, ag.dv);
  }
  (void)cfg;
  return g;
}

}  // namespace cosrec
