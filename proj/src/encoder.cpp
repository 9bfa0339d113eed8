#include "cosrec/encoder.hpp"

#include <cmath>
#include <string>

#include "cosrec/errors.hpp"
#include "cosrec/parallel.hpp"
#include "cosrec/rng.hpp"

namespace cosrec {

namespace {

Matrix trunc_normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                           double stddev) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = truncated_normal(rng, stddev);
  return m;
}

constexpr double kInitStd = 0.02;

}  // namespace

EncoderParams init_encoder(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab == 0) throw UsageError("init_encoder: vocab must be >= 1");
  if (cfg.layers == 0) throw UsageError("init_encoder: layers must be >= 1");
  if (cfg.dim == 0 || cfg.attn.heads == 0 || cfg.dim % cfg.attn.heads != 0)
    throw ShapeError("init_encoder: dim must be a positive multiple of heads");
  std::mt19937_64 rng(mix_seed(seed, 0x1217));

  const std::size_t d = cfg.dim, dh = d / cfg.attn.heads, hid = 4 * d;
  EncoderParams p;
  p.item_embeddings = trunc_normal_matrix(cfg.id_count(), d, rng, kInitStd);
  p.position_embeddings = trunc_normal_matrix(cfg.max_seq, d, rng, kInitStd);
  p.layers.resize(cfg.layers);
  for (auto& layer : p.layers) {
    for (std::size_t h = 0; h < cfg.attn.heads; ++h) {
      layer.attn.w_q.push_back(trunc_normal_matrix(d, dh, rng, kInitStd));
      layer.attn.w_k.push_back(trunc_normal_matrix(d, dh, rng, kInitStd));
      layer.attn.w_v.push_back(trunc_normal_matrix(d, dh, rng, kInitStd));
    }
    layer.attn.w_o = trunc_normal_matrix(d, d, rng, kInitStd);
    layer.attn.m = 1.0;
    layer.ffn_w1 = trunc_normal_matrix(d, hid, rng, kInitStd);
    layer.ffn_b1 = Matrix(1, hid);
    layer.ffn_w2 = trunc_normal_matrix(hid, d, rng, kInitStd);
    layer.ffn_b2 = Matrix(1, d);
    layer.ln1_gain = Matrix(1, d);
    layer.ln1_gain.fill(1.0);
    layer.ln1_bias = Matrix(1, d);
    layer.ln2_gain = Matrix(1, d);
    layer.ln2_gain.fill(1.0);
    layer.ln2_bias = Matrix(1, d);
  }
  p.head_w = trunc_normal_matrix(d, cfg.id_count(), rng, kInitStd);
  p.head_b = Matrix(1, cfg.id_count());
  return p;
}

EncoderParams zeros_like(const EncoderParams& src) {
  EncoderParams p = src;
  for_each_matrix(p, [](Matrix& m) { m.fill(0.0); });
  for_each_scalar(p, [](double& s) { s = 0.0; });
  return p;
}

void add_params(EncoderParams& dst, const EncoderParams& src, double scale) {
  auto& s = const_cast<EncoderParams&>(src);
  std::vector<Matrix*> dst_ms, src_ms;
  for_each_matrix(dst, [&](Matrix& m) { dst_ms.push_back(&m); });
  for_each_matrix(s, [&](Matrix& m) { src_ms.push_back(&m); });
  if (dst_ms.size() != src_ms.size()) throw ShapeError("add_params: layout mismatch");
  for (std::size_t i = 0; i < dst_ms.size(); ++i) add_inplace(*dst_ms[i], *src_ms[i], scale);
  for (std::size_t l = 0; l < dst.layers.size(); ++l)
    dst.layers[l].attn.m += scale * src.layers[l].attn.m;
}

Matrix embed(const std::vector<std::int32_t>& ids, const EncoderParams& p,
             const ModelConfig& cfg) {
  if (ids.empty()) throw DataError("embed: empty sequence");
  if (ids.size() > cfg.max_seq) throw DataError("embed: sequence longer than max_seq");
  Matrix out(ids.size(), cfg.dim);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const std::int32_t id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.id_count())
      throw DataError("embed: item id out of range: " + std::to_string(id));
    const double* item = p.item_embeddings.row(static_cast<std::size_t>(id));
    const double* pos = p.position_embeddings.row(t);
    double* dst = out.row(t);
    for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] = item[j] + pos[j];
  }
  return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                  LayerNormCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix out(n, d);
  Matrix xhat(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.row(i);
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    double* xh = xhat.row(i);
    double* o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (row[j] - mean) * inv;
      o[j] = gain(0, j) * xh[j] + bias(0, j);
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& d_out, const LayerNormCache& cache, const Matrix& gain,
                           Matrix& d_gain, Matrix& d_bias) {
  const std::size_t n = d_out.rows(), d = d_out.cols();
  Matrix dx(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* go = d_out.row(i);
    const double* xh = cache.xhat.row(i);
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = go[j] * gain(0, j);
      sum_dxh += dxh;
      sum_dxh_xh += dxh * xh[j];
      d_gain(0, j) += go[j] * xh[j];
      d_bias(0, j) += go[j];
    }
    const double inv = cache.inv_std[i];
    const double nd = static_cast<double>(d);
    double* out = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = go[j] * gain(0, j);
      out[j] = inv * (dxh - sum_dxh / nd - xh[j] * sum_dxh_xh / nd);
    }
  }
  return dx;
}

namespace {

// Inverted dropout; the mask holds 0 or 1/(1-p) so backward is a product.
Matrix make_dropout_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64& rng) {
  Matrix mask(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = u(rng) < p ? 0.0 : keep;
  return mask;
}

void colsum_into(const Matrix& src, Matrix& dst) {
  for (std::size_t i = 0; i < src.rows(); ++i) {
    const double* row = src.row(i);
    for (std::size_t j = 0; j < src.cols(); ++j) dst(0, j) += row[j];
  }
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] += bias(0, j);
  }
}

}  // namespace

Matrix block_forward(const Matrix& x, const LayerParams& layer, const ModelConfig& cfg,
                     BlockCache* cache, const RowMask* mask, std::mt19937_64* dropout_rng) {
  require_nonempty(x, "block_forward");
  const bool drop = dropout_rng != nullptr && cfg.dropout > 0.0;

  MultiHeadCache* mha_cache = cache != nullptr ? &cache->mha : nullptr;
  Matrix attn_out = multi_head_attention(x, layer.attn, cfg.attn, mha_cache, mask);
  if (drop) {
    Matrix m1 = make_dropout_mask(attn_out.rows(), attn_out.cols(), cfg.dropout, *dropout_rng);
    hadamard_inplace(attn_out, m1);
    if (cache != nullptr) cache->drop1_mask = std::move(m1);
  }
  add_inplace(attn_out, x);
  Matrix h1 = layer_norm(attn_out, layer.ln1_gain, layer.ln1_bias, cfg.ln_eps,
                         cache != nullptr ? &cache->ln1 : nullptr);

  Matrix z1 = gemm(h1, layer.ffn_w1);
  add_row_bias(z1, layer.ffn_b1);
  Matrix a1(z1.rows(), z1.cols());
  for (std::size_t i = 0; i < z1.size(); ++i) a1.data()[i] = gelu(z1.data()[i]);
  Matrix z2 = gemm(a1, layer.ffn_w2);
  add_row_bias(z2, layer.ffn_b2);
  if (drop) {
    Matrix m2 = make_dropout_mask(z2.rows(), z2.cols(), cfg.dropout, *dropout_rng);
    hadamard_inplace(z2, m2);
    if (cache != nullptr) cache->drop2_mask = std::move(m2);
  }
  add_inplace(z2, h1);
  Matrix out = layer_norm(z2, layer.ln2_gain, layer.ln2_bias, cfg.ln_eps,
                          cache != nullptr ? &cache->ln2 : nullptr);
  if (cache != nullptr) {
    cache->h1 = std::move(h1);
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
  }
  return out;
}

Matrix block_backward(const Matrix& d_out, const BlockCache& cache, const LayerParams& layer,
                      const ModelConfig& cfg, LayerParams& d_layer) {
  if (cache.h1.empty()) throw UsageError("block_backward: cache missing");
  Matrix ds2 = layer_norm_backward(d_out, cache.ln2, layer.ln2_gain, d_layer.ln2_gain,
                                   d_layer.ln2_bias);

  // FFN branch
  Matrix dz2 = ds2;
  if (!cache.drop2_mask.empty()) hadamard_inplace(dz2, cache.drop2_mask);
  gemm_tn_into(cache.a1, dz2, d_layer.ffn_w2, true);
  colsum_into(dz2, d_layer.ffn_b2);
  Matrix da1 = gemm_nt(dz2, layer.ffn_w2);
  for (std::size_t i = 0; i < da1.size(); ++i) da1.data()[i] *= gelu_prime(cache.z1.data()[i]);
  gemm_tn_into(cache.h1, da1, d_layer.ffn_w1, true);
  colsum_into(da1, d_layer.ffn_b1);
  Matrix dh1 = gemm_nt(da1, layer.ffn_w1);
  add_inplace(dh1, ds2);  // residual

  Matrix ds1 = layer_norm_backward(dh1, cache.ln1, layer.ln1_gain, d_layer.ln1_gain,
                                   d_layer.ln1_bias);

  // Attention branch
  Matrix d_attn = ds1;
  if (!cache.drop1_mask.empty()) hadamard_inplace(d_attn, cache.drop1_mask);
  MultiHeadGrads mg = multi_head_attention_backward(cache.mha, layer.attn, cfg.attn, d_attn);
  for (std::size_t h = 0; h < mg.d_params.w_q.size(); ++h) {
    add_inplace(d_layer.attn.w_q[h], mg.d_params.w_q[h]);
    add_inplace(d_layer.attn.w_k[h], mg.d_params.w_k[h]);
    add_inplace(d_layer.attn.w_v[h], mg.d_params.w_v[h]);
  }
  add_inplace(d_layer.attn.w_o, mg.d_params.w_o);
  d_layer.attn.m += mg.d_params.m;

  Matrix dx = std::move(mg.d_input);
  add_inplace(dx, ds1);  // residual
  return dx;
}

Matrix prediction_scores(const Matrix& hidden, const EncoderParams& p) {
  require_nonempty(hidden, "prediction_scores");
  Matrix logits = gemm(hidden, p.head_w);
  add_row_bias(logits, p.head_b);
  return logits;
}

namespace {

RowMask mask_for_ids(const std::vector<std::int32_t>& ids) {
  std::vector<std::uint8_t> valid(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != kPadId ? 1 : 0;
  return RowMask::from_valid(std::move(valid));
}

}  // namespace

ForwardOut model_forward(const SequenceBatch& batch, const EncoderParams& p,
                         const ModelConfig& cfg, bool train, std::uint64_t dropout_seed) {
  if (batch.ids.empty()) throw UsageError("model_forward: empty batch");
  if (batch.ids.size() != batch.positions.size())
    throw UsageError("model_forward: positions per sequence required");
  const std::size_t b = batch.ids.size();
  const std::size_t n = batch.ids[0].size();

  ForwardOut out;
  out.cache.seqs.resize(b);
  out.cache.row_offsets.resize(b + 1, 0);
  for (std::size_t s = 0; s < b; ++s) {
    if (batch.ids[s].size() != n) throw ShapeError("model_forward: ragged batch");
    if (batch.positions[s].empty()) throw UsageError("model_forward: sequence without queries");
    out.cache.row_offsets[s + 1] = out.cache.row_offsets[s] + batch.positions[s].size();
  }
  const std::size_t k_total = out.cache.row_offsets[b];
  Matrix gathered(k_total, cfg.dim);

  parallel_chunks(b, cfg.threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t s = begin; s < end; ++s) {
      SeqCache& sc = out.cache.seqs[s];
      sc.ids = batch.ids[s];
      sc.positions = batch.positions[s];
      sc.mask = mask_for_ids(sc.ids);
      std::mt19937_64 rng(mix_seed(dropout_seed, s, 0xD0));
      std::mt19937_64* drop_rng = train && cfg.dropout > 0.0 ? &rng : nullptr;

      Matrix h = embed(sc.ids, p, cfg);
      if (drop_rng != nullptr) {
        sc.emb_drop_mask = make_dropout_mask(h.rows(), h.cols(), cfg.dropout, *drop_rng);
        hadamard_inplace(h, sc.emb_drop_mask);
      }
      sc.blocks.resize(cfg.layers);
      for (std::size_t l = 0; l < cfg.layers; ++l)
        h = block_forward(h, p.layers[l], cfg, &sc.blocks[l], &sc.mask, drop_rng);

      std::size_t row = out.cache.row_offsets[s];
      for (std::size_t pos : batch.positions[s]) {
        if (pos >= n) throw UsageError("model_forward: query position out of range");
        for (std::size_t j = 0; j < cfg.dim; ++j) gathered(row, j) = h(pos, j);
        ++row;
      }
    }
  });

  out.logits = prediction_scores(gathered, p);
  out.cache.gathered = std::move(gathered);
  return out;
}

EncoderParams model_backward(const ModelCache& cache, const EncoderParams& p,
                             const ModelConfig& cfg, const Matrix& d_logits) {
  if (cache.seqs.empty() || cache.gathered.empty())
    throw UsageError("model_backward: cache missing");
  if (d_logits.rows() != cache.gathered.rows())
    throw ShapeError("model_backward: d_logits row count");

  EncoderParams grads = zeros_like(p);
  gemm_tn_into(cache.gathered, d_logits, grads.head_w, true);
  colsum_into(d_logits, grads.head_b);
  Matrix d_gathered = gemm_nt(d_logits, p.head_w);

  const std::size_t b = cache.seqs.size();
  const std::size_t workers = cfg.threads <= 1 ? 1 : std::min(cfg.threads, b);
  std::vector<EncoderParams> worker_grads;
  worker_grads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) worker_grads.push_back(zeros_like(p));

  parallel_chunks(b, cfg.threads, [&](std::size_t begin, std::size_t end, std::size_t w) {
    EncoderParams& g = worker_grads[w];
    for (std::size_t s = begin; s < end; ++s) {
      const SeqCache& sc = cache.seqs[s];
      const std::size_t n = sc.ids.size();

      // Scatter query-slot gradients into the final hidden state.
      Matrix dh(n, cfg.dim);
      std::size_t row = cache.row_offsets[s];
      for (std::size_t pos : sc.positions) {
        for (std::size_t j = 0; j < cfg.dim; ++j) dh(pos, j) += d_gathered(row, j);
        ++row;
      }

      for (std::size_t l = cfg.layers; l-- > 0;)
        dh = block_backward(dh, sc.blocks[l], p.layers[l], cfg, g.layers[l]);

      if (!sc.emb_drop_mask.empty()) hadamard_inplace(dh, sc.emb_drop_mask);
      for (std::size_t t = 0; t < n; ++t) {
        const double* src = dh.row(t);
        double* item = g.item_embeddings.row(static_cast<std::size_t>(sc.ids[t]));
        double* pos = g.position_embeddings.row(t);
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          item[j] += src[j];
          pos[j] += src[j];
        }
      }
    }
  });

  for (std::size_t w = 0; w < workers; ++w) add_params(grads, worker_grads[w]);
  return grads;
}

}  // namespace cosrec
