#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cosrec/attention.hpp"
#include "cosrec/matrix.hpp"

namespace cosrec {

// Reserved item ids. Real items use 1..vocab; vocab+1 is the mask token.
constexpr std::int32_t kPadId = 0;
inline std::int32_t mask_id_for(std::size_t vocab) {
  return static_cast<std::int32_t>(vocab) + 1;
}

struct ModelConfig {
  std::size_t vocab = 0;  // real item count |V|
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t max_seq = 50;
  double dropout = 0.1;
  double ln_eps = 1e-5;
  AttentionConfig attn;
  std::size_t threads = 1;

  std::size_t id_count() const { return vocab + 2; }  // + pad + mask rows
};

struct LayerParams {
  AttentionParams attn;
  Matrix ffn_w1, ffn_b1;  // d x 4d, 1 x 4d
  Matrix ffn_w2, ffn_b2;  // 4d x d, 1 x d
  Matrix ln1_gain, ln1_bias;
  Matrix ln2_gain, ln2_bias;
};

struct EncoderParams {
  Matrix item_embeddings;      // (|V|+2) x d
  Matrix position_embeddings;  // max_seq x d
  std::vector<LayerParams> layers;
  Matrix head_w;  // d x (|V|+2)
  Matrix head_b;  // 1 x (|V|+2)
};

EncoderParams init_encoder(const ModelConfig& cfg, std::uint64_t seed);
EncoderParams zeros_like(const EncoderParams& p);
void add_params(EncoderParams& dst, const EncoderParams& src, double scale = 1.0);

// Applies fn to every tensor (and its mirror in `other` when given).
template <typename F>
void for_each_matrix(EncoderParams& p, F&& fn) {
  fn(p.item_embeddings);
  fn(p.position_embeddings);
  for (auto& layer : p.layers) {
    for (auto& w : layer.attn.w_q) fn(w);
    for (auto& w : layer.attn.w_k) fn(w);
    for (auto& w : layer.attn.w_v) fn(w);
    fn(layer.attn.w_o);
    fn(layer.ffn_w1);
    fn(layer.ffn_b1);
    fn(layer.ffn_w2);
    fn(layer.ffn_b2);
    fn(layer.ln1_gain);
    fn(layer.ln1_bias);
    fn(layer.ln2_gain);
    fn(layer.ln2_bias);
  }
  fn(p.head_w);
  fn(p.head_b);
}

template <typename F>
void for_each_scalar(EncoderParams& p, F&& fn) {
  for (auto& layer : p.layers) fn(layer.attn.m);
}

// E_t = item_embedding[id_t] + position_embedding[t]; ids validated against
// [0, vocab+1], sequence length against max_seq.
Matrix embed(const std::vector<std::int32_t>& ids, const EncoderParams& p,
             const ModelConfig& cfg);

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                  LayerNormCache* cache = nullptr);
Matrix layer_norm_backward(const Matrix& d_out, const LayerNormCache& cache, const Matrix& gain,
                           Matrix& d_gain, Matrix& d_bias);

struct BlockCache {
  MultiHeadCache mha;
  Matrix drop1_mask;  // empty when dropout inactive
  Matrix h1;          // LN1 output
  Matrix z1;          // FFN pre-activation
  Matrix a1;          // gelu(z1)
  Matrix drop2_mask;
  LayerNormCache ln1, ln2;
};

// Post-norm transformer block: LN(x + Drop(MHA(x))) -> LN(h + Drop(FFN(h))).
Matrix block_forward(const Matrix& x, const LayerParams& layer, const ModelConfig& cfg,
                     BlockCache* cache, const RowMask* mask, std::mt19937_64* dropout_rng);
Matrix block_backward(const Matrix& d_out, const BlockCache& cache, const LayerParams& layer,
                      const ModelConfig& cfg, LayerParams& d_layer);

// logits = h W + b over the |V|+2 id columns; softmax lives in the loss.
Matrix prediction_scores(const Matrix& hidden, const EncoderParams& p);

struct SequenceBatch {
  std::vector<std::vector<std::int32_t>> ids;       // equal-length padded sequences
  std::vector<std::vector<std::size_t>> positions;  // per sequence, ascending query slots
};

struct SeqCache {
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> positions;
  RowMask mask;
  Matrix emb_drop_mask;
  std::vector<BlockCache> blocks;
};

struct ModelCache {
  std::vector<SeqCache> seqs;
  Matrix gathered;                       // k_total x d hidden rows at query slots
  std::vector<std::size_t> row_offsets;  // per sequence start row in `gathered`
};

struct ForwardOut {
  Matrix logits;  // k_total x (|V|+2)
  ModelCache cache;
};

ForwardOut model_forward(const SequenceBatch& batch, const EncoderParams& p,
                         const ModelConfig& cfg, bool train, std::uint64_t dropout_seed);
EncoderParams model_backward(const ModelCache& cache, const EncoderParams& p,
                             const ModelConfig& cfg, const Matrix& d_logits);

}  // namespace cosrec
