#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cosrec/matrix.hpp"

namespace cosrec {

enum class Mechanism { Softmax, EluLinear, Cosine };

Mechanism mechanism_from_string(const std::string& name);
std::string mechanism_name(Mechanism m);

struct AttentionConfig {
  Mechanism mechanism = Mechanism::Cosine;
  double eps = 1e-6;
  double alpha = 1.0;          // ELU alpha
  std::size_t tile_size = 32;  // streaming tile rows in the fused kernel
  std::size_t heads = 2;
  bool linear_denominator = true;  // ELU path: normalize by phi(q)·sum phi(k)
};

// Marks which sequence rows are real; padded rows contribute no keys/values
// and the cosine 1/n^m scale uses the real count.
struct RowMask {
  std::vector<std::uint8_t> valid;
  std::size_t true_count = 0;

  static RowMask from_valid(std::vector<std::uint8_t> v);
};

// Everything a backward pass needs; filled by the forward ops on request.
struct AttentionCache {
  Mechanism mechanism = Mechanism::Softmax;
  Matrix q, k, v;                    // raw inputs
  std::vector<std::uint8_t> valid;   // empty -> all rows real
  std::size_t true_n = 0;
  double eps = 0.0;
  double alpha = 1.0;
  bool linear_denominator = true;
  // softmax
  Matrix probs;
  // elu linear
  Matrix phi_q, phi_k;
  Matrix kv_sum;  // 1 x d, column sums of phi(K) over real rows
  Matrix denom;   // n x 1, clamped denominators
  // cosine
  Matrix qn, kn;            // row-normalized Q, K (padded K rows zeroed)
  Matrix norm_q, norm_k;    // n x 1, sqrt(row sum of squares + eps)
  Matrix kv;                // d x d accumulator K~^T V
  double m = 1.0;
};

struct AttentionGrads {
  Matrix dq, dk, dv;
  double dm = 0.0;
};

// softmax(Q K^T / sqrt(d)) V. Materializes the n x n score matrix — the
// quadratic baseline by construction.
Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                         AttentionCache* cache = nullptr, const RowMask* mask = nullptr);
AttentionGrads softmax_attention_backward(const AttentionCache& cache, const Matrix& d_out);

// phi(Q) (phi(K)^T V) with phi = ELU + 1, per-row denominator
// phi(q_i)·sum_j phi(k_j) (optional). Never materializes an n x n buffer.
Matrix elu_linear_attention(const Matrix& q, const Matrix& k, const Matrix& v, double alpha,
                            double eps, AttentionCache* cache = nullptr,
                            const RowMask* mask = nullptr, bool denominator = true);
AttentionGrads elu_linear_attention_backward(const AttentionCache& cache, const Matrix& d_out);

// (1/n^m) (Q~ K~^T) V with the n x n similarity materialized. Reference
// route kept as the oracle for the fused kernel; not the production path.
Matrix cosine_attention_naive(const Matrix& q, const Matrix& k, const Matrix& v, double m,
                              double eps);

// Same value as the naive route, computed in two streaming passes over tiles
// of cfg.tile_size rows: pass one normalizes K rows on the fly and accumulates
// the d x d buffer K~^T V, pass two normalizes Q rows on the fly and emits
// (1/n^m) Q~ (K~^T V). Peak transient allocation is the d x d accumulator
// plus one T x d tile, independent of n. No causal mask.
Matrix cosine_attention_fused(const Matrix& q, const Matrix& k, const Matrix& v, double m,
                              const AttentionConfig& cfg, AttentionCache* cache = nullptr,
                              const RowMask* mask = nullptr);
AttentionGrads cosine_attention_backward(const AttentionCache& cache, const Matrix& d_out);

// Dispatch on cfg.mechanism (cosine uses the fused kernel).
Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, double m,
                         const AttentionConfig& cfg, AttentionCache* cache = nullptr,
                         const RowMask* mask = nullptr);
AttentionGrads attention_backward(const AttentionCache& cache, const Matrix& d_out);

struct AttentionParams {
  std::vector<Matrix> w_q, w_k, w_v;  // per head, d x d_h
  Matrix w_o;                         // d x d
  double m = 1.0;                     // cosine scale exponent, one per layer
};

struct MultiHeadCache {
  Matrix input;   // n x d
  Matrix concat;  // n x d, heads concatenated before W^O
  std::vector<AttentionCache> heads;
};

struct MultiHeadGrads {
  Matrix d_input;
  AttentionParams d_params;
};

Matrix multi_head_attention(const Matrix& h, const AttentionParams& params,
                            const AttentionConfig& cfg, MultiHeadCache* cache = nullptr,
                            const RowMask* mask = nullptr);
MultiHeadGrads multi_head_attention_backward(const MultiHeadCache& cache,
                                             const AttentionParams& params,
                                             const AttentionConfig& cfg, const Matrix& d_out);

// Epoch-level probe: when enabled, multi_head_attention runs each head's
// kernel inside a tracking scope and records the largest peak seen.
class AttentionByteProbe {
 public:
  static void enable();
  static void disable();
  static bool enabled();
  static void reset();
  static std::int64_t peak();
  static void report(std::int64_t bytes);
};

}  // namespace cosrec
