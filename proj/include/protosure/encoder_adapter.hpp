#pragma once

// Attribution-aware sentence encoder.
//
// For a sentence with token embeddings E (l x d) and normalized attributions
// r (length l):
//
//   A = rowsoftmax(E Wq (E Wk)^T / sqrt(d) + 1 r^T)   key-side bias
//   c = A (E Wv)
//   alpha = softmax(column means of A)
//   h = sum_j alpha_j c_j
//
// Everything is computed in double precision.

#include <cstddef>
#include <span>
#include <vector>

#include "protosure/linalg.hpp"
#include "protosure/rng.hpp"

namespace protosure {

inline constexpr double kDefaultAttributionEps = 1e-9;

struct AttentionParams {
  Matrix wq;
  Matrix wk;
  Matrix wv;

  std::size_t dim() const noexcept { return wq.rows(); }
  // Symmetric uniform init in +-sqrt(6 / (2d)), rounded to float32.
  static AttentionParams init(std::size_t dim, Rng& rng);
  static AttentionParams zeros(std::size_t dim);

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct AttentionGrads {
  Matrix wq;
  Matrix wk;
  Matrix wv;

  static AttentionGrads zeros(std::size_t dim);
  void add(const AttentionGrads& other);
};

struct SentenceEncoding {
  Matrix attention;                   // l x l, rows sum to 1
  Matrix context;                     // l x d
  std::vector<double> token_weights;  // l, sums to 1
  std::vector<double> embedding;      // d
};

// r_hat_j = max(r_j, 0) / (sum_j' max(r_j', 0) + eps)
std::vector<double> normalize_attributions(std::span<const double> scores, double eps = kDefaultAttributionEps);
std::vector<double> normalize_attributions(std::span<const float> scores, double eps = kDefaultAttributionEps);

struct AttendResult {
  Matrix attention;
  Matrix context;
};

// An empty `rhat` omits the attribution bias entirely.
AttendResult attend(const Matrix& embeddings, std::span<const double> rhat, const AttentionParams& params);
std::vector<double> token_importance(const Matrix& attention);
std::vector<double> pool(std::span<const double> weights, const Matrix& context);

SentenceEncoding encode_sentence(const Matrix& embeddings, std::span<const double> rhat,
                                 const AttentionParams& params);

// Backpropagates dL/dh through the encoder and adds the parameter gradients
// to `grads`. Throws NonFiniteGradient when any gradient entry is NaN/Inf.
void backprop_sentence(const Matrix& embeddings, std::span<const double> rhat, const AttentionParams& params,
                       std::span<const double> upstream, AttentionGrads& grads);

struct EncodeWithGrads {
  std::vector<double> embedding;
  AttentionGrads grads;
};

EncodeWithGrads encode_sentence_with_grads(const Matrix& embeddings, std::span<const double> rhat,
                                           const AttentionParams& params, std::span<const double> upstream);

}  // namespace protosure
