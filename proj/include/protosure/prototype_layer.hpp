#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "protosure/linalg.hpp"

namespace protosure {

// The training sentence closest (by cosine) to a prototype.
struct PrototypeAssociation {
  std::string doc_id;
  std::size_t sentence_index = 0;
  double similarity = 0.0;
  std::string text;

  friend bool operator==(const PrototypeAssociation&, const PrototypeAssociation&) = default;
};

struct PrototypeSet {
  Matrix vectors;  // K x d
  bool trainable = true;
  std::vector<PrototypeAssociation> associations;

  std::size_t size() const noexcept { return vectors.rows(); }
  // K >= 2, finite rows with norm > 1e-8.
  void validate() const;

  friend bool operator==(const PrototypeSet&, const PrototypeSet&) = default;
};

// No bias: sentence logits are exactly W a.
struct LinearHead {
  Matrix weights;  // C x K

  std::size_t num_classes() const noexcept { return weights.rows(); }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct PredictionBreakdown {
  Matrix activations;      // M x K, a_ik = cos(h_i, p_k)
  Matrix sentence_logits;  // M x C
  std::vector<double> logits;
  std::size_t predicted_class = 0;
  Matrix head;  // copy of W so contributions are self-contained

  std::size_t num_sentences() const noexcept { return activations.rows(); }
  // a_ik * W_ck
  double contribution(std::size_t sentence, std::size_t prototype, std::size_t cls) const {
    return activations(sentence, prototype) * head(cls, prototype);
  }
};

struct KMeansResult {
  Matrix centers;
  std::vector<std::size_t> assignment;
  std::vector<double> inertia_history;  // after every Lloyd iteration
  std::size_t iterations = 0;
  bool converged = false;
};

inline constexpr std::size_t kKMeansMaxIterations = 100;

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or kKMeansMaxIterations is reached. Empty clusters are re-seeded
// from the point farthest from its center. Throws TooFewPoints when fewer
// than k distinct points are given.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed);
PrototypeSet kmeans_init(const Matrix& points, std::size_t k, std::uint64_t seed);

struct CorpusSentence {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::string text;
  std::vector<double> embedding;
};

// Highest-cosine sentence per prototype; ties go to the lowest
// (doc_id, sentence_index).
std::vector<PrototypeAssociation> associate_nearest(const Matrix& prototypes,
                                                    std::span<const CorpusSentence> corpus);

// a_k = cos(h, p_k). Throws ZeroVector when ||h|| <= 1e-12.
std::vector<double> activations(std::span<const double> h, const Matrix& prototypes);

// `embeddings` holds one sentence embedding per row.
PredictionBreakdown predict_document(const Matrix& embeddings, const Matrix& prototypes, const LinearHead& head);

}  // namespace protosure
