#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protosure/config.hpp"
#include "protosure/data_io.hpp"
#include "protosure/encoder_adapter.hpp"
#include "protosure/prototype_layer.hpp"

namespace protosure {

// Per-sentence numeric inputs for the surrogate.
struct SentenceInput {
  Matrix embeddings;                // l x d
  std::vector<double> attributions; // raw scores, length l; empty when absent
};

struct DocumentInput {
  std::string doc_id;
  std::vector<std::string> sentence_texts;
  std::vector<SentenceInput> sentences;
  std::optional<std::size_t> label;  // target model prediction
};

// Pairs a segmented document with its bundles. Throws MissingBundle or
// ShapeMismatch when they disagree.
DocumentInput make_document_input(const Document& doc, const EmbeddingBundle& embeddings,
                                  const AttributionBundle* attributions = nullptr);

// Loads <dir>/<id>.pse (and <attr_dir>/<id>.psa when attr_dir is non-empty)
// for every document. Throws MissingBundle listing every id without a bundle.
std::vector<DocumentInput> load_document_inputs(std::span<const Document> docs,
                                                const std::filesystem::path& bundle_dir,
                                                const std::filesystem::path& attribution_dir = {});

struct SurrogateModel {
  AttentionParams attention;
  PrototypeSet prototypes;
  LinearHead head;
  TrainConfig config;

  std::size_t dim() const noexcept { return attention.dim(); }
  std::size_t num_classes() const noexcept { return head.num_classes(); }
  std::size_t num_prototypes() const noexcept { return prototypes.size(); }

  // Normalized attributions as fed to the encoder; empty when attributions are
  // disabled or absent.
  std::vector<double> attribution_bias(const SentenceInput& sentence) const;
  // M x d sentence embeddings.
  Matrix encode(const DocumentInput& doc) const;
  PredictionBreakdown predict(const DocumentInput& doc) const;

  friend bool operator==(const SurrogateModel&, const SurrogateModel&) = default;
};

// The surrogate viewed as a predictor over sentence subsets: the document
// logits for a subset are the sum of the member sentences' logits.
std::vector<double> subset_probabilities(const PredictionBreakdown& breakdown, std::span<const std::size_t> kept);

}  // namespace protosure
