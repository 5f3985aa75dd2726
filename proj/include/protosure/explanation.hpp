#pragma once

// Human-readable explanations: every sentence is grounded in the prototypes
// it activates, and each (sentence, prototype) pair contributes
// similarity x class weight to the class logits. Because the head has no bias
// those contributions add up to the logits exactly.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "protosure/model.hpp"

namespace protosure {

struct PrototypeMatch {
  std::size_t prototype = 0;
  double similarity = 0.0;
  double weight = 0.0;        // head weight for the predicted class
  double contribution = 0.0;  // similarity * weight
  std::string exemplar;       // nearest training sentence
  std::string exemplar_doc_id;
  std::size_t exemplar_sentence = 0;
};

struct SentenceExplanation {
  std::size_t index = 0;
  std::string text;
  std::vector<double> logits;  // per class
  double score = 0.0;          // contribution to the predicted class
  std::vector<PrototypeMatch> top;
};

struct Explanation {
  std::string doc_id;
  std::size_t predicted_class = 0;
  std::vector<double> class_scores;   // document logits
  std::vector<double> probabilities;  // softmax of class_scores
  std::vector<SentenceExplanation> sentences;
  // score_i / sum_j score_j; zero when the scores sum to zero.
  std::vector<double> sentence_importance;
  // Per-prototype similarity summed over sentences.
  std::vector<double> prototype_totals;
  PredictionBreakdown breakdown;
};

// Throws MissingBundle when the document has no sentence inputs and
// IndexOutOfRange when top_k is 0.
Explanation explain(const DocumentInput& doc, const SurrogateModel& model, std::size_t top_k);

struct SentenceRanking {
  std::vector<double> scores;
  std::vector<std::size_t> order;  // descending score, ties by index
};

SentenceRanking sentence_importance(const Explanation& explanation);
// Descending-score permutation with index tie-break.
std::vector<std::size_t> ranking_order(std::span<const double> scores);

// "json" or "html". Throws UnknownFormat otherwise.
std::string render_report(const Explanation& explanation, std::string_view format);

}  // namespace protosure
