#pragma once

// Perturbation-based faithfulness metrics over sentence-level importance.
//
// Notation for a document with L sentences and an importance order e:
//   x         the sentences joined by single spaces
//   f(t)      predictor probability of the class predicted for x
//   g(t)      predictor argmax (lowest index wins ties)
//   rem(l)    x with the l most important sentences removed
//   keep(l)   x with only the l most important sentences kept
//
//   Comp  mean_{l=0..L} [f(x) - f(rem(l))]      ("paper-literal": 1 - that)
//   Suff  mean_{l=0..L} [f(x) - f(keep(l))]     ("paper-literal": 1 - that)
//   DFF   min{l : g(rem(l)) != g(x)} / L, or 1 when no prefix flips
//   DFS   [g(rem(1)) != g(x)]
//   Del   spearman(delta, scores), delta_i = f(x) - f(x without sentence i)
//   Ins   spearman([f(rem(L)), ..., f(rem(0))], [0..L])

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protosure/data_io.hpp"
#include "protosure/model.hpp"
#include "protosure/predictor.hpp"
#include "protosure/segmentation.hpp"

namespace protosure {

enum class MetricVariant { Drop, PaperLiteral };
MetricVariant parse_variant(std::string_view name);
std::string_view variant_name(MetricVariant v);

enum class Aggregation { Mean, Max, Sum };
Aggregation parse_aggregation(std::string_view name);

// Surviving sentences in original order joined by single spaces; removing
// everything yields "". Throws IndexOutOfRange.
std::string remove_sentences(const Document& doc, std::span<const std::size_t> removed);
std::string keep_sentences(const Document& doc, std::span<const std::size_t> kept);

struct RankCorrelation {
  double value = 0.0;
  bool degenerate = false;  // one side constant; value reported as 0
};

// Spearman's rho with average ranks for ties.
RankCorrelation spearman(std::span<const double> a, std::span<const double> b);
std::vector<double> average_ranks(std::span<const double> values);

// Memoizes predictor outputs for one document's perturbations and counts the
// texts actually sent to the predictor.
class PerturbationCache {
 public:
  PerturbationCache(const Predictor& predictor, const Document& doc);

  const Document& document() const { return doc_; }
  std::size_t num_sentences() const { return doc_.num_sentences(); }
  std::size_t original_class() const { return original_class_; }
  double original_confidence() const { return original_probs_[original_class_]; }

  // Predicts every not-yet-cached text in one batch.
  void prefetch(const std::vector<std::string>& texts);
  const std::vector<double>& probs(const std::string& text);
  double confidence(const std::string& text) { return probs(text)[original_class_]; }
  std::size_t decision(const std::string& text);

  std::string removal_prefix(std::span<const std::size_t> order, std::size_t l) const;
  std::string keep_prefix(std::span<const std::size_t> order, std::size_t l) const;
  std::string single_removal(std::size_t sentence) const;

  std::size_t predictor_calls() const { return calls_; }

 private:
  const Predictor& predictor_;
  const Document& doc_;
  std::map<std::string, std::vector<double>> cache_;
  std::vector<double> original_probs_;
  std::size_t original_class_ = 0;
  std::size_t calls_ = 0;
};

double fidelity_accuracy(std::span<const std::size_t> surrogate, std::span<const std::size_t> target);

double comprehensiveness(PerturbationCache& cache, std::span<const std::size_t> order,
                         MetricVariant variant = MetricVariant::Drop);
double sufficiency(PerturbationCache& cache, std::span<const std::size_t> order,
                   MetricVariant variant = MetricVariant::Drop);
double decision_flip_fraction(PerturbationCache& cache, std::span<const std::size_t> order);
int decision_flip_most_important(PerturbationCache& cache, std::span<const std::size_t> order);
RankCorrelation deletion_rank_correlation(PerturbationCache& cache, std::span<const double> scores);
RankCorrelation insertion_rank_correlation(PerturbationCache& cache, std::span<const std::size_t> order);

// Convenience overloads with a private cache.
double comprehensiveness(const Predictor& p, const Document& doc, std::span<const std::size_t> order,
                         MetricVariant variant = MetricVariant::Drop);
double sufficiency(const Predictor& p, const Document& doc, std::span<const std::size_t> order,
                   MetricVariant variant = MetricVariant::Drop);
double decision_flip_fraction(const Predictor& p, const Document& doc, std::span<const std::size_t> order);
int decision_flip_most_important(const Predictor& p, const Document& doc, std::span<const std::size_t> order);
RankCorrelation deletion_rank_correlation(const Predictor& p, const Document& doc, std::span<const double> scores);
RankCorrelation insertion_rank_correlation(const Predictor& p, const Document& doc,
                                           std::span<const std::size_t> order);

// Per-sentence token score aggregation (mean by default). Throws ShapeMismatch.
std::vector<double> aggregate_token_scores(const std::vector<std::vector<double>>& token_scores,
                                           Aggregation mode = Aggregation::Mean);
std::vector<double> importance_from_attributions(const Document& doc, const AttributionBundle& attributions,
                                                 Aggregation mode = Aggregation::Mean);

struct DocumentMetrics {
  std::string doc_id;
  std::size_t sentences = 0;
  double comp_drop = 0.0;
  double comp_literal = 0.0;
  double suff_drop = 0.0;
  double suff_literal = 0.0;
  double dff = 0.0;
  double dfs = 0.0;
  std::optional<double> del;  // absent when L < 2
  std::optional<double> ins;
  bool del_degenerate = false;
  bool ins_degenerate = false;
  std::size_t predictor_calls = 0;
};

struct FaithfulnessReport {
  MetricVariant variant = MetricVariant::Drop;
  std::optional<double> acc;
  double comp = 0.0;  // selected variant
  double suff = 0.0;
  double comp_drop = 0.0;
  double comp_literal = 0.0;
  double suff_drop = 0.0;
  double suff_literal = 0.0;
  double dff = 0.0;
  double dfs = 0.0;
  std::optional<double> del;
  std::optional<double> ins;
  std::size_t documents = 0;
  std::size_t del_ins_excluded = 0;  // documents with L < 2
  std::size_t degenerate_del = 0;
  std::size_t degenerate_ins = 0;
  std::vector<DocumentMetrics> per_document;

  nlohmann::json to_json() const;
  // One row per document plus a final "__summary__" row.
  std::string to_csv() const;
};

DocumentMetrics evaluate_document(const Predictor& predictor, const Document& doc, std::span<const double> scores);

struct EvalOptions {
  MetricVariant variant = MetricVariant::Drop;
  std::size_t threads = 1;
  // Surrogate argmax per document; enables the Acc metric against doc labels.
  std::optional<std::vector<std::size_t>> surrogate_classes;
};

// `importance[i]` holds one score per sentence of docs[i]. Throws
// EmptyDataset for an empty document list.
FaithfulnessReport evaluate_explainer(const Predictor& predictor, std::span<const Document> docs,
                                      std::span<const std::vector<double>> importance, const EvalOptions& options = {});

// The surrogate as a text predictor. Sentence logits are independent of the
// rest of the document, so they are precomputed per known sentence text and a
// perturbed text's logits are the sum over its sentences. Unknown sentences
// throw MissingPrediction.
class SurrogatePredictor : public Predictor {
 public:
  SurrogatePredictor(const SurrogateModel& model, std::span<const DocumentInput> docs);

  std::size_t num_classes() const override { return num_classes_; }
  std::vector<std::vector<double>> predict(std::span<const std::string> texts) const override;
  std::vector<double> logits(const std::string& text) const;

 private:
  std::size_t num_classes_;
  std::map<std::string, std::vector<double>, std::less<>> sentence_logits_;
};

}  // namespace protosure
