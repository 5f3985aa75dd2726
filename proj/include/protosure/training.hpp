#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "protosure/config.hpp"
#include "protosure/model.hpp"

namespace protosure {

// -log softmax(logits)[label], max-subtracted. Throws LabelOutOfRange.
double ce_loss(std::span<const double> logits, std::size_t label);

// -(1/K) sum_k max_i cos(h_i, p_k), rows of `embeddings` are the h_i.
double proto_loss(const Matrix& embeddings, const Matrix& prototypes);

// 1/(K(K-1)) sum_{i != j} |p_i . p_j| over raw prototype rows, or over unit
// rows when `normalize` is set.
double diversity_loss(const Matrix& prototypes, bool normalize = false);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;  // mean over the batch
  double proto = 0.0;
  double diversity = 0.0;
};

struct ModelGradients {
  AttentionGrads attention;
  Matrix head;        // C x K
  Matrix prototypes;  // K x d; zero when prototypes are frozen
};

struct LossAndGradients {
  LossBreakdown loss;
  ModelGradients grads;
};

// L = mean CE + lambda1 * proto + lambda2 * diversity, with analytic
// gradients. The prototype-coverage max runs over the batch's sentences.
// Throws MissingBundle when a document lacks sentence inputs or a label.
LossAndGradients total_loss(std::span<const DocumentInput> batch, const SurrogateModel& model,
                            const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;
  double ce = 0.0;
  double proto = 0.0;
  double diversity = 0.0;
  double total = 0.0;
  std::optional<double> heldout_fidelity;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t steps = 0;

  // Wall-clock timings vary run to run; leave them out for byte-stable files.
  nlohmann::json to_json(bool include_timing = false) const;
};

struct TrainResult {
  SurrogateModel model;
  TrainReport report;
};

struct TrainHooks {
  std::function<void(std::size_t epoch, const SurrogateModel&)> on_epoch_end;
};

// Initial model: attention projections from the seeded uniform init,
// prototypes from k-means over the untrained adapter's sentence embeddings
// (no attribution bias), zero head.
SurrogateModel initialize_model(std::span<const DocumentInput> docs, std::size_t num_classes,
                                const TrainConfig& config);

// Fraction of documents whose surrogate argmax equals their label.
double fidelity(const SurrogateModel& model, std::span<const DocumentInput> docs);

// AdamW over shuffled mini-batches. Throws DivergedLoss on a non-finite loss.
TrainResult train(std::span<const DocumentInput> train_docs, std::span<const DocumentInput> heldout,
                  std::size_t num_classes, const TrainConfig& config, const TrainHooks& hooks = {});

// Runs fn(i) for i in [0, n) on up to `threads` threads.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace protosure
