#pragma once

// Shared fixtures and independent oracles for the unit tests and the
// acceptance suite. Oracles here deliberately avoid the library's own
// helpers (ranking, softmax, metric code) so they check it from outside.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "protosure/model.hpp"
#include "protosure/predictor.hpp"
#include "protosure/rng.hpp"
#include "protosure/synthetic.hpp"

namespace protosure::testkit {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);
std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0);

// Random document with `sentences` sentences of 1..max_tokens tokens.
DocumentInput random_input(const std::string& id, std::size_t sentences, std::size_t max_tokens, std::size_t dim,
                           std::size_t num_classes, Rng& rng, bool with_attributions = true);
SurrogateModel random_model(std::size_t dim, std::size_t num_prototypes, std::size_t num_classes, Rng& rng);

// --- gradient oracle ---

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t entries = 0;
};
// Central differences of total_loss(...).loss.total against the analytic
// gradients, every parameter entry, relative error
// |a - n| / max(|a|, |n|, 1e-6).
GradientCheck check_gradients(std::span<const DocumentInput> batch, const SurrogateModel& model,
                              const TrainConfig& config, double step = 1e-4);

// --- loss oracles ---
double brute_cosine(std::span<const double> a, std::span<const double> b);
double brute_proto_loss(const Matrix& h, const Matrix& p);
double brute_diversity_loss(const Matrix& p, bool normalize = false);

// --- rank oracle ---
// Average ranks by counting, then Pearson. Returns 0 for constant input.
double oracle_spearman(std::span<const double> a, std::span<const double> b);

// --- metric oracle ---

// Sentences are the words "w0." .. "wN." and the predictor sums a logit
// vector per sentence it finds, then softmaxes. The empty text is uniform.
class ToyLinearPredictor : public Predictor {
 public:
  explicit ToyLinearPredictor(std::vector<std::vector<double>> sentence_logits);
  std::size_t num_classes() const override { return classes_; }
  std::vector<std::vector<double>> predict(std::span<const std::string> texts) const override;

  // Probabilities for a set of kept sentence indices.
  std::vector<double> probs_for(const std::vector<bool>& kept) const;
  std::size_t num_sentences() const { return logits_.size(); }

 private:
  std::vector<std::vector<double>> logits_;
  std::size_t classes_;
};

Document toy_document(const std::string& id, std::size_t sentences);

struct OracleMetrics {
  double comp_drop = 0.0;
  double suff_drop = 0.0;
  double dff = 0.0;
  double dfs = 0.0;
  double del = 0.0;
  double ins = 0.0;
  bool flipped_any = false;
};
// Enumerates removal/keep prefixes and single removals over index sets.
OracleMetrics oracle_metrics(const ToyLinearPredictor& p, std::span<const double> scores);

// --- fixtures ---

// Three-sentence hotel review with an engineered model: prototypes e1..e4
// ("Cleanliness", "Service", "Location", "Noise"), two classes
// (positive, negative).
struct HotelReviewFixture {
  SurrogateModel model;
  DocumentInput document;
};
HotelReviewFixture hotel_review_fixture();

std::vector<DocumentInput> synthetic_inputs(const SyntheticTask& task);

}  // namespace protosure::testkit
