#pragma once

// Target-model providers: stored predictions, a chat-completions endpoint, and
// a keyword-rule oracle. All are Predictors.

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protosure/data_io.hpp"
#include "protosure/predictor.hpp"
#include "protosure/segmentation.hpp"

namespace protosure {

enum class DatasetKind { BinarySentiment, Dbpedia4, Consumer4 };

DatasetKind parse_dataset_kind(std::string_view name);  // throws UnknownDatasetKind
std::string_view dataset_kind_name(DatasetKind kind);
std::size_t dataset_kind_classes(DatasetKind kind);

std::string_view prompt_template(DatasetKind kind);  // contains "{review}"
std::string build_prompt(DatasetKind kind, std::string_view review);
std::string build_prompt(std::string_view kind, std::string_view review);

// First token after trimming: A/B for binary sentiment (A = class 0), 1-4
// otherwise (1 = class 0). One trailing '.' is tolerated. Anything else
// throws UnparseableAnswer carrying the raw reply.
std::size_t parse_answer(DatasetKind kind, std::string_view reply);

std::vector<double> one_hot(std::size_t label, std::size_t num_classes);

struct KeywordRule {
  std::string keyword;  // matched case-insensitively against whole tokens
  std::size_t cls = 0;
  double weight = 0.0;
};

// score_c = base_c + sum of rule weights over matching tokens; probabilities
// are softmax(score). Ties in the argmax go to the lowest class index.
class SyntheticOracle : public Predictor {
 public:
  SyntheticOracle(std::size_t num_classes, std::vector<double> base, std::vector<KeywordRule> rules);
  // {"num_classes": C, "base": [..]?, "rules": [{"keyword", "class", "weight"}]}
  static SyntheticOracle from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  std::size_t num_classes() const override { return num_classes_; }
  std::vector<std::vector<double>> predict(std::span<const std::string> texts) const override;
  std::vector<double> scores(std::string_view text) const;
  const std::vector<KeywordRule>& rules() const { return rules_; }

 private:
  std::size_t num_classes_;
  std::vector<double> base_;
  std::vector<KeywordRule> rules_;
  std::map<std::string, std::vector<std::pair<std::size_t, double>>, std::less<>> index_;
};

// Serves stored predictions for the documents they were recorded for. A text
// is matched against each document's raw text and its sentence-joined form.
class FilePredictor : public Predictor {
 public:
  FilePredictor(const std::map<std::string, PredictionRecord>& records, std::span<const Document> docs,
                std::size_t num_classes);

  std::size_t num_classes() const override { return num_classes_; }
  std::vector<std::vector<double>> predict(std::span<const std::string> texts) const override;

 private:
  std::size_t num_classes_;
  std::map<std::string, std::vector<double>> by_text_;
};

struct HttpSettings {
  std::string url;  // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string model;
  std::string api_key_env = "PROTOSURE_API_KEY";
  DatasetKind kind = DatasetKind::BinarySentiment;
  std::size_t max_retries = 3;
  std::size_t backoff_ms = 200;  // doubles after each failed attempt
  std::size_t in_flight = 1;     // 1..4
  std::size_t timeout_s = 30;

  static HttpSettings from_json(const nlohmann::json& j);
};

// Renders the prompt, posts it, parses the one-token answer into a one-hot
// vector. Connection errors, 429 and 5xx are retried; other statuses fail at
// once with HttpFailure.
class HttpPredictor : public Predictor {
 public:
  explicit HttpPredictor(HttpSettings settings);

  std::size_t num_classes() const override { return dataset_kind_classes(settings_.kind); }
  std::vector<std::vector<double>> predict(std::span<const std::string> texts) const override;
  std::size_t requests_sent() const { return requests_.load(); }

 private:
  std::vector<double> predict_text(const std::string& text) const;
  std::string post(const std::string& body) const;

  HttpSettings settings_;
  std::string scheme_host_port_;
  std::string path_;
  mutable std::atomic<std::size_t> requests_{0};
};

// Counts the texts passed to the wrapped predictor.
class CountingPredictor : public Predictor {
 public:
  explicit CountingPredictor(const Predictor& inner) : inner_(inner) {}

  std::size_t num_classes() const override { return inner_.num_classes(); }
  std::vector<std::vector<double>> predict(std::span<const std::string> texts) const override {
    calls_ += texts.size();
    return inner_.predict(texts);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  const Predictor& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Token occlusion over the whole document: x is the sentence-joined text, and
// token j's bytes are cut out of x. score_j = f(x) - f(x without token j)
// with f the confidence in g(x). One predictor text per token plus one.
AttributionBundle occlusion_attributions(const Document& doc, const Predictor& predictor);

// {"type": "synthetic", "rules": {...}} | {"type": "synthetic", "rules_file": path}
// | {"type": "http", ...HttpSettings} | {"type": "file", "predictions": path, "num_classes": C}
// Relative paths resolve against base_dir. `docs` is needed by the file provider.
std::unique_ptr<Predictor> make_provider(const nlohmann::json& config, const std::filesystem::path& base_dir,
                                         std::span<const Document> docs = {});

}  // namespace protosure
