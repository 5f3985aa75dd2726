#pragma once

// Keyword-rule toy task with a deterministic hashed featurizer, used by the
// tests, the acceptance suite and `protosure synth`.

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "protosure/data_io.hpp"
#include "protosure/segmentation.hpp"
#include "protosure/target_client.hpp"

namespace protosure {

// Token vectors come from a splitmix64 stream seeded by the token's hash.
// Salient tokens get unit norm, every other token `background_norm`.
class HashFeaturizer {
 public:
  HashFeaturizer(std::size_t dim, std::uint64_t seed, std::set<std::string> salient, double background_norm = 0.3);

  std::size_t dim() const { return dim_; }
  std::vector<float> embed(const std::string& token) const;
  EmbeddingBundle bundle(const Document& doc) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::set<std::string> salient_;
  double background_norm_;
};

struct SyntheticTaskConfig {
  std::size_t num_classes = 4;
  std::vector<KeywordRule> rules;  // empty: default_rules(num_classes)
  std::size_t num_documents = 64;
  std::size_t min_sentences = 1;
  std::size_t max_sentences = 4;
  std::size_t min_fillers = 3;
  std::size_t max_fillers = 7;
  std::size_t dim = 24;
  std::uint64_t seed = 0;
  std::string id_prefix = "doc";
};

// Two keywords per class, the first weighted 2, the second 1.
std::vector<KeywordRule> default_rules(std::size_t num_classes);
const std::vector<std::string>& filler_vocabulary();

struct SyntheticTask {
  SyntheticOracle oracle;
  HashFeaturizer featurizer;
  std::vector<Document> documents;  // label = oracle argmax
  std::vector<EmbeddingBundle> bundles;
  std::vector<AttributionBundle> attributions;  // occlusion against the oracle
};

// Every sentence holds exactly one keyword among its fillers and ends in '.'.
// Documents whose top two oracle scores tie are redrawn.
SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config);

}  // namespace protosure
