#include "protosure/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "protosure/errors.hpp"
#include "protosure/linalg.hpp"
#include "protosure/rng.hpp"

namespace protosure {

namespace {

const std::vector<std::vector<std::string>> kKeywords = {
    {"spotless", "pleasant"}, {"athlete", "painter"},  {"cathedral", "tower"},
    {"river", "mountain"},    {"mortgage", "escrow"},  {"violin", "guitar"},
    {"comet", "planet"},      {"saffron", "pepper"},
};

}  // namespace

HashFeaturizer::HashFeaturizer(std::size_t dim, std::uint64_t seed, std::set<std::string> salient,
                               double background_norm)
    : dim_(dim), seed_(seed), salient_(std::move(salient)), background_norm_(background_norm) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidConfig, "featurizer dimension must be positive");
}

std::vector<float> HashFeaturizer::embed(const std::string& token) const {
  std::string key(token);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  Rng rng(splitmix64(fnv1a64(key) ^ seed_));
  std::vector<double> v(dim_);
  for (auto& x : v) x = rng.normal();
  const double target = salient_.contains(key) ? 1.0 : background_norm_;
  const double scale = target / norm(v);
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(v[i] * scale);
  return out;
}

EmbeddingBundle HashFeaturizer::bundle(const Document& doc) const {
  EmbeddingBundle b;
  b.doc_id = doc.id;
  b.dim = static_cast<std::uint32_t>(dim_);
  for (const auto& s : doc.sentences) {
    SentenceEmbeddings se;
    se.tokens = s.tokens;
    for (const auto& t : s.tokens) {
      const auto v = embed(t);
      se.values.insert(se.values.end(), v.begin(), v.end());
    }
    b.sentences.push_back(std::move(se));
  }
  return b;
}

std::vector<KeywordRule> default_rules(std::size_t num_classes) {
  if (num_classes < 2 || num_classes > kKeywords.size()) {
    throw Error(ErrorCode::InvalidConfig, "default rules cover 2.." + std::to_string(kKeywords.size()) + " classes");
  }
  std::vector<KeywordRule> rules;
  for (std::size_t c = 0; c < num_classes; ++c) {
    rules.push_back({kKeywords[c][0], c, 2.0});
    rules.push_back({kKeywords[c][1], c, 1.0});
  }
  return rules;
}

const std::vector<std::string>& filler_vocabulary() {
  static const std::vector<std::string> words = {
      "the",    "a",      "was",   "very",   "quite",  "with",   "our",    "their", "some",   "this",
      "that",   "near",   "after", "before", "during", "simply", "really", "often", "seemed", "looked",
      "felt",   "here",    "also",  "still",  "just",   "many",   "few",    "every", "other",  "place",
      "thing",  "time",   "day",   "people", "story",  "view",   "part",   "side",  "way",    "group",
  };
  return words;
}

SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config) {
  if (config.min_sentences < 1 || config.max_sentences < config.min_sentences ||
      config.max_fillers < config.min_fillers) {
    throw Error(ErrorCode::InvalidConfig, "synthetic task: bad sentence or filler range");
  }
  std::vector<KeywordRule> rules = config.rules.empty() ? default_rules(config.num_classes) : config.rules;
  std::set<std::string> salient;
  for (const auto& r : rules) {
    std::string k = r.keyword;
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
    salient.insert(k);
  }

  SyntheticTask task{SyntheticOracle(config.num_classes, {}, rules),
                     HashFeaturizer(config.dim, stream_seed(config.seed, Stream::Synthetic), salient),
                     {},
                     {},
                     {}};
  Rng rng(stream_seed(config.seed, Stream::Synthetic) ^ 0x5bd1e995ULL);
  const auto& fillers = filler_vocabulary();

  std::size_t attempts = 0;
  while (task.documents.size() < config.num_documents) {
    if (++attempts > 100 * (config.num_documents + 10)) {
      throw Error(ErrorCode::InvalidConfig, "synthetic task: cannot draw untied documents from these rules");
    }
    const std::size_t sentences =
        config.min_sentences + rng.below(config.max_sentences - config.min_sentences + 1);
    std::string text;
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t n = config.min_fillers + rng.below(config.max_fillers - config.min_fillers + 1);
      std::vector<std::string> words;
      for (std::size_t i = 0; i < n; ++i) words.push_back(fillers[rng.below(fillers.size())]);
      const auto& rule = rules[rng.below(rules.size())];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(n + 1)), rule.keyword);
      if (!text.empty()) text += ' ';
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) text += ' ';
        text += words[i];
      }
      text += '.';
    }
    auto scores = task.oracle.scores(text);
    std::vector<double> sorted = scores;
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] - sorted[1] < 1e-9) continue;

    const std::string id = config.id_prefix + std::to_string(task.documents.size());
    Document doc = make_document(id, text, argmax(scores));
    task.bundles.push_back(task.featurizer.bundle(doc));
    task.attributions.push_back(occlusion_attributions(doc, task.oracle));
    task.documents.push_back(std::move(doc));
  }
  return task;
}

}  // namespace protosure
