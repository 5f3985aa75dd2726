#include "protosure/target_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "protosure/errors.hpp"
#include "protosure/faithfulness.hpp"
#include "protosure/linalg.hpp"

namespace protosure {

using nlohmann::json;

namespace {

constexpr std::string_view kBinaryTemplate =
    "Classify the sentiment of the following review as either A (positive) or B (negative). Provide only the "
    "letter (A or B) as your response, with no additional explanation. Review: {review} Output:";
constexpr std::string_view kDbpediaTemplate =
    "Classify the following Review into one of the categories: 1 (Person), 2 (Animal), 3 (Building), or 4 "
    "(Natural Place). Respond with only the corresponding integer (1, 2, 3, or 4) and no explanation. Your answer "
    "must be exactly one of: 1, 2, 3, or 4. Review: {review} Output:";
constexpr std::string_view kConsumerTemplate =
    "Classify the following Review into one of the categories: 1 (Checking or Savings Account), 2 (Credit Card or "
    "Prepaid Card), 3 (Debt Collection), or 4 (Mortgage). Respond with only the corresponding integer (1, 2, 3, or "
    "4) and no explanation. Your answer must be exactly one of: 1, 2, 3, or 4. Review: {review} Output:";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\n\r\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\n\r\f\v");
  return s.substr(b, e - b + 1);
}

// One process-wide window shared by every HTTP provider.
std::counting_semaphore<4>& http_window() {
  static std::counting_semaphore<4> window(4);
  return window;
}

bool transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "binary-sentiment") return DatasetKind::BinarySentiment;
  if (name == "dbpedia-4") return DatasetKind::Dbpedia4;
  if (name == "consumer-4") return DatasetKind::Consumer4;
  throw Error(ErrorCode::UnknownDatasetKind, "'" + std::string(name) +
                                                 "' (expected binary-sentiment, dbpedia-4 or consumer-4)");
}

std::string_view dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::BinarySentiment: return "binary-sentiment";
    case DatasetKind::Dbpedia4: return "dbpedia-4";
    case DatasetKind::Consumer4: return "consumer-4";
  }
  return "";
}

std::size_t dataset_kind_classes(DatasetKind kind) { return kind == DatasetKind::BinarySentiment ? 2 : 4; }

std::string_view prompt_template(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::BinarySentiment: return kBinaryTemplate;
    case DatasetKind::Dbpedia4: return kDbpediaTemplate;
    case DatasetKind::Consumer4: return kConsumerTemplate;
  }
  return kBinaryTemplate;
}

std::string build_prompt(DatasetKind kind, std::string_view review) {
  std::string out(prompt_template(kind));
  const auto at = out.find("{review}");
  out.replace(at, 8, review);
  return out;
}

std::string build_prompt(std::string_view kind, std::string_view review) {
  return build_prompt(parse_dataset_kind(kind), review);
}

std::size_t parse_answer(DatasetKind kind, std::string_view reply) {
  std::string_view s = trim(reply);
  const auto space = s.find_first_of(" \t\n\r\f\v");
  std::string_view token = s.substr(0, space);
  if (token.size() == 2 && token.back() == '.') token.remove_suffix(1);
  if (token.size() == 1) {
    const char c = token.front();
    if (kind == DatasetKind::BinarySentiment) {
      if (c == 'A') return 0;
      if (c == 'B') return 1;
    } else if (c >= '1' && c <= '4') {
      return static_cast<std::size_t>(c - '1');
    }
  }
  throw UnparseableAnswer(std::string(reply));
}

std::vector<double> one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " with " +
                                                std::to_string(num_classes) + " classes");
  }
  std::vector<double> p(num_classes, 0.0);
  p[label] = 1.0;
  return p;
}

// --- synthetic oracle ------------------------------------------------------

SyntheticOracle::SyntheticOracle(std::size_t num_classes, std::vector<double> base, std::vector<KeywordRule> rules)
    : num_classes_(num_classes), base_(std::move(base)), rules_(std::move(rules)) {
  if (num_classes_ < 2) throw Error(ErrorCode::InvalidConfig, "oracle needs at least 2 classes");
  if (base_.empty()) base_.assign(num_classes_, 0.0);
  if (base_.size() != num_classes_) throw Error(ErrorCode::InvalidConfig, "oracle base has wrong length");
  for (const auto& r : rules_) {
    if (r.cls >= num_classes_) throw Error(ErrorCode::InvalidConfig, "rule '" + r.keyword + "' names a missing class");
    if (r.keyword.empty()) throw Error(ErrorCode::InvalidConfig, "rule with empty keyword");
    if (!std::isfinite(r.weight)) throw Error(ErrorCode::InvalidConfig, "rule '" + r.keyword + "' weight");
    index_[lower(r.keyword)].emplace_back(r.cls, r.weight);
  }
}

SyntheticOracle SyntheticOracle::from_json(const json& j) {
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "num_classes" && key != "base" && key != "rules") {
        throw Error(ErrorCode::InvalidConfig, "unknown oracle key '" + key + "'");
      }
    }
    const auto classes = j.at("num_classes").get<std::size_t>();
    std::vector<double> base;
    if (j.contains("base")) base = j.at("base").get<std::vector<double>>();
    std::vector<KeywordRule> rules;
    for (const auto& r : j.at("rules")) {
      rules.push_back({r.at("keyword").get<std::string>(), r.at("class").get<std::size_t>(),
                       r.value("weight", 1.0)});
    }
    return SyntheticOracle(classes, std::move(base), std::move(rules));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("oracle config: ") + e.what());
  }
}

json SyntheticOracle::to_json() const {
  json rules = json::array();
  for (const auto& r : rules_) rules.push_back({{"keyword", r.keyword}, {"class", r.cls}, {"weight", r.weight}});
  return {{"num_classes", num_classes_}, {"base", base_}, {"rules", rules}};
}

std::vector<double> SyntheticOracle::scores(std::string_view text) const {
  std::vector<double> s = base_;
  for (const auto& tok : tokenize_spans(text)) {
    const auto it = index_.find(lower(tok.text));
    if (it == index_.end()) continue;
    for (const auto& [cls, w] : it->second) s[cls] += w;
  }
  return s;
}

std::vector<std::vector<double>> SyntheticOracle::predict(std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(softmax(scores(t)));
  return out;
}

// --- stored predictions ----------------------------------------------------

FilePredictor::FilePredictor(const std::map<std::string, PredictionRecord>& records, std::span<const Document> docs,
                             std::size_t num_classes)
    : num_classes_(num_classes) {
  for (const auto& doc : docs) {
    const auto it = records.find(doc.id);
    if (it == records.end()) throw Error(ErrorCode::MissingPrediction, "no prediction for id '" + doc.id + "'");
    std::vector<double> p = it->second.probs.empty() ? one_hot(it->second.label, num_classes) : it->second.probs;
    if (p.size() != num_classes) {
      throw Error(ErrorCode::ShapeMismatch, "prediction for '" + doc.id + "' has " + std::to_string(p.size()) +
                                                " probabilities, expected " + std::to_string(num_classes));
    }
    by_text_[doc.text] = p;
    by_text_[remove_sentences(doc, {})] = p;
  }
}

std::vector<std::vector<double>> FilePredictor::predict(std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto it = by_text_.find(t);
    if (it == by_text_.end()) {
      throw Error(ErrorCode::MissingPrediction, "no stored prediction for text '" + t.substr(0, 60) + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

// --- HTTP ------------------------------------------------------------------

HttpSettings HttpSettings::from_json(const json& j) {
  HttpSettings s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "type") continue;
      if (key == "url") s.url = value.get<std::string>();
      else if (key == "model") s.model = value.get<std::string>();
      else if (key == "api_key_env") s.api_key_env = value.get<std::string>();
      else if (key == "dataset_kind") s.kind = parse_dataset_kind(value.get<std::string>());
      else if (key == "max_retries") s.max_retries = value.get<std::size_t>();
      else if (key == "backoff_ms") s.backoff_ms = value.get<std::size_t>();
      else if (key == "in_flight") s.in_flight = value.get<std::size_t>();
      else if (key == "timeout_s") s.timeout_s = value.get<std::size_t>();
      else throw Error(ErrorCode::InvalidConfig, "unknown http provider key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("http provider: ") + e.what());
  }
  if (s.url.empty()) throw Error(ErrorCode::InvalidConfig, "http provider: url is required");
  if (s.in_flight < 1 || s.in_flight > 4) throw Error(ErrorCode::InvalidConfig, "http provider: in_flight must be 1..4");
  return s;
}

HttpPredictor::HttpPredictor(HttpSettings settings) : settings_(std::move(settings)) {
  const auto scheme_end = settings_.url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "http provider: url needs a scheme");
  const auto path_start = settings_.url.find('/', scheme_end + 3);
  scheme_host_port_ = settings_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : settings_.url.substr(path_start);
  if (settings_.in_flight < 1 || settings_.in_flight > 4) {
    throw Error(ErrorCode::InvalidConfig, "http provider: in_flight must be 1..4");
  }
}

std::string HttpPredictor::post(const std::string& body) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(static_cast<time_t>(settings_.timeout_s), 0);
  client.set_read_timeout(static_cast<time_t>(settings_.timeout_s), 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(settings_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::size_t backoff = settings_.backoff_ms;
  const std::size_t attempts = settings_.max_retries + 1;
  std::string last_error;
  for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
    ++requests_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (res && res->status == 200) return res->body;
    if (res && !transient_status(res->status)) {
      throw HttpFailure(static_cast<int>(attempt), "HTTP " + std::to_string(res->status) + " from " + settings_.url);
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw HttpFailure(static_cast<int>(attempts), last_error + " from " + settings_.url);
}

std::vector<double> HttpPredictor::predict_text(const std::string& text) const {
  const json body = {{"model", settings_.model},
                     {"messages", json::array({{{"role", "user"}, {"content", build_prompt(settings_.kind, text)}}})},
                     {"temperature", 0},
                     {"max_tokens", 4}};
  http_window().acquire();
  std::string raw;
  try {
    raw = post(body.dump());
  } catch (...) {
    http_window().release();
    throw;
  }
  http_window().release();

  std::string reply;
  try {
    const json r = json::parse(raw);
    const json& choice = r.at("choices").at(0);
    if (choice.contains("message")) reply = choice.at("message").at("content").get<std::string>();
    else reply = choice.at("text").get<std::string>();
  } catch (const json::exception&) {
    throw UnparseableAnswer(raw);
  }
  return one_hot(parse_answer(settings_.kind, reply), num_classes());
}

std::vector<std::vector<double>> HttpPredictor::predict(std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out(texts.size());
  if (settings_.in_flight == 1 || texts.size() < 2) {
    for (std::size_t i = 0; i < texts.size(); ++i) out[i] = predict_text(texts[i]);
    return out;
  }
  // Results land in their request's slot, whatever order replies arrive in.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(texts.size());
  std::vector<std::thread> workers;
  const std::size_t n = std::min(settings_.in_flight, texts.size());
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < texts.size(); i = next++) {
        try {
          out[i] = predict_text(texts[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// --- occlusion -------------------------------------------------------------

AttributionBundle occlusion_attributions(const Document& doc, const Predictor& predictor) {
  if (doc.num_sentences() == 0) throw Error(ErrorCode::EmptyInput, "document '" + doc.id + "' has no sentences");
  const std::string x = remove_sentences(doc, {});

  AttributionBundle bundle;
  bundle.doc_id = doc.id;
  bundle.method = "occlusion";

  // Offsets of each sentence inside x.
  std::vector<std::string> texts{x};
  std::size_t offset = 0;
  for (std::size_t i = 0; i < doc.num_sentences(); ++i) {
    const std::string_view sentence = doc.sentence_text(i);
    SentenceAttributions sa;
    for (const auto& tok : tokenize_spans(sentence)) {
      sa.tokens.push_back(tok.text);
      std::string cut = x;
      cut.erase(offset + tok.start, tok.end - tok.start);
      texts.push_back(std::move(cut));
    }
    bundle.sentences.push_back(std::move(sa));
    offset += sentence.size() + 1;
  }

  const auto probs = predictor.predict(texts);
  const std::size_t cls = argmax(probs[0]);
  const double base = probs[0][cls];
  std::size_t k = 1;
  for (auto& sa : bundle.sentences) {
    for (std::size_t j = 0; j < sa.tokens.size(); ++j) sa.scores.push_back(static_cast<float>(base - probs[k++][cls]));
  }
  return bundle;
}

// --- factory ---------------------------------------------------------------

std::unique_ptr<Predictor> make_provider(const json& config, const std::filesystem::path& base_dir,
                                         std::span<const Document> docs) {
  if (!config.is_object() || !config.contains("type") || !config["type"].is_string()) {
    throw Error(ErrorCode::InvalidConfig, "provider: missing \"type\"");
  }
  const auto type = config["type"].get<std::string>();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (type == "synthetic") {
    for (const auto& [key, _] : config.items()) {
      if (key != "type" && key != "rules" && key != "rules_file") {
        throw Error(ErrorCode::InvalidConfig, "unknown synthetic provider key '" + key + "'");
      }
    }
    if (config.contains("rules")) return std::make_unique<SyntheticOracle>(SyntheticOracle::from_json(config["rules"]));
    if (config.contains("rules_file")) {
      const auto path = resolve(config["rules_file"].get<std::string>());
      std::ifstream in(path);
      if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
      }
      return std::make_unique<SyntheticOracle>(SyntheticOracle::from_json(j));
    }
    throw Error(ErrorCode::InvalidConfig, "synthetic provider needs \"rules\" or \"rules_file\"");
  }
  if (type == "http") return std::make_unique<HttpPredictor>(HttpSettings::from_json(config));
  if (type == "file") {
    for (const auto& [key, _] : config.items()) {
      if (key != "type" && key != "predictions" && key != "num_classes") {
        throw Error(ErrorCode::InvalidConfig, "unknown file provider key '" + key + "'");
      }
    }
    if (!config.contains("predictions") || !config.contains("num_classes")) {
      throw Error(ErrorCode::InvalidConfig, "file provider needs \"predictions\" and \"num_classes\"");
    }
    const auto records = read_predictions(resolve(config["predictions"].get<std::string>()));
    return std::make_unique<FilePredictor>(records, docs, config["num_classes"].get<std::size_t>());
  }
  throw Error(ErrorCode::InvalidConfig, "unknown provider type '" + type + "'");
}

}  // namespace protosure
