#include "protosure/faithfulness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "protosure/errors.hpp"
#include "protosure/linalg.hpp"
#include "protosure/training.hpp"

namespace protosure {

using nlohmann::json;

MetricVariant parse_variant(std::string_view name) {
  if (name == "drop") return MetricVariant::Drop;
  if (name == "paper-literal") return MetricVariant::PaperLiteral;
  throw Error(ErrorCode::InvalidConfig, "unknown metric variant '" + std::string(name) + "'");
}

std::string_view variant_name(MetricVariant v) { return v == MetricVariant::Drop ? "drop" : "paper-literal"; }

Aggregation parse_aggregation(std::string_view name) {
  if (name == "mean") return Aggregation::Mean;
  if (name == "max") return Aggregation::Max;
  if (name == "sum") return Aggregation::Sum;
  throw Error(ErrorCode::InvalidConfig, "unknown aggregation '" + std::string(name) + "'");
}

namespace {

std::string join_mask(const Document& doc, const std::vector<bool>& keep) {
  std::string out;
  for (std::size_t i = 0; i < doc.num_sentences(); ++i) {
    if (!keep[i]) continue;
    if (!out.empty()) out += ' ';
    out += doc.sentence_text(i);
  }
  return out;
}

std::vector<bool> mask_from(const Document& doc, std::span<const std::size_t> indices, bool value) {
  std::vector<bool> mask(doc.num_sentences(), !value);
  for (std::size_t i : indices) {
    if (i >= doc.num_sentences()) {
      throw Error(ErrorCode::IndexOutOfRange, "sentence " + std::to_string(i) + " of " +
                                                  std::to_string(doc.num_sentences()));
    }
    mask[i] = value;
  }
  return mask;
}

void check_order(const PerturbationCache& cache, std::span<const std::size_t> order) {
  const std::size_t n = cache.num_sentences();
  std::vector<bool> seen(n, false);
  if (order.size() != n) throw Error(ErrorCode::IndexOutOfRange, "importance order must list every sentence once");
  for (std::size_t i : order) {
    if (i >= n || seen[i]) throw Error(ErrorCode::IndexOutOfRange, "importance order is not a permutation");
    seen[i] = true;
  }
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string remove_sentences(const Document& doc, std::span<const std::size_t> removed) {
  return join_mask(doc, mask_from(doc, removed, false));
}

std::string keep_sentences(const Document& doc, std::span<const std::size_t> kept) {
  return join_mask(doc, mask_from(doc, kept, true));
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

RankCorrelation spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "spearman: lengths differ");
  if (a.size() < 2 || is_constant(a) || is_constant(b)) return {0.0, true};
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return {pearson(ra, rb), false};
}

PerturbationCache::PerturbationCache(const Predictor& predictor, const Document& doc)
    : predictor_(predictor), doc_(doc) {
  if (doc.num_sentences() == 0) throw Error(ErrorCode::EmptyInput, "document '" + doc.id + "' has no sentences");
  original_probs_ = probs(remove_sentences(doc, {}));
  original_class_ = argmax(original_probs_);
}

void PerturbationCache::prefetch(const std::vector<std::string>& texts) {
  std::vector<std::string> missing;
  std::set<std::string> queued;
  for (const auto& t : texts) {
    if (!cache_.contains(t) && queued.insert(t).second) missing.push_back(t);
  }
  if (missing.empty()) return;
  auto results = predictor_.predict(missing);
  calls_ += missing.size();
  for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(std::move(missing[i]), std::move(results[i]));
}

const std::vector<double>& PerturbationCache::probs(const std::string& text) {
  auto it = cache_.find(text);
  if (it == cache_.end()) {
    prefetch({text});
    it = cache_.find(text);
  }
  return it->second;
}

std::size_t PerturbationCache::decision(const std::string& text) { return argmax(probs(text)); }

std::string PerturbationCache::removal_prefix(std::span<const std::size_t> order, std::size_t l) const {
  return remove_sentences(doc_, order.first(l));
}

std::string PerturbationCache::keep_prefix(std::span<const std::size_t> order, std::size_t l) const {
  return keep_sentences(doc_, order.first(l));
}

std::string PerturbationCache::single_removal(std::size_t sentence) const {
  return remove_sentences(doc_, std::span<const std::size_t>(&sentence, 1));
}

double fidelity_accuracy(std::span<const std::size_t> surrogate, std::span<const std::size_t> target) {
  if (surrogate.size() != target.size()) throw Error(ErrorCode::ShapeMismatch, "prediction lists differ in length");
  if (surrogate.empty()) throw Error(ErrorCode::EmptyDataset, "no predictions to compare");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < surrogate.size(); ++i) agree += surrogate[i] == target[i] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(surrogate.size());
}

double comprehensiveness(PerturbationCache& cache, std::span<const std::size_t> order, MetricVariant variant) {
  check_order(cache, order);
  const std::size_t len = cache.num_sentences();
  std::vector<std::string> texts;
  for (std::size_t l = 0; l <= len; ++l) texts.push_back(cache.removal_prefix(order, l));
  cache.prefetch(texts);
  const double base = cache.original_confidence();
  double total = 0.0;
  for (const auto& t : texts) total += base - cache.confidence(t);
  const double mean = total / static_cast<double>(len + 1);
  return variant == MetricVariant::Drop ? mean : 1.0 - mean;
}

double sufficiency(PerturbationCache& cache, std::span<const std::size_t> order, MetricVariant variant) {
  check_order(cache, order);
  const std::size_t len = cache.num_sentences();
  std::vector<std::string> texts;
  for (std::size_t l = 0; l <= len; ++l) texts.push_back(cache.keep_prefix(order, l));
  cache.prefetch(texts);
  const double base = cache.original_confidence();
  double total = 0.0;
  for (const auto& t : texts) total += base - cache.confidence(t);
  const double mean = total / static_cast<double>(len + 1);
  return variant == MetricVariant::Drop ? mean : 1.0 - mean;
}

double decision_flip_fraction(PerturbationCache& cache, std::span<const std::size_t> order) {
  check_order(cache, order);
  const std::size_t len = cache.num_sentences();
  std::vector<std::string> texts;
  for (std::size_t l = 1; l <= len; ++l) texts.push_back(cache.removal_prefix(order, l));
  cache.prefetch(texts);
  for (std::size_t l = 1; l <= len; ++l) {
    if (cache.decision(texts[l - 1]) != cache.original_class()) return static_cast<double>(l) / static_cast<double>(len);
  }
  return 1.0;
}

int decision_flip_most_important(PerturbationCache& cache, std::span<const std::size_t> order) {
  check_order(cache, order);
  return cache.decision(cache.removal_prefix(order, 1)) != cache.original_class() ? 1 : 0;
}

RankCorrelation deletion_rank_correlation(PerturbationCache& cache, std::span<const double> scores) {
  const std::size_t len = cache.num_sentences();
  if (scores.size() != len) throw Error(ErrorCode::ShapeMismatch, "one importance score per sentence is required");
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < len; ++i) texts.push_back(cache.single_removal(i));
  cache.prefetch(texts);
  std::vector<double> deltas(len);
  for (std::size_t i = 0; i < len; ++i) deltas[i] = cache.original_confidence() - cache.confidence(texts[i]);
  return spearman(deltas, scores);
}

RankCorrelation insertion_rank_correlation(PerturbationCache& cache, std::span<const std::size_t> order) {
  check_order(cache, order);
  const std::size_t len = cache.num_sentences();
  std::vector<std::string> texts;
  for (std::size_t l = 0; l <= len; ++l) texts.push_back(cache.removal_prefix(order, len - l));
  cache.prefetch(texts);
  std::vector<double> v(len + 1), steps(len + 1);
  for (std::size_t l = 0; l <= len; ++l) {
    v[l] = cache.confidence(texts[l]);
    steps[l] = static_cast<double>(l);
  }
  return spearman(v, steps);
}

double comprehensiveness(const Predictor& p, const Document& doc, std::span<const std::size_t> order,
                         MetricVariant variant) {
  PerturbationCache cache(p, doc);
  return comprehensiveness(cache, order, variant);
}

double sufficiency(const Predictor& p, const Document& doc, std::span<const std::size_t> order, MetricVariant variant) {
  PerturbationCache cache(p, doc);
  return sufficiency(cache, order, variant);
}

double decision_flip_fraction(const Predictor& p, const Document& doc, std::span<const std::size_t> order) {
  PerturbationCache cache(p, doc);
  return decision_flip_fraction(cache, order);
}

int decision_flip_most_important(const Predictor& p, const Document& doc, std::span<const std::size_t> order) {
  PerturbationCache cache(p, doc);
  return decision_flip_most_important(cache, order);
}

RankCorrelation deletion_rank_correlation(const Predictor& p, const Document& doc, std::span<const double> scores) {
  PerturbationCache cache(p, doc);
  return deletion_rank_correlation(cache, scores);
}

RankCorrelation insertion_rank_correlation(const Predictor& p, const Document& doc, std::span<const std::size_t> order) {
  PerturbationCache cache(p, doc);
  return insertion_rank_correlation(cache, order);
}

std::vector<double> aggregate_token_scores(const std::vector<std::vector<double>>& token_scores, Aggregation mode) {
  std::vector<double> out;
  out.reserve(token_scores.size());
  for (std::size_t i = 0; i < token_scores.size(); ++i) {
    const auto& s = token_scores[i];
    if (s.empty()) throw Error(ErrorCode::ShapeMismatch, "sentence " + std::to_string(i) + " has no token scores");
    switch (mode) {
      case Aggregation::Mean:
        out.push_back(std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size()));
        break;
      case Aggregation::Max:
        out.push_back(*std::max_element(s.begin(), s.end()));
        break;
      case Aggregation::Sum:
        out.push_back(std::accumulate(s.begin(), s.end(), 0.0));
        break;
    }
  }
  return out;
}

std::vector<double> importance_from_attributions(const Document& doc, const AttributionBundle& attributions,
                                                 Aggregation mode) {
  if (attributions.sentences.size() != doc.num_sentences()) {
    throw Error(ErrorCode::ShapeMismatch, "attributions for '" + doc.id + "' cover " +
                                              std::to_string(attributions.sentences.size()) + " sentences, document has " +
                                              std::to_string(doc.num_sentences()));
  }
  std::vector<std::vector<double>> scores;
  for (const auto& s : attributions.sentences) scores.emplace_back(s.scores.begin(), s.scores.end());
  return aggregate_token_scores(scores, mode);
}

DocumentMetrics evaluate_document(const Predictor& predictor, const Document& doc, std::span<const double> scores) {
  if (scores.size() != doc.num_sentences()) {
    throw Error(ErrorCode::ShapeMismatch, "document '" + doc.id + "' needs " + std::to_string(doc.num_sentences()) +
                                              " importance scores, got " + std::to_string(scores.size()));
  }
  PerturbationCache cache(predictor, doc);
  // Descending importance, ties by index.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  DocumentMetrics m;
  m.doc_id = doc.id;
  m.sentences = doc.num_sentences();
  m.comp_drop = comprehensiveness(cache, order, MetricVariant::Drop);
  m.comp_literal = 1.0 - m.comp_drop;
  m.suff_drop = sufficiency(cache, order, MetricVariant::Drop);
  m.suff_literal = 1.0 - m.suff_drop;
  m.dff = decision_flip_fraction(cache, order);
  m.dfs = decision_flip_most_important(cache, order);
  if (m.sentences >= 2) {
    const auto del = deletion_rank_correlation(cache, scores);
    const auto ins = insertion_rank_correlation(cache, order);
    m.del = del.value;
    m.ins = ins.value;
    m.del_degenerate = del.degenerate;
    m.ins_degenerate = ins.degenerate;
  }
  m.predictor_calls = cache.predictor_calls();
  return m;
}

FaithfulnessReport evaluate_explainer(const Predictor& predictor, std::span<const Document> docs,
                                      std::span<const std::vector<double>> importance, const EvalOptions& options) {
  if (docs.empty()) throw Error(ErrorCode::EmptyDataset, "no documents to evaluate");
  if (importance.size() != docs.size()) throw Error(ErrorCode::ShapeMismatch, "one importance vector per document is required");

  FaithfulnessReport report;
  report.variant = options.variant;
  report.per_document.resize(docs.size());
  parallel_for(docs.size(), options.threads,
               [&](std::size_t i) { report.per_document[i] = evaluate_document(predictor, docs[i], importance[i]); });

  double del_sum = 0.0, ins_sum = 0.0;
  std::size_t del_ins_count = 0;
  for (const auto& m : report.per_document) {
    report.comp_drop += m.comp_drop;
    report.comp_literal += m.comp_literal;
    report.suff_drop += m.suff_drop;
    report.suff_literal += m.suff_literal;
    report.dff += m.dff;
    report.dfs += m.dfs;
    if (m.del) {
      del_sum += *m.del;
      ins_sum += *m.ins;
      ++del_ins_count;
      report.degenerate_del += m.del_degenerate ? 1 : 0;
      report.degenerate_ins += m.ins_degenerate ? 1 : 0;
    } else {
      ++report.del_ins_excluded;
    }
  }
  const double n = static_cast<double>(docs.size());
  report.documents = docs.size();
  report.comp_drop /= n;
  report.comp_literal /= n;
  report.suff_drop /= n;
  report.suff_literal /= n;
  report.dff /= n;
  report.dfs /= n;
  report.comp = options.variant == MetricVariant::Drop ? report.comp_drop : report.comp_literal;
  report.suff = options.variant == MetricVariant::Drop ? report.suff_drop : report.suff_literal;
  if (del_ins_count > 0) {
    report.del = del_sum / static_cast<double>(del_ins_count);
    report.ins = ins_sum / static_cast<double>(del_ins_count);
  }

  if (options.surrogate_classes) {
    std::vector<std::size_t> target;
    for (const auto& d : docs) {
      if (!d.label) throw Error(ErrorCode::MissingPrediction, "document '" + d.id + "' has no target label");
      target.push_back(*d.label);
    }
    report.acc = fidelity_accuracy(*options.surrogate_classes, target);
  }
  return report;
}

json FaithfulnessReport::to_json() const {
  json docs = json::array();
  for (const auto& m : per_document) {
    docs.push_back({{"doc_id", m.doc_id},
                    {"sentences", m.sentences},
                    {"comp_drop", m.comp_drop},
                    {"comp_paper_literal", m.comp_literal},
                    {"suff_drop", m.suff_drop},
                    {"suff_paper_literal", m.suff_literal},
                    {"dff", m.dff},
                    {"dfs", m.dfs},
                    {"del", optional_number(m.del)},
                    {"ins", optional_number(m.ins)},
                    {"del_degenerate", m.del_degenerate},
                    {"ins_degenerate", m.ins_degenerate},
                    {"predictor_calls", m.predictor_calls}});
  }
  return json{{"variant", variant_name(variant)},
              {"acc", optional_number(acc)},
              {"comp", comp},
              {"suff", suff},
              {"dff", dff},
              {"dfs", dfs},
              {"del", optional_number(del)},
              {"ins", optional_number(ins)},
              {"comp_drop", comp_drop},
              {"comp_paper_literal", comp_literal},
              {"suff_drop", suff_drop},
              {"suff_paper_literal", suff_literal},
              {"documents", documents},
              {"del_ins_excluded", del_ins_excluded},
              {"degenerate_del", degenerate_del},
              {"degenerate_ins", degenerate_ins},
              {"per_document", docs}};
}

std::string FaithfulnessReport::to_csv() const {
  std::ostringstream os;
  os << "doc_id,sentences,acc,comp_drop,comp_paper_literal,suff_drop,suff_paper_literal,dff,dfs,del,ins\n";
  for (const auto& m : per_document) {
    os << csv_escape(m.doc_id) << ',' << m.sentences << ",," << csv_number(m.comp_drop) << ','
       << csv_number(m.comp_literal) << ',' << csv_number(m.suff_drop) << ',' << csv_number(m.suff_literal) << ','
       << csv_number(m.dff) << ',' << csv_number(m.dfs) << ',' << csv_number(m.del) << ',' << csv_number(m.ins)
       << '\n';
  }
  os << "__summary__," << documents << ',' << csv_number(acc) << ',' << csv_number(comp_drop) << ','
     << csv_number(comp_literal) << ',' << csv_number(suff_drop) << ',' << csv_number(suff_literal) << ','
     << csv_number(dff) << ',' << csv_number(dfs) << ',' << csv_number(del) << ',' << csv_number(ins) << '\n';
  return os.str();
}

SurrogatePredictor::SurrogatePredictor(const SurrogateModel& model, std::span<const DocumentInput> docs)
    : num_classes_(model.num_classes()) {
  for (const auto& doc : docs) {
    const PredictionBreakdown b = model.predict(doc);
    for (std::size_t i = 0; i < b.num_sentences(); ++i) {
      const auto row = b.sentence_logits.row(i);
      sentence_logits_.emplace(doc.sentence_texts.at(i), std::vector<double>(row.begin(), row.end()));
    }
  }
}

std::vector<double> SurrogatePredictor::logits(const std::string& text) const {
  std::vector<double> total(num_classes_, 0.0);
  if (text.find_first_not_of(" \t\n\r\f\v") == std::string::npos) return total;
  const Document doc = make_document("", text);
  for (std::size_t i = 0; i < doc.num_sentences(); ++i) {
    const auto it = sentence_logits_.find(doc.sentence_text(i));
    if (it == sentence_logits_.end()) {
      throw Error(ErrorCode::MissingPrediction, "surrogate has no encoding for sentence '" +
                                                    std::string(doc.sentence_text(i)) + "'");
    }
    for (std::size_t c = 0; c < num_classes_; ++c) total[c] += it->second[c];
  }
  return total;
}

std::vector<std::vector<double>> SurrogatePredictor::predict(std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(softmax(logits(t)));
  return out;
}

}  // namespace protosure
