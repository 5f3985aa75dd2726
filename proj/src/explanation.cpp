#include "protosure/explanation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "protosure/errors.hpp"

namespace protosure {

using nlohmann::json;

namespace {

std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

json to_json(const Explanation& e) {
  json sentences = json::array();
  for (const auto& s : e.sentences) {
    json top = json::array();
    for (const auto& m : s.top) {
      top.push_back({{"prototype", m.prototype},
                     {"similarity", m.similarity},
                     {"weight", m.weight},
                     {"contribution", m.contribution},
                     {"exemplar", m.exemplar},
                     {"exemplar_doc_id", m.exemplar_doc_id},
                     {"exemplar_sentence", m.exemplar_sentence}});
    }
    sentences.push_back(
        {{"index", s.index}, {"text", s.text}, {"logits", s.logits}, {"score", s.score}, {"top_prototypes", top}});
  }
  return json{{"doc_id", e.doc_id},
              {"predicted_class", e.predicted_class},
              {"class_scores", e.class_scores},
              {"probabilities", e.probabilities},
              {"sentence_importance", e.sentence_importance},
              {"prototype_totals", e.prototype_totals},
              {"sentences", sentences}};
}

std::string render_html(const Explanation& e) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Explanation " << html_escape(e.doc_id)
     << "</title>\n<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
        "td,th{border:1px solid #ccc;padding:4px 8px}.pos{color:#1a7f37}.neg{color:#cf222e}"
        ".ex{color:#555;font-style:italic}</style></head><body>\n";
  os << "<h1>Document " << html_escape(e.doc_id) << "</h1>\n";
  os << "<p>Predicted class: <b>" << e.predicted_class << "</b></p>\n<table><tr><th>class</th><th>score</th><th>probability</th></tr>\n";
  for (std::size_t c = 0; c < e.class_scores.size(); ++c) {
    os << "<tr><td>" << c << "</td><td>" << fmt(e.class_scores[c]) << "</td><td>" << fmt(100.0 * e.probabilities[c], 1)
       << "%</td></tr>\n";
  }
  os << "</table>\n<h2>Sentences</h2>\n";
  for (const auto& s : e.sentences) {
    os << "<div class=\"sentence\"><p><b>" << s.index + 1 << ".</b> " << html_escape(s.text)
       << " <span class=\"" << (s.score >= 0 ? "pos" : "neg") << "\">(" << fmt(s.score) << ")</span></p>\n<ul>\n";
    for (const auto& m : s.top) {
      os << "<li>prototype " << m.prototype << ": similarity " << fmt(m.similarity) << " &times; weight "
         << fmt(m.weight) << " = <span class=\"" << (m.contribution >= 0 ? "pos" : "neg") << "\">"
         << fmt(m.contribution) << "</span>";
      if (!m.exemplar.empty()) os << " <span class=\"ex\">e.g. &ldquo;" << html_escape(m.exemplar) << "&rdquo;</span>";
      os << "</li>\n";
    }
    os << "</ul></div>\n";
  }
  os << "<h2>Prototype activation totals</h2>\n<table><tr><th>prototype</th><th>total similarity</th></tr>\n";
  for (std::size_t k = 0; k < e.prototype_totals.size(); ++k) {
    os << "<tr><td>" << k << "</td><td>" << fmt(e.prototype_totals[k]) << "</td></tr>\n";
  }
  os << "</table>\n</body></html>\n";
  return os.str();
}

}  // namespace

std::vector<std::size_t> ranking_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

Explanation explain(const DocumentInput& doc, const SurrogateModel& model, std::size_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::IndexOutOfRange, "top_k must be at least 1");
  if (doc.sentences.empty()) throw Error(ErrorCode::MissingBundle, "document '" + doc.doc_id + "' has no bundle data");

  Explanation e;
  e.doc_id = doc.doc_id;
  e.breakdown = model.predict(doc);
  const PredictionBreakdown& b = e.breakdown;
  e.predicted_class = b.predicted_class;
  e.class_scores = b.logits;
  e.probabilities = softmax(b.logits);
  const std::size_t k = model.num_prototypes();
  const std::size_t cls = e.predicted_class;
  e.prototype_totals.assign(k, 0.0);

  double score_sum = 0.0;
  for (std::size_t i = 0; i < b.num_sentences(); ++i) {
    SentenceExplanation s;
    s.index = i;
    s.text = i < doc.sentence_texts.size() ? doc.sentence_texts[i] : std::string();
    const auto logits = b.sentence_logits.row(i);
    s.logits.assign(logits.begin(), logits.end());
    s.score = b.sentence_logits(i, cls);
    score_sum += s.score;

    std::vector<PrototypeMatch> matches;
    for (std::size_t p = 0; p < k; ++p) {
      e.prototype_totals[p] += b.activations(i, p);
      PrototypeMatch m;
      m.prototype = p;
      m.similarity = b.activations(i, p);
      m.weight = model.head.weights(cls, p);
      m.contribution = b.contribution(i, p, cls);
      if (p < model.prototypes.associations.size()) {
        const auto& a = model.prototypes.associations[p];
        m.exemplar = a.text;
        m.exemplar_doc_id = a.doc_id;
        m.exemplar_sentence = a.sentence_index;
      }
      matches.push_back(std::move(m));
    }
    std::stable_sort(matches.begin(), matches.end(), [](const PrototypeMatch& x, const PrototypeMatch& y) {
      return std::abs(x.contribution) > std::abs(y.contribution);
    });
    matches.resize(std::min(top_k, matches.size()));
    s.top = std::move(matches);
    e.sentences.push_back(std::move(s));
  }

  for (const auto& s : e.sentences) e.sentence_importance.push_back(score_sum != 0.0 ? s.score / score_sum : 0.0);
  return e;
}

SentenceRanking sentence_importance(const Explanation& explanation) {
  SentenceRanking r;
  for (const auto& s : explanation.sentences) r.scores.push_back(s.score);
  r.order = ranking_order(r.scores);
  return r;
}

std::string render_report(const Explanation& explanation, std::string_view format) {
  if (format == "json") return to_json(explanation).dump(2) + "\n";
  if (format == "html") return render_html(explanation);
  throw Error(ErrorCode::UnknownFormat, "unsupported report format '" + std::string(format) + "'");
}

}  // namespace protosure
