#include "protosure/model.hpp"

#include "protosure/errors.hpp"

namespace protosure {

DocumentInput make_document_input(const Document& doc, const EmbeddingBundle& embeddings,
                                  const AttributionBundle* attributions) {
  if (embeddings.sentences.size() != doc.num_sentences()) {
    throw Error(ErrorCode::ShapeMismatch, "document '" + doc.id + "' has " + std::to_string(doc.num_sentences()) +
                                              " sentences but its bundle has " +
                                              std::to_string(embeddings.sentences.size()));
  }
  if (attributions) attributions->validate_against(embeddings);

  DocumentInput input;
  input.doc_id = doc.id;
  input.label = doc.label;
  for (std::size_t i = 0; i < doc.num_sentences(); ++i) {
    const auto& sent = embeddings.sentences[i];
    // Bundle tokens take precedence over local tokenization; this only checks
    // that the bundle is self-consistent.
    tokenize(doc.sentence_text(i), TokenizerScheme::WhitespacePunct, sent.tokens,
             sent.values.size() / embeddings.dim);
    input.sentence_texts.emplace_back(doc.sentence_text(i));
    SentenceInput s{embeddings.matrix(i), {}};
    if (attributions) {
      const auto& scores = attributions->sentences[i].scores;
      s.attributions.assign(scores.begin(), scores.end());
    }
    input.sentences.push_back(std::move(s));
  }
  return input;
}

std::vector<DocumentInput> load_document_inputs(std::span<const Document> docs,
                                                const std::filesystem::path& bundle_dir,
                                                const std::filesystem::path& attribution_dir) {
  std::string missing;
  for (const Document& doc : docs) {
    const bool has_bundle = std::filesystem::exists(bundle_path(bundle_dir, doc.id));
    const bool has_attr = attribution_dir.empty() || std::filesystem::exists(attribution_path(attribution_dir, doc.id));
    if (!has_bundle || !has_attr) missing += (missing.empty() ? "" : ", ") + doc.id;
  }
  if (!missing.empty()) throw Error(ErrorCode::MissingBundle, "no bundle for document(s): " + missing);

  std::vector<DocumentInput> inputs;
  inputs.reserve(docs.size());
  for (const Document& doc : docs) {
    const EmbeddingBundle emb = read_bundle(bundle_path(bundle_dir, doc.id));
    if (attribution_dir.empty()) {
      inputs.push_back(make_document_input(doc, emb));
    } else {
      const AttributionBundle attr = read_attributions(attribution_path(attribution_dir, doc.id));
      inputs.push_back(make_document_input(doc, emb, &attr));
    }
  }
  return inputs;
}

std::vector<double> SurrogateModel::attribution_bias(const SentenceInput& sentence) const {
  if (!config.use_attributions || sentence.attributions.empty()) return {};
  return normalize_attributions(std::span<const double>(sentence.attributions), config.eps);
}

Matrix SurrogateModel::encode(const DocumentInput& doc) const {
  if (doc.sentences.empty()) throw Error(ErrorCode::MissingBundle, "document '" + doc.doc_id + "' has no sentence inputs");
  Matrix h(doc.sentences.size(), dim());
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    const auto& s = doc.sentences[i];
    const auto enc = encode_sentence(s.embeddings, attribution_bias(s), attention);
    std::copy(enc.embedding.begin(), enc.embedding.end(), h.row(i).begin());
  }
  return h;
}

PredictionBreakdown SurrogateModel::predict(const DocumentInput& doc) const {
  return predict_document(encode(doc), prototypes.vectors, head);
}

std::vector<double> subset_probabilities(const PredictionBreakdown& breakdown, std::span<const std::size_t> kept) {
  std::vector<double> logits(breakdown.logits.size(), 0.0);
  for (std::size_t i : kept) {
    for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += breakdown.sentence_logits(i, c);
  }
  return softmax(logits);
}

}  // namespace protosure
