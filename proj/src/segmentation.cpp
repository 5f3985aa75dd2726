#include "protosure/segmentation.hpp"

#include <iostream>

#include "protosure/errors.hpp"

namespace protosure {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_delimiter(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_punct(unsigned char c) {
  return c < 0x80 && ((c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                      (c >= 0x7B && c <= 0x7E));
}

}  // namespace

std::string_view Document::sentence_text(std::size_t i) const {
  const SentenceSpan& s = sentences.at(i);
  return std::string_view(text).substr(s.start, s.end - s.start);
}

std::vector<SentenceSpan> split_sentences(std::string_view text) {
  std::vector<SentenceSpan> spans;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i == n) break;
    const std::size_t start = i;
    while (i < n && !is_delimiter(text[i])) ++i;
    while (i < n && is_delimiter(text[i])) ++i;
    std::size_t end = i;
    while (end > start && is_space(static_cast<unsigned char>(text[end - 1]))) --end;
    SentenceSpan span{start, end, {}};
    span.tokens = tokenize(text.substr(start, end - start));
    spans.push_back(std::move(span));
  }
  if (spans.empty()) throw Error(ErrorCode::EmptyInput, "text contains no non-whitespace characters");
  return spans;
}

std::vector<TokenSpan> tokenize_spans(std::string_view text) {
  std::vector<TokenSpan> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
    } else if (is_punct(c)) {
      tokens.push_back({i, i + 1, std::string(1, text[i])});
      ++i;
    } else {
      const std::size_t start = i;
      while (i < text.size()) {
        const auto d = static_cast<unsigned char>(text[i]);
        if (is_space(d) || is_punct(d)) break;
        ++i;
      }
      tokens.push_back({start, i, std::string(text.substr(start, i - start))});
    }
  }
  return tokens;
}

std::vector<std::string> tokenize(std::string_view sentence, TokenizerScheme) {
  std::vector<std::string> out;
  for (auto& t : tokenize_spans(sentence)) out.push_back(std::move(t.text));
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence, TokenizerScheme scheme,
                                  std::span<const std::string> bundle_tokens, std::size_t bundle_rows) {
  if (sentence.find_first_not_of(" \t\n\r\f\v") == std::string_view::npos) {
    throw Error(ErrorCode::TokenizerMismatch, "cannot tokenize an empty sentence");
  }
  if (bundle_tokens.empty() && bundle_rows == 0) return tokenize(sentence, scheme);
  if (bundle_tokens.size() != bundle_rows) {
    throw Error(ErrorCode::TokenizerMismatch, "bundle lists " + std::to_string(bundle_tokens.size()) +
                                                  " tokens but stores " + std::to_string(bundle_rows) +
                                                  " embedding rows");
  }
  return {bundle_tokens.begin(), bundle_tokens.end()};
}

Document make_document(std::string id, std::string text, std::optional<std::size_t> label) {
  Document doc{std::move(id), std::move(text), {}, label};
  for (auto& span : split_sentences(doc.text)) {
    if (span.tokens.empty()) {
      std::cerr << "warning: document '" << doc.id << "': dropping sentence at byte " << span.start
                << " with no tokens\n";
      continue;
    }
    doc.sentences.push_back(std::move(span));
  }
  return doc;
}

}  // namespace protosure
