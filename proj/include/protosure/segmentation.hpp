#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace protosure {

struct SentenceSpan {
  std::size_t start = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
  std::vector<std::string> tokens;

  friend bool operator==(const SentenceSpan&, const SentenceSpan&) = default;
};

struct Document {
  std::string id;
  std::string text;
  std::vector<SentenceSpan> sentences;
  // Target model's prediction for this document, when known.
  std::optional<std::size_t> label;

  std::size_t num_sentences() const noexcept { return sentences.size(); }
  std::string_view sentence_text(std::size_t i) const;
};

enum class TokenizerScheme { WhitespacePunct };

// A token with its byte range inside the text it was cut from.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;
};

// Splits on runs of '.', '!' and '?'; trailing text without a delimiter forms
// the last sentence. Spans are trimmed of surrounding whitespace and carry the
// default tokenization. Throws EmptyInput when the text is all whitespace.
std::vector<SentenceSpan> split_sentences(std::string_view text);

// Whitespace + punctuation split: runs of non-space, non-punctuation bytes form
// a word; every ASCII punctuation byte is its own token. Bytes >= 0x80 count as
// word characters so UTF-8 sequences stay intact.
std::vector<TokenSpan> tokenize_spans(std::string_view text);

std::vector<std::string> tokenize(std::string_view sentence,
                                  TokenizerScheme scheme = TokenizerScheme::WhitespacePunct);

// Bundle precedence: when a bundle supplies tokens for this sentence they are
// returned verbatim, provided the bundle's token list agrees with its declared
// row count. Empty sentences are rejected with TokenizerMismatch.
std::vector<std::string> tokenize(std::string_view sentence, TokenizerScheme scheme,
                                  std::span<const std::string> bundle_tokens,
                                  std::size_t bundle_rows);

// Builds a Document, dropping (with a warning on stderr) sentences that
// tokenize to nothing.
Document make_document(std::string id, std::string text, std::optional<std::size_t> label = std::nullopt);

}  // namespace protosure
