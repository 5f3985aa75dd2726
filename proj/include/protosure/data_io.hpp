#pragma once

// On-disk formats.
//
//   dataset      .jsonl  one {"id", "text", "label"?} object per line
//   predictions  .jsonl  one {"id", "label", "probs"?} object per line
//   embeddings   .pse    "PSE1" binary bundle, one document per file
//   attributions .psa    "PSA1" binary bundle, one document per file
//
// Bundle layout (all integers u32 little-endian, floats IEEE-754 binary32
// little-endian, strings u32 byte length + UTF-8 bytes):
//
//   "PSE1" | version=1 | d | M | doc_id |
//     M x ( l_i | l_i token strings | l_i*d floats, row-major ) | crc32
//
//   "PSA1" | version=1 | M | doc_id | method |
//     M x ( l_i | l_i token strings | l_i floats ) | crc32
//
// The CRC32 (zlib polynomial) covers every byte before it. Directories of
// bundles name each file <doc_id>.pse / <doc_id>.psa.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protosure/linalg.hpp"
#include "protosure/segmentation.hpp"

namespace protosure {

inline constexpr std::uint32_t kFormatVersion = 1;

struct SentenceEmbeddings {
  std::vector<std::string> tokens;
  std::vector<float> values;  // tokens.size() x dim, row-major

  friend bool operator==(const SentenceEmbeddings&, const SentenceEmbeddings&) = default;
};

struct EmbeddingBundle {
  std::string doc_id;
  std::uint32_t dim = 0;
  std::vector<SentenceEmbeddings> sentences;

  Matrix matrix(std::size_t sentence) const;
  // Throws ShapeMismatch / CorruptPayload when an invariant is broken.
  void validate() const;

  friend bool operator==(const EmbeddingBundle&, const EmbeddingBundle&) = default;
};

struct SentenceAttributions {
  std::vector<std::string> tokens;
  std::vector<float> scores;

  friend bool operator==(const SentenceAttributions&, const SentenceAttributions&) = default;
};

struct AttributionBundle {
  std::string doc_id;
  std::string method;
  std::vector<SentenceAttributions> sentences;

  void validate() const;
  // Checks sentence and token counts against an embedding bundle.
  void validate_against(const EmbeddingBundle& embeddings) const;

  friend bool operator==(const AttributionBundle&, const AttributionBundle&) = default;
};

struct PredictionRecord {
  std::size_t label = 0;
  std::vector<double> probs;  // empty when the file only carries labels
};

std::vector<Document> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const Document> docs);

std::map<std::string, PredictionRecord> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, PredictionRecord>>& records);

std::vector<std::uint8_t> encode_bundle(const EmbeddingBundle& bundle);
EmbeddingBundle decode_bundle(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_attributions(const AttributionBundle& bundle);
AttributionBundle decode_attributions(std::span<const std::uint8_t> bytes);

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path);
EmbeddingBundle read_bundle(const std::filesystem::path& path);
void write_attributions(const AttributionBundle& bundle, const std::filesystem::path& path);
AttributionBundle read_attributions(const std::filesystem::path& path);

std::filesystem::path bundle_path(const std::filesystem::path& dir, const std::string& doc_id);
std::filesystem::path attribution_path(const std::filesystem::path& dir, const std::string& doc_id);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace protosure
