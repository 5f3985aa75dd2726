#include "protosure/data_io.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "protosure/errors.hpp"

namespace protosure {

using nlohmann::json;

namespace detail {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void check_crc(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::CorruptPayload, "missing checksum");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4), ErrorCode::CorruptPayload);
  if (tail.u32("checksum") != crc32(body)) throw Error(ErrorCode::CorruptPayload, "checksum mismatch");
}

}  // namespace detail

namespace {

using detail::ByteReader;
using detail::ByteWriter;

void require_finite(std::span<const float> values, const std::string& doc_id) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::CorruptPayload, "non-finite value in bundle '" + doc_id + "'");
  }
}

void check_header(ByteReader& in, std::string_view magic) {
  in.need(8, "header");
  const std::string_view got = in.raw(4, "magic");
  if (got != magic) {
    throw Error(ErrorCode::BadMagic, "expected magic '" + std::string(magic) + "', found '" + std::string(got) + "'");
  }
  const std::uint32_t version = in.u32("version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::VersionUnsupported, "format version " + std::to_string(version));
  }
}

// Walks the per-sentence records without allocating, checking every declared
// length against the bytes actually present. `floats_per_token` is d for
// embeddings and 1 for attributions.
void prescan_sentences(ByteReader in, std::uint32_t sentences, std::uint64_t floats_per_token) {
  for (std::uint32_t s = 0; s < sentences; ++s) {
    const std::uint32_t tokens = in.u32("token count");
    if (tokens == 0) throw Error(ErrorCode::ShapeMismatch, "sentence " + std::to_string(s) + " has no tokens");
    for (std::uint32_t t = 0; t < tokens; ++t) in.skip(in.u32("token length"), "token bytes");
    const std::uint64_t payload = static_cast<std::uint64_t>(tokens) * floats_per_token * 4;
    if (payload > in.remaining()) throw Error(ErrorCode::ShapeMismatch, "declared payload exceeds the file length");
    in.skip(static_cast<std::size_t>(payload), "payload");
  }
  if (in.remaining() != 4) {
    throw Error(ErrorCode::ShapeMismatch, "declared sizes leave " + std::to_string(in.remaining()) +
                                              " trailing bytes, expected a 4-byte checksum");
  }
}

std::vector<std::string> read_tokens(ByteReader& in, std::uint32_t count) {
  std::vector<std::string> tokens;
  tokens.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) tokens.emplace_back(in.str("token"));
  return tokens;
}

std::size_t parse_label(const json& value, std::size_t line) {
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw ParseError(line, "\"label\" must be a non-negative integer");
  }
  return static_cast<std::size_t>(value.get<long long>());
}

}  // namespace

Matrix EmbeddingBundle::matrix(std::size_t sentence) const {
  const SentenceEmbeddings& s = sentences.at(sentence);
  Matrix m(s.tokens.size(), dim);
  for (std::size_t i = 0; i < s.values.size(); ++i) m.data()[i] = static_cast<double>(s.values[i]);
  return m;
}

void EmbeddingBundle::validate() const {
  if (dim == 0) throw Error(ErrorCode::ShapeMismatch, "bundle '" + doc_id + "' has dimension 0");
  if (sentences.empty()) throw Error(ErrorCode::ShapeMismatch, "bundle '" + doc_id + "' has no sentences");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (s.tokens.empty() || s.values.size() != s.tokens.size() * dim) {
      throw Error(ErrorCode::ShapeMismatch, "bundle '" + doc_id + "' sentence " + std::to_string(i) +
                                                ": " + std::to_string(s.tokens.size()) + " tokens but " +
                                                std::to_string(s.values.size()) + " values at d=" +
                                                std::to_string(dim));
    }
    require_finite(s.values, doc_id);
  }
}

void AttributionBundle::validate() const {
  if (sentences.empty()) throw Error(ErrorCode::ShapeMismatch, "attributions '" + doc_id + "' have no sentences");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (s.tokens.empty() || s.scores.size() != s.tokens.size()) {
      throw Error(ErrorCode::ShapeMismatch, "attributions '" + doc_id + "' sentence " + std::to_string(i) +
                                                " has mismatched token/score counts");
    }
    require_finite(s.scores, doc_id);
  }
}

void AttributionBundle::validate_against(const EmbeddingBundle& embeddings) const {
  if (sentences.size() != embeddings.sentences.size()) {
    throw Error(ErrorCode::ShapeMismatch, "attributions '" + doc_id + "' have " + std::to_string(sentences.size()) +
                                              " sentences, embeddings have " +
                                              std::to_string(embeddings.sentences.size()));
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].scores.size() != embeddings.sentences[i].tokens.size()) {
      throw Error(ErrorCode::ShapeMismatch, "attributions '" + doc_id + "' sentence " + std::to_string(i) +
                                                " length differs from its embedding bundle");
    }
  }
}

std::vector<Document> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset " + path.string());
  std::vector<Document> docs;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    if (!obj.contains("id") || !obj["id"].is_string()) throw ParseError(line_no, "missing string field \"id\"");
    if (!obj.contains("text") || !obj["text"].is_string()) throw ParseError(line_no, "missing string field \"text\"");
    std::optional<std::size_t> label;
    if (obj.contains("label") && !obj["label"].is_null()) label = parse_label(obj["label"], line_no);
    std::string id = obj["id"].get<std::string>();
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, id);
    try {
      docs.push_back(make_document(std::move(id), obj["text"].get<std::string>(), label));
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return docs;
}

void write_dataset(const std::filesystem::path& path, std::span<const Document> docs) {
  std::string out;
  for (const Document& d : docs) {
    json obj{{"id", d.id}, {"text", d.text}};
    if (d.label) obj["label"] = *d.label;
    out += obj.dump() + "\n";
  }
  write_text_file(path, out);
}

std::map<std::string, PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open predictions " + path.string());
  std::map<std::string, PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string()) {
      throw ParseError(line_no, "missing string field \"id\"");
    }
    if (!obj.contains("label")) throw ParseError(line_no, "missing field \"label\"");
    PredictionRecord rec;
    rec.label = parse_label(obj["label"], line_no);
    if (obj.contains("probs") && !obj["probs"].is_null()) {
      if (!obj["probs"].is_array()) throw ParseError(line_no, "\"probs\" must be an array");
      for (const auto& p : obj["probs"]) {
        if (!p.is_number()) throw ParseError(line_no, "\"probs\" entries must be numbers");
        rec.probs.push_back(p.get<double>());
      }
      if (rec.label >= rec.probs.size()) throw ParseError(line_no, "\"label\" outside \"probs\"");
    }
    const std::string id = obj["id"].get<std::string>();
    if (!out.emplace(id, std::move(rec)).second) throw Error(ErrorCode::DuplicateId, id);
  }
  return out;
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, PredictionRecord>>& records) {
  std::string out;
  for (const auto& [id, rec] : records) {
    json obj{{"id", id}, {"label", rec.label}};
    if (!rec.probs.empty()) obj["probs"] = rec.probs;
    out += obj.dump() + "\n";
  }
  write_text_file(path, out);
}

std::vector<std::uint8_t> encode_bundle(const EmbeddingBundle& bundle) {
  bundle.validate();
  ByteWriter out;
  out.raw("PSE1");
  out.u32(kFormatVersion);
  out.u32(bundle.dim);
  out.u32(static_cast<std::uint32_t>(bundle.sentences.size()));
  out.str(bundle.doc_id);
  for (const auto& s : bundle.sentences) {
    out.u32(static_cast<std::uint32_t>(s.tokens.size()));
    for (const auto& t : s.tokens) out.str(t);
    for (float v : s.values) out.f32(v);
  }
  out.finish_with_crc();
  return std::move(out.bytes());
}

EmbeddingBundle decode_bundle(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, ErrorCode::ShapeMismatch);
  check_header(in, "PSE1");
  EmbeddingBundle bundle;
  bundle.dim = in.u32("dimension");
  const std::uint32_t sentences = in.u32("sentence count");
  if (bundle.dim == 0) throw Error(ErrorCode::ShapeMismatch, "dimension 0");
  if (sentences == 0) throw Error(ErrorCode::ShapeMismatch, "bundle declares no sentences");
  bundle.doc_id = std::string(in.str("doc id"));
  prescan_sentences(in, sentences, bundle.dim);
  detail::check_crc(bytes);

  bundle.sentences.resize(sentences);
  for (auto& s : bundle.sentences) {
    s.tokens = read_tokens(in, in.u32("token count"));
    s.values.resize(s.tokens.size() * bundle.dim);
    for (float& v : s.values) v = in.f32("payload");
  }
  bundle.validate();
  return bundle;
}

std::vector<std::uint8_t> encode_attributions(const AttributionBundle& bundle) {
  bundle.validate();
  ByteWriter out;
  out.raw("PSA1");
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(bundle.sentences.size()));
  out.str(bundle.doc_id);
  out.str(bundle.method);
  for (const auto& s : bundle.sentences) {
    out.u32(static_cast<std::uint32_t>(s.tokens.size()));
    for (const auto& t : s.tokens) out.str(t);
    for (float v : s.scores) out.f32(v);
  }
  out.finish_with_crc();
  return std::move(out.bytes());
}

AttributionBundle decode_attributions(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, ErrorCode::ShapeMismatch);
  check_header(in, "PSA1");
  AttributionBundle bundle;
  const std::uint32_t sentences = in.u32("sentence count");
  if (sentences == 0) throw Error(ErrorCode::ShapeMismatch, "attribution file declares no sentences");
  bundle.doc_id = std::string(in.str("doc id"));
  bundle.method = std::string(in.str("method"));
  prescan_sentences(in, sentences, 1);
  detail::check_crc(bytes);

  bundle.sentences.resize(sentences);
  for (auto& s : bundle.sentences) {
    s.tokens = read_tokens(in, in.u32("token count"));
    s.scores.resize(s.tokens.size());
    for (float& v : s.scores) v = in.f32("payload");
  }
  bundle.validate();
  return bundle;
}

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path) {
  write_file_bytes(path, encode_bundle(bundle));
}

EmbeddingBundle read_bundle(const std::filesystem::path& path) { return decode_bundle(read_file_bytes(path)); }

void write_attributions(const AttributionBundle& bundle, const std::filesystem::path& path) {
  write_file_bytes(path, encode_attributions(bundle));
}

AttributionBundle read_attributions(const std::filesystem::path& path) {
  return decode_attributions(read_file_bytes(path));
}

std::filesystem::path bundle_path(const std::filesystem::path& dir, const std::string& doc_id) {
  return dir / (doc_id + ".pse");
}

std::filesystem::path attribution_path(const std::filesystem::path& dir, const std::string& doc_id) {
  return dir / (doc_id + ".psa");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace protosure
