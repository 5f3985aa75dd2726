#include "protosure/archive.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "protosure/errors.hpp"

namespace protosure {

using nlohmann::json;
using detail::ByteReader;
using detail::ByteWriter;

namespace {

struct NamedMatrix {
  const char* name;
  const Matrix* matrix;
};

void write_matrix(ByteWriter& out, const char* name, const Matrix& m) {
  out.str(name);
  out.u32(static_cast<std::uint32_t>(m.rows()));
  out.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) {
    const float f = static_cast<float>(v);
    if (static_cast<double>(f) != v) {
      throw Error(ErrorCode::CorruptPayload, std::string("parameter '") + name + "' is not float32-representable");
    }
    out.f32(f);
  }
}

Matrix read_matrix(ByteReader& in, std::string_view expected_name, std::size_t rows, std::size_t cols) {
  const std::string_view name = in.str("matrix name");
  if (name != expected_name) {
    throw Error(ErrorCode::CorruptPayload, "expected matrix '" + std::string(expected_name) + "', found '" +
                                               std::string(name) + "'");
  }
  const std::uint32_t r = in.u32("rows");
  const std::uint32_t c = in.u32("cols");
  if (r != rows || c != cols) {
    throw Error(ErrorCode::CorruptPayload, "matrix '" + std::string(name) + "' has shape " + std::to_string(r) + "x" +
                                               std::to_string(c) + ", manifest says " + std::to_string(rows) + "x" +
                                               std::to_string(cols));
  }
  in.need(static_cast<std::size_t>(r) * c * 4, "matrix payload");
  Matrix m(r, c);
  for (double& v : m.values()) {
    const float f = in.f32("matrix payload");
    if (!std::isfinite(f)) throw Error(ErrorCode::CorruptPayload, "non-finite parameter in '" + std::string(name) + "'");
    v = static_cast<double>(f);
  }
  return m;
}

}  // namespace

json model_manifest(const SurrogateModel& model) {
  json assoc = json::array();
  for (const auto& a : model.prototypes.associations) {
    assoc.push_back({{"doc_id", a.doc_id},
                     {"sentence_index", a.sentence_index},
                     {"similarity", a.similarity},
                     {"text", a.text}});
  }
  return json{{"format", "protosure-model"},
              {"version", kFormatVersion},
              {"dim", model.dim()},
              {"num_classes", model.num_classes()},
              {"num_prototypes", model.num_prototypes()},
              {"prototypes_trainable", model.prototypes.trainable},
              {"config", to_json(model.config)},
              {"associations", assoc}};
}

std::vector<std::uint8_t> encode_model(const SurrogateModel& model) {
  ByteWriter out;
  out.raw("PSM1");
  out.u32(kFormatVersion);
  out.str(model_manifest(model).dump());
  const NamedMatrix matrices[] = {{"attention.wq", &model.attention.wq},
                                  {"attention.wk", &model.attention.wk},
                                  {"attention.wv", &model.attention.wv},
                                  {"prototypes", &model.prototypes.vectors},
                                  {"head", &model.head.weights}};
  out.u32(static_cast<std::uint32_t>(std::size(matrices)));
  for (const auto& m : matrices) write_matrix(out, m.name, *m.matrix);
  out.finish_with_crc();
  return std::move(out.bytes());
}

SurrogateModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, ErrorCode::CorruptPayload);
  in.need(8, "header");
  const std::string_view magic = in.raw(4, "magic");
  if (magic != "PSM1") throw Error(ErrorCode::BadMagic, "not a model archive");
  const std::uint32_t version = in.u32("version");
  if (version != kFormatVersion) throw Error(ErrorCode::VersionUnsupported, "archive version " + std::to_string(version));
  detail::check_crc(bytes);

  json manifest;
  try {
    manifest = json::parse(in.str("manifest"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptPayload, std::string("manifest: ") + e.what());
  }

  SurrogateModel model;
  std::size_t d = 0, c = 0, k = 0;
  try {
    d = manifest.at("dim").get<std::size_t>();
    c = manifest.at("num_classes").get<std::size_t>();
    k = manifest.at("num_prototypes").get<std::size_t>();
    model.prototypes.trainable = manifest.at("prototypes_trainable").get<bool>();
    model.config = train_config_from_json(manifest.at("config"));
    for (const auto& a : manifest.at("associations")) {
      model.prototypes.associations.push_back({a.at("doc_id").get<std::string>(),
                                               a.at("sentence_index").get<std::size_t>(),
                                               a.at("similarity").get<double>(), a.at("text").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptPayload, std::string("manifest: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptPayload, std::string("manifest: ") + e.what());
  }

  if (in.u32("matrix count") != 5) throw Error(ErrorCode::CorruptPayload, "unexpected matrix count");
  model.attention.wq = read_matrix(in, "attention.wq", d, d);
  model.attention.wk = read_matrix(in, "attention.wk", d, d);
  model.attention.wv = read_matrix(in, "attention.wv", d, d);
  model.prototypes.vectors = read_matrix(in, "prototypes", k, d);
  model.head.weights = read_matrix(in, "head", c, k);
  if (in.remaining() != 4) throw Error(ErrorCode::CorruptPayload, "trailing bytes after the last matrix");
  return model;
}

void save_model(const SurrogateModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(model));
}

SurrogateModel load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

}  // namespace protosure
