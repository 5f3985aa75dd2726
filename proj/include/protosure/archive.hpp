#pragma once

// Model archive (.psm):
//
//   "PSM1" | version=1 | manifest (u32 length + UTF-8 JSON) | matrix count |
//     count x ( name | rows | cols | rows*cols float32, row-major ) | crc32
//
// Same integer/float/string encoding and trailing CRC32 as the .pse bundles.
// Parameters are held as float32-representable doubles, so a save/load round
// trip is bit-exact.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "protosure/model.hpp"

namespace protosure {

std::vector<std::uint8_t> encode_model(const SurrogateModel& model);
SurrogateModel decode_model(std::span<const std::uint8_t> bytes);

void save_model(const SurrogateModel& model, const std::filesystem::path& path);
SurrogateModel load_model(const std::filesystem::path& path);

// Manifest only; used by `inspect`.
nlohmann::json model_manifest(const SurrogateModel& model);

}  // namespace protosure
