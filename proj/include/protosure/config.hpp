#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

namespace protosure {

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWSettings&, const AdamWSettings&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::size_t num_prototypes = 20;
  double lambda1 = 0.1;  // prototype coverage
  double lambda2 = 0.1;  // prototype diversity
  double eps = 1e-9;     // attribution normalization guard
  std::uint64_t seed = 0;
  bool use_attributions = true;
  bool update_prototypes = true;
  // Normalize prototypes to unit length inside the diversity penalty.
  bool normalize_diversity = false;
  std::size_t threads = 1;
  AdamWSettings adamw;

  // Throws Error(InvalidConfig) naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& config);
// Rejects unknown keys; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace protosure
