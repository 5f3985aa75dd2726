#include "protosure/config.hpp"

#include <cmath>
#include <set>
#include <string>

#include "protosure/errors.hpp"

namespace protosure {

using nlohmann::json;

namespace {

void invalid(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, "'" + key + "' " + why);
}

template <class T>
void read_number(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || v.get<long long>() < 0) invalid(key, "must be a non-negative integer");
    out = static_cast<T>(v.get<unsigned long long>());
  } else {
    if (!v.is_number()) invalid(key, "must be a number");
    out = v.get<T>();
  }
}

void read_bool(const json& j, const char* key, bool& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_boolean()) invalid(key, "must be true or false");
  out = j.at(key).get<bool>();
}

}  // namespace

void TrainConfig::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) invalid("learning_rate", "must be finite and >= 0");
  if (batch_size < 1) invalid("batch_size", "must be >= 1");
  if (num_prototypes < 2) invalid("num_prototypes", "must be >= 2");
  if (!std::isfinite(lambda1) || lambda1 < 0.0) invalid("lambda1", "must be >= 0");
  if (!std::isfinite(lambda2) || lambda2 < 0.0) invalid("lambda2", "must be >= 0");
  if (!(eps > 0.0)) invalid("eps", "must be > 0");
  if (threads < 1) invalid("threads", "must be >= 1");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0)) invalid("adamw.beta1", "must lie in [0, 1)");
  if (!(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) invalid("adamw.beta2", "must lie in [0, 1)");
  if (!(adamw.eps > 0.0)) invalid("adamw.eps", "must be > 0");
  if (!(adamw.weight_decay >= 0.0)) invalid("adamw.weight_decay", "must be >= 0");
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"num_prototypes", c.num_prototypes},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"eps", c.eps},
              {"seed", c.seed},
              {"use_attributions", c.use_attributions},
              {"update_prototypes", c.update_prototypes},
              {"normalize_diversity", c.normalize_diversity},
              {"threads", c.threads},
              {"adamw",
               {{"beta1", c.adamw.beta1},
                {"beta2", c.adamw.beta2},
                {"eps", c.adamw.eps},
                {"weight_decay", c.adamw.weight_decay}}}};
}

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "learning_rate", "batch_size", "epochs", "num_prototypes", "lambda1", "lambda2", "eps", "seed",
      "use_attributions", "update_prototypes", "normalize_diversity", "threads", "adamw"};
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "training configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) invalid(key, "is not a recognized training key");
  }
  TrainConfig c;
  read_number(j, "learning_rate", c.learning_rate);
  read_number(j, "batch_size", c.batch_size);
  read_number(j, "epochs", c.epochs);
  read_number(j, "num_prototypes", c.num_prototypes);
  read_number(j, "lambda1", c.lambda1);
  read_number(j, "lambda2", c.lambda2);
  read_number(j, "eps", c.eps);
  read_number(j, "seed", c.seed);
  read_number(j, "threads", c.threads);
  read_bool(j, "use_attributions", c.use_attributions);
  read_bool(j, "update_prototypes", c.update_prototypes);
  read_bool(j, "normalize_diversity", c.normalize_diversity);
  if (j.contains("adamw")) {
    const json& a = j.at("adamw");
    if (!a.is_object()) invalid("adamw", "must be an object");
    for (const auto& [key, _] : a.items()) {
      if (key != "beta1" && key != "beta2" && key != "eps" && key != "weight_decay") {
        invalid("adamw." + key, "is not a recognized optimizer key");
      }
    }
    read_number(a, "beta1", c.adamw.beta1);
    read_number(a, "beta2", c.adamw.beta2);
    read_number(a, "eps", c.adamw.eps);
    read_number(a, "weight_decay", c.adamw.weight_decay);
  }
  c.validate();
  return c;
}

}  // namespace protosure
