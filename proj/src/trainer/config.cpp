#include "slicevlp/trainer/config.hpp"

#include <cmath>
#include <numbers>

#include "slicevlp/error.hpp"

namespace slicevlp::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2, got " + std::to_string(stage));
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(std::isfinite(lr0) && std::isfinite(lr_min) && lr0 > lr_min && lr_min >= 0.0)) {
    throw ConfigError("need lr0 > lr_min >= 0");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("d_model must be a positive multiple of heads");
  }
  if (d_text == 0 || d_hidden == 0 || patch == 0 || vocab == 0 || max_slices == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (image_size != 0 && image_size % patch != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not a multiple of patch " +
                      std::to_string(patch));
  }
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

double cosine_lr(std::size_t t, const TrainConfig& cfg) {
  if (cfg.epochs == 0) return cfg.lr0;
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.epochs);
  return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"stage", c.stage},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr0", c.lr0},
           {"lr_min", c.lr_min},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"dropout_rate", c.dropout_rate},
           {"tau", c.tau},
           {"symmetric", c.symmetric},
           {"heads", c.heads},
           {"d_model", c.d_model},
           {"d_text", c.d_text},
           {"d_hidden", c.d_hidden},
           {"patch", c.patch},
           {"vocab", c.vocab},
           {"max_slices", c.max_slices},
           {"image_size", c.image_size},
           {"patience", c.patience},
           {"seed", c.seed},
           {"frozen", c.frozen}};
}

namespace {

template <typename T>
void read_field(const json& j, const std::string& key, T& out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError("");
    }
    out = j.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.dump());
  }
}

}  // namespace

void apply_json(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "stage") read_field(value, key, c.stage);
    else if (key == "epochs") read_field(value, key, c.epochs);
    else if (key == "batch_size") read_field(value, key, c.batch_size);
    else if (key == "lr0") read_field(value, key, c.lr0);
    else if (key == "lr_min") read_field(value, key, c.lr_min);
    else if (key == "weight_decay") read_field(value, key, c.weight_decay);
    else if (key == "beta1") read_field(value, key, c.beta1);
    else if (key == "beta2") read_field(value, key, c.beta2);
    else if (key == "adam_eps") read_field(value, key, c.adam_eps);
    else if (key == "dropout_rate") read_field(value, key, c.dropout_rate);
    else if (key == "tau") read_field(value, key, c.tau);
    else if (key == "symmetric") read_field(value, key, c.symmetric);
    else if (key == "heads") read_field(value, key, c.heads);
    else if (key == "d_model") read_field(value, key, c.d_model);
    else if (key == "d_text") read_field(value, key, c.d_text);
    else if (key == "d_hidden") read_field(value, key, c.d_hidden);
    else if (key == "patch") read_field(value, key, c.patch);
    else if (key == "vocab") read_field(value, key, c.vocab);
    else if (key == "max_slices") read_field(value, key, c.max_slices);
    else if (key == "image_size") read_field(value, key, c.image_size);
    else if (key == "patience") read_field(value, key, c.patience);
    else if (key == "seed") read_field(value, key, c.seed);
    else if (key == "frozen") {
      if (!value.is_array()) throw ConfigError("config key 'frozen' must be a list of strings");
      std::vector<std::string> prefixes;
      for (const auto& v : value) {
        if (!v.is_string()) throw ConfigError("config key 'frozen' must be a list of strings");
        prefixes.push_back(v.get<std::string>());
      }
      c.frozen = std::move(prefixes);
    } else {
      throw ConfigError("unknown training config key '" + key + "'");
    }
  }
}

}  // namespace slicevlp::train
