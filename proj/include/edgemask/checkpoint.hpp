#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "edgemask/training.hpp"

namespace edgemask {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat object with hyphenated keys ("lr-task", "gamma-knn", "head-dim", ...). Optional fields
/// are written as null when unset.
nlohmann::json config_to_json(const TrainConfig& cfg);

/// Sets one key. Throws ConfigError for an unknown key or a value of the wrong type.
void apply_config_entry(TrainConfig& cfg, std::string_view key, const nlohmann::json& value);

/// Starts from defaults and applies every key of a flat object.
TrainConfig config_from_json(const nlohmann::json& obj);

/// True when `key` names a TrainConfig field.
bool is_config_key(std::string_view key);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

struct Checkpoint {
  TrainedModel model;
  TrainConfig config;
};

/// "edgemask-checkpoint" version 1: config, lambda, every parameter tensor by name, both Adam
/// states and the serialized generators. Doubles are written in shortest round-trip form.
std::string checkpoint_to_text(const TrainedModel& model, const TrainConfig& cfg);
Checkpoint checkpoint_from_text(std::string_view text);

void save_checkpoint(const std::filesystem::path& file, const TrainedModel& model, const TrainConfig& cfg);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace edgemask
