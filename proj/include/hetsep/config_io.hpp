#pragma once

#include <nlohmann/json.hpp>

#include "hetsep/model.hpp"

namespace hetsep {

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected with ConfigError.
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace hetsep
