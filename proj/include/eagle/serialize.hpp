#pragma once

#include "eagle/cohort.hpp"
#include "eagle/model.hpp"
#include "json.hpp"

namespace eagle {

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json stats_to_json(const PreprocessStats& s);
PreprocessStats stats_from_json(const nlohmann::json& j);

}  // namespace eagle
