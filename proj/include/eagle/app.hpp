#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eagle/attribution.hpp"
#include "eagle/cohort.hpp"
#include "eagle/model.hpp"
#include "eagle/report.hpp"
#include "eagle/training.hpp"

namespace eagle::app {

struct Preset {
  std::string name;
  std::string description;
  ModelConfig model;
  TrainConfig train;
};

// gbm, ipmn, nsclc, custom.
const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);
std::string preset_table();

struct RunConfig {
  std::string preset = "gbm";
  ModelConfig model;
  TrainConfig train;
  std::size_t k = 5;
};

// Starts from the named preset and applies the optional JSON overrides
// {"model": {...}, "train": {...}, "k": n}. Unknown keys are rejected.
RunConfig resolve_config(const std::string& preset, const std::optional<std::filesystem::path>& config_path,
                         std::uint64_t seed, std::optional<std::size_t> k);
std::string run_config_json(const RunConfig& cfg);

struct SynthResult {
  std::filesystem::path manifest;
  double ground_truth_cindex = 0.0;
};

// Writes the cohort files plus ground_truth.csv (id, true_risk).
SynthResult run_synth(const SynthConfig& cfg, const std::filesystem::path& out);

struct TrainResult {
  CrossValidation cv;
  SurvivalReport report;
  double reduction_ratio = 0.0;
};

TrainResult run_train(const std::filesystem::path& manifest, const RunConfig& cfg, const std::filesystem::path& out,
                      bool parallel, const WarningSink& warn = {});

// Re-scores a finished run directory out of fold and rewrites the report.
SurvivalReport run_evaluate(const std::filesystem::path& manifest, const std::filesystem::path& run_dir);

std::vector<CohortAttribution> run_attribute(const std::filesystem::path& manifest, const std::filesystem::path& run_dir,
                                             const std::vector<AttributionMethod>& methods,
                                             std::size_t steps = kDefaultIgSteps);

std::vector<AttributionMethod> parse_methods(const std::string& list);  // "all" or comma list

}  // namespace eagle::app
