#include <algorithm>
#include <cmath>
#include <cstdio>

#include "eagle/cohort.hpp"
#include "eagle/error.hpp"

namespace eagle {

void validate(const SynthConfig& cfg) {
  if (cfg.n < 20) fail(ErrorCode::InvalidConfig, "synth n must be at least 20, got " + std::to_string(cfg.n));
  if (cfg.imaging_dim == 0 || cfg.text_dim == 0 || cfg.clinical_dim == 0)
    fail(ErrorCode::InvalidConfig, "synth modality dims must be positive");
  if (!(cfg.signal_strength >= 0.0)) fail(ErrorCode::InvalidConfig, "synth signal_strength must be >= 0");
  if (!(cfg.censor_max > 0.0)) fail(ErrorCode::InvalidConfig, "synth censor_max must be > 0");
  if (!(cfg.noise_scale > 0.0)) fail(ErrorCode::InvalidConfig, "synth noise_scale must be > 0");
  if (!(cfg.missing_rate >= 0.0 && cfg.missing_rate < 1.0))
    fail(ErrorCode::InvalidConfig, "synth missing_rate must be in [0, 1)");
  if (cfg.categorical_levels == 1) fail(ErrorCode::InvalidConfig, "synth categorical_levels must be 0 or >= 2");
}

namespace {

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
  std::vector<double> d(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : d) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : d) v /= norm;
  return d;
}

std::vector<double> draw_features(Rng& rng, const std::vector<double>& dir, double z, double signal, double noise) {
  std::vector<double> x(dir.size());
  for (std::size_t j = 0; j < dir.size(); ++j) x[j] = dir[j] * z * signal + rng.normal() * noise;
  return x;
}

}  // namespace

SynthCohort synth_cohort(const SynthConfig& cfg) {
  validate(cfg);
  const Rng root = Rng(cfg.seed).derive(stream::kSynth);
  Rng dir_rng = root.derive(stream::kSynth, 0);
  Rng patient_rng = root.derive(stream::kSynth, 1);

  const std::array<std::size_t, kNumModalities> dims{cfg.imaging_dim, cfg.text_dim, cfg.clinical_dim};
  std::array<std::vector<double>, kNumModalities> dirs;
  std::array<double, kNumModalities> strength{};
  for (Modality m : kModalities) {
    const auto i = static_cast<std::size_t>(m);
    dirs[i] = unit_direction(dir_rng, dims[i]);
    const bool carries = std::find(cfg.signal_modalities.begin(), cfg.signal_modalities.end(), m) !=
                         cfg.signal_modalities.end();
    strength[i] = carries ? cfg.signal_strength : 0.0;
  }

  SynthCohort out;
  Manifest& man = out.cohort.manifest;
  man.name = cfg.name;
  for (std::size_t j = 0; j < cfg.clinical_dim; ++j) man.numeric.push_back("clin_" + std::to_string(j));
  if (cfg.categorical_levels > 0) man.categorical.push_back("site");
  man.clinical_file = "clinical.csv";
  man.modalities = {{"imaging", cfg.imaging_dim, {"imaging.csv"}}, {"text", cfg.text_dim, {"text.csv"}}};
  man.outcomes_file = "outcomes.csv";

  const int width = static_cast<int>(std::to_string(cfg.n - 1).size());
  for (std::size_t p = 0; p < cfg.n; ++p) {
    const double z = patient_rng.normal();
    PatientRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "P%0*zu", width, p);
    r.id = id;
    r.imaging = draw_features(patient_rng, dirs[0], z, strength[0], cfg.noise_scale);
    r.text = draw_features(patient_rng, dirs[1], z, strength[1], cfg.noise_scale);
    const auto clin = draw_features(patient_rng, dirs[2], z, strength[2], cfg.noise_scale);
    for (double v : clin) {
      const bool missing = patient_rng.uniform() < cfg.missing_rate;
      r.clinical_numeric.emplace_back(missing ? std::nullopt : std::optional<double>(v));
    }
    if (cfg.categorical_levels > 0) {
      const auto level = patient_rng.below(cfg.categorical_levels);
      const bool missing = patient_rng.uniform() < cfg.missing_rate;
      r.clinical_categorical.emplace_back(missing ? std::nullopt
                                                  : std::optional<std::string>("site_" + std::to_string(level)));
    }
    // Log-hazard is signal_strength * z, so the null-signal cohort has
    // outcomes independent of z as well as uninformative features.
    const double rate = std::exp(cfg.signal_strength * z);
    const double event_time = -std::log(1.0 - patient_rng.uniform()) / rate;
    const double censor_time = patient_rng.uniform() * cfg.censor_max;
    r.event = event_time <= censor_time ? 1 : 0;
    r.time = std::max(std::min(event_time, censor_time), 1e-6);
    out.true_risk.push_back(z);
    out.cohort.records.push_back(std::move(r));
  }
  validate_cohort(out.cohort);
  return out;
}

}  // namespace eagle
