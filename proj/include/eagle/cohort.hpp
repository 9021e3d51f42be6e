#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eagle/rng.hpp"

namespace eagle {

enum class Modality { Imaging = 0, Text = 1, Clinical = 2 };
inline constexpr std::array<Modality, 3> kModalities{Modality::Imaging, Modality::Text, Modality::Clinical};
inline constexpr std::size_t kNumModalities = kModalities.size();

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

struct PatientRecord {
  std::string id;
  double time = 0.0;  // days, > 0
  int event = 0;      // 1 = observed, 0 = censored
  std::vector<double> imaging;
  std::vector<double> text;
  std::vector<std::optional<double>> clinical_numeric;
  std::vector<std::optional<std::string>> clinical_categorical;

  const std::vector<double>& embedding(Modality m) const;
};

struct ModalityFiles {
  std::string name;  // "imaging" | "text"
  std::size_t dim = 0;
  std::vector<std::string> files;  // concatenated in this order
};

struct Manifest {
  std::string name;
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
  std::string clinical_file;
  std::vector<ModalityFiles> modalities;
  std::string outcomes_file;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::size_t dim(Modality m) const;
};

Manifest parse_manifest(const std::string& json_text, std::filesystem::path base_dir);
std::string manifest_to_json(const Manifest& m);

struct Cohort {
  Manifest manifest;
  std::vector<PatientRecord> records;

  std::size_t event_count() const;
};

// Throws if ids repeat, shapes disagree with the manifest, times are not
// positive, or no record has an event.
void validate_cohort(const Cohort& cohort);

Cohort load_cohort(const std::filesystem::path& manifest_path);

// Writes manifest.json plus clinical, embedding and outcome CSVs into `dir`.
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);

// ---- preprocessing -------------------------------------------------------

struct NumericStats {
  std::string name;
  std::size_t source_index = 0;  // position in the manifest's numeric list
  double median = 0.0;
  double mean = 0.0;
  double stdev = 1.0;
};

struct CategoricalStats {
  std::string name;
  // One-hot slot 0 is "Unknown"; slot i + 1 is categories[i].
  std::vector<std::string> categories;

  std::size_t code(const std::optional<std::string>& value) const;
};

struct PreprocessStats {
  std::vector<std::string> numeric_schema;
  std::vector<std::string> categorical_schema;
  std::vector<NumericStats> numeric;      // kept features
  std::vector<std::string> dropped;       // zero-variance numeric features
  std::vector<CategoricalStats> categorical;

  std::size_t clinical_width() const;

  // Stats that leave numeric features unchanged: median 0, mean 0, std 1.
  static PreprocessStats identity(std::vector<std::string> numeric_names);
};

// Model-ready patient: embeddings plus the encoded clinical vector.
struct ProcessedRecord {
  std::string id;
  double time = 0.0;
  int event = 0;
  std::array<std::vector<double>, kNumModalities> features;

  const std::vector<double>& feature(Modality m) const { return features[static_cast<std::size_t>(m)]; }
};

PreprocessStats fit_preprocess(const std::vector<PatientRecord>& train,
                               const std::vector<std::string>& numeric_names,
                               const std::vector<std::string>& categorical_names);

std::vector<ProcessedRecord> apply_preprocess(const std::vector<PatientRecord>& records, const PreprocessStats& stats);

// ---- cross-validation folds ----------------------------------------------

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::string> ids;
  std::vector<std::size_t> fold_of;  // aligned with ids

  std::vector<std::size_t> members(std::size_t fold) const;
  std::map<std::string, std::size_t> assignment() const;
};

// Events and censored records are shuffled independently and dealt
// round-robin; censored dealing continues where events stopped so fold
// sizes stay balanced.
FoldSplit stratified_folds(const std::vector<PatientRecord>& records, std::size_t k, Rng rng);

// ---- synthetic cohorts ----------------------------------------------------

struct SynthConfig {
  std::size_t n = 400;
  std::size_t imaging_dim = 32;
  std::size_t text_dim = 32;
  std::size_t clinical_dim = 6;        // numeric clinical columns
  std::size_t categorical_levels = 3;  // one noise categorical column; 0 disables
  double signal_strength = 2.0;
  double censor_max = 20.0;
  double noise_scale = 1.0;
  double missing_rate = 0.05;  // clinical cells only
  // Modalities whose features carry the latent risk; others are pure noise.
  std::vector<Modality> signal_modalities{Modality::Imaging, Modality::Text, Modality::Clinical};
  std::uint64_t seed = 0;
  std::string name = "synthetic";
};

void validate(const SynthConfig& cfg);

struct SynthCohort {
  Cohort cohort;
  std::vector<double> true_risk;  // latent z per record
};

SynthCohort synth_cohort(const SynthConfig& cfg);

}  // namespace eagle
