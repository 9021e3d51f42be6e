#include <algorithm>
#include <cmath>

#include "eagle/cohort.hpp"
#include "eagle/error.hpp"

namespace eagle {

std::size_t CategoricalStats::code(const std::optional<std::string>& value) const {
  if (!value) return 0;
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == *value) return i + 1;
  return 0;
}

std::size_t PreprocessStats::clinical_width() const {
  std::size_t w = numeric.size();
  for (const auto& c : categorical) w += c.categories.size() + 1;
  return w;
}

PreprocessStats PreprocessStats::identity(std::vector<std::string> numeric_names) {
  PreprocessStats s;
  for (std::size_t i = 0; i < numeric_names.size(); ++i) s.numeric.push_back({numeric_names[i], i, 0.0, 0.0, 1.0});
  s.numeric_schema = std::move(numeric_names);
  return s;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

PreprocessStats fit_preprocess(const std::vector<PatientRecord>& train, const std::vector<std::string>& numeric_names,
                               const std::vector<std::string>& categorical_names) {
  if (train.size() < 2) fail(ErrorCode::TooFewRecords, "preprocessing needs at least 2 training records");
  PreprocessStats s;
  s.numeric_schema = numeric_names;
  s.categorical_schema = categorical_names;
  for (const auto& r : train)
    if (r.clinical_numeric.size() != numeric_names.size() || r.clinical_categorical.size() != categorical_names.size())
      fail(ErrorCode::SchemaMismatch, "patient '" + r.id + "': clinical columns disagree with schema");

  for (std::size_t f = 0; f < numeric_names.size(); ++f) {
    std::vector<double> seen;
    for (const auto& r : train)
      if (r.clinical_numeric[f]) seen.push_back(*r.clinical_numeric[f]);
    if (seen.empty())
      fail(ErrorCode::AllMissingFeature, "numeric feature '" + numeric_names[f] + "' is missing in every training record");
    double mean = 0.0;
    for (double v : seen) mean += v;
    mean /= static_cast<double>(seen.size());
    double ss = 0.0;
    for (double v : seen) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(seen.size()));
    if (!(sd > 0.0)) {
      s.dropped.push_back(numeric_names[f]);
      continue;
    }
    s.numeric.push_back({numeric_names[f], f, median_of(seen), mean, sd});
  }

  for (std::size_t f = 0; f < categorical_names.size(); ++f) {
    CategoricalStats c{categorical_names[f], {}};
    for (const auto& r : train) {
      const auto& v = r.clinical_categorical[f];
      if (v && std::find(c.categories.begin(), c.categories.end(), *v) == c.categories.end()) c.categories.push_back(*v);
    }
    s.categorical.push_back(std::move(c));
  }
  return s;
}

std::vector<ProcessedRecord> apply_preprocess(const std::vector<PatientRecord>& records, const PreprocessStats& stats) {
  std::vector<ProcessedRecord> out;
  out.reserve(records.size());
  const std::size_t width = stats.clinical_width();
  for (const auto& r : records) {
    if (r.clinical_numeric.size() != stats.numeric_schema.size())
      fail(ErrorCode::SchemaMismatch, "patient '" + r.id + "': " + std::to_string(r.clinical_numeric.size()) +
                                          " numeric clinical values, preprocessing expects " +
                                          std::to_string(stats.numeric_schema.size()));
    if (r.clinical_categorical.size() != stats.categorical_schema.size())
      fail(ErrorCode::SchemaMismatch, "patient '" + r.id + "': " + std::to_string(r.clinical_categorical.size()) +
                                          " categorical clinical values, preprocessing expects " +
                                          std::to_string(stats.categorical_schema.size()));
    ProcessedRecord p;
    p.id = r.id;
    p.time = r.time;
    p.event = r.event;
    p.features[static_cast<std::size_t>(Modality::Imaging)] = r.imaging;
    p.features[static_cast<std::size_t>(Modality::Text)] = r.text;
    auto& clin = p.features[static_cast<std::size_t>(Modality::Clinical)];
    clin.reserve(width);
    for (const auto& ns : stats.numeric) {
      const double v = r.clinical_numeric[ns.source_index].value_or(ns.median);
      clin.push_back((v - ns.mean) / ns.stdev);
    }
    for (std::size_t f = 0; f < stats.categorical.size(); ++f) {
      const auto& cs = stats.categorical[f];
      const std::size_t base = clin.size();
      clin.resize(base + cs.categories.size() + 1, 0.0);
      clin[base + cs.code(r.clinical_categorical[f])] = 1.0;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace eagle
