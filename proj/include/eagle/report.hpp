#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eagle/survival.hpp"

namespace eagle {

struct SurvivalReport {
  std::vector<std::string> ids;
  std::vector<double> risks;
  std::vector<double> times;
  std::vector<int> events;
  double cindex = 0.0;
  Stratification strata;
  std::array<KMCurve, 3> curves;
  std::array<std::optional<double>, 3> median_survival;
  std::optional<LogRankResult> logrank;  // absent when fewer than two groups are populated
};

SurvivalReport survival_report(std::vector<std::string> ids, std::vector<double> risks, std::vector<double> times,
                               std::vector<int> events);

std::string km_curve_csv(const KMCurve& curve);
std::string km_svg(const std::array<KMCurve, 3>& curves);

// Writes risk_groups.csv, km_<group>.csv, survival.json and km.svg.
void write_survival_report(const SurvivalReport& report, const std::filesystem::path& dir);

}  // namespace eagle
