#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eagle {

// Harrell's concordance over pairs with T_i < T_j and event_i = 1. Tied
// risks score one half; equal times are not comparable. O(n log n) via a
// Fenwick tree over risk ranks.
double c_index(std::span<const double> risks, std::span<const double> times, std::span<const int> events);

struct ConcordanceCounts {
  std::size_t comparable = 0;
  std::size_t concordant = 0;
  std::size_t tied_risk = 0;
  double value() const;
};

ConcordanceCounts concordance_counts(std::span<const double> risks, std::span<const double> times,
                                     std::span<const int> events);

// Linear-interpolation percentile of an ascending-sorted sample, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

enum class RiskLevel { Low = 0, Medium = 1, High = 2 };
inline constexpr std::array<RiskLevel, 3> kRiskLevels{RiskLevel::Low, RiskLevel::Medium, RiskLevel::High};
const char* risk_level_name(RiskLevel level);       // "Low"
const char* risk_level_slug(RiskLevel level);       // "low"

struct RiskGroup {
  RiskLevel level = RiskLevel::Low;
  std::vector<std::size_t> members;  // indices into the scored cohort, ordered by (risk, id)
  std::vector<std::string> ids;
};

struct Stratification {
  double low_cutoff = 0.0;   // 1/3 percentile
  double high_cutoff = 0.0;  // 2/3 percentile
  std::array<RiskGroup, 3> groups;
  std::vector<RiskLevel> level_of;  // aligned with input
  std::vector<std::string> warnings;
};

// Low: risk <= low_cutoff; Medium: low_cutoff < risk <= high_cutoff;
// High: risk > high_cutoff.
Stratification tertile_stratify(std::span<const double> risks, const std::vector<std::string>& ids);

struct KMCurve {
  std::vector<double> time;  // distinct event times, ascending
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  // S(t) for any t >= 0.
  double at(double t) const;
};

KMCurve kaplan_meier(std::span<const double> times, std::span<const int> events);

// Smallest event time with S <= 0.5; nullopt if the curve never gets there.
std::optional<double> median_survival(const KMCurve& curve);

struct SurvivalGroup {
  std::vector<double> times;
  std::vector<int> events;
};

struct LogRankResult {
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  std::vector<double> observed;
  std::vector<double> expected;
};

// k-sample log-rank test with hypergeometric variance. Empty groups are
// ignored; at least two nonempty groups and one event are required.
LogRankResult log_rank(const std::vector<SurvivalGroup>& groups);

// Upper tail of the chi-square distribution, integrated numerically from
// the density with adaptive Simpson quadrature. Result is in (0, 1].
double chi_square_sf(double x, std::size_t df);

}  // namespace eagle
