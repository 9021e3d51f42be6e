#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eagle/model.hpp"

namespace eagle {

enum class AttributionMethod { Simple, GradientTimesActivation, IntegratedGradients };

std::string_view method_name(AttributionMethod m);  // simple | gradient | integrated_gradients
AttributionMethod parse_method(std::string_view name);
inline constexpr std::array<AttributionMethod, 3> kAttributionMethods{
    AttributionMethod::Simple, AttributionMethod::GradientTimesActivation, AttributionMethod::IntegratedGradients};

inline constexpr std::size_t kDefaultIgSteps = 50;
inline constexpr double kIgFallbackThreshold = 1e-12;

struct AttributionResult {
  std::string id;
  AttributionMethod method = AttributionMethod::Simple;
  PerModality<double> percent{};  // sums to 100
  PerModality<double> raw{};      // nonnegative scores before normalisation
  // Signed sum of integrated-gradient components per modality (IG only);
  // their total approximates risk(h) - risk(0).
  PerModality<double> signed_sum{};
  std::size_t steps = 0;
  bool fallback = false;
};

// Maps a batch of encoded representations h_m ([b x width_m]) to a risk
// column [b x 1] on the tape. Rows must not interact.
using RiskFromEncoded = std::function<Var(Tape&, const PerModality<Var>&)>;

// Eval-mode post-encoder network of a trained model.
RiskFromEncoded model_risk_function(const ModelParams& params);

// C_m = |h_m|_1 / sum_k |h_k|_1 * 100, one result per row.
std::vector<AttributionResult> simple_attribution(const PerModality<Tensor>& encoded,
                                                  const std::vector<std::string>& ids);

// Raw score |(d risk / d h_m) * h_m|_1.
std::vector<AttributionResult> gradient_attribution(const RiskFromEncoded& risk, const PerModality<Tensor>& encoded,
                                                    const std::vector<std::string>& ids);

// Right Riemann sum from the zero baseline at the encoded layer:
// |h_m * (1/steps) sum_t grad(t/steps * h)|_1. Falls back to |h_m|_1 when
// the mean absolute path gradient is below kIgFallbackThreshold.
std::vector<AttributionResult> integrated_gradients(const RiskFromEncoded& risk, const PerModality<Tensor>& encoded,
                                                    const std::vector<std::string>& ids,
                                                    std::size_t steps = kDefaultIgSteps);

// Model-level entry point: encode the records in eval mode, then attribute.
std::vector<AttributionResult> attribute(const ModelParams& params, const std::vector<ProcessedRecord>& records,
                                         AttributionMethod method, std::size_t steps = kDefaultIgSteps);

struct ContributionSummary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double stdev = 0.0;
  // Pearson correlation with the risk score; nullopt when either side is constant.
  std::optional<double> risk_correlation;
};

struct CohortAttribution {
  AttributionMethod method = AttributionMethod::Simple;
  std::vector<AttributionResult> patients;
  std::vector<double> risks;
  PerModality<ContributionSummary> summary{};

  // Modalities ordered by mean contribution, largest first.
  std::array<Modality, kNumModalities> ranking() const;
};

CohortAttribution summarize_attribution(AttributionMethod method, std::vector<AttributionResult> patients,
                                        std::vector<double> risks);

CohortAttribution cohort_attribution(const ModelParams& params, const std::vector<ProcessedRecord>& records,
                                     AttributionMethod method, std::size_t steps = kDefaultIgSteps);

std::string attribution_csv(const std::vector<AttributionResult>& results);

}  // namespace eagle
