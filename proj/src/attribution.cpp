#include "eagle/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eagle/csv.hpp"
#include "eagle/error.hpp"
#include "eagle/survival.hpp"

namespace eagle {

std::string_view method_name(AttributionMethod m) {
  switch (m) {
    case AttributionMethod::Simple: return "simple";
    case AttributionMethod::GradientTimesActivation: return "gradient";
    case AttributionMethod::IntegratedGradients: return "integrated_gradients";
  }
  return "?";
}

AttributionMethod parse_method(std::string_view name) {
  for (auto m : kAttributionMethods)
    if (method_name(m) == name) return m;
  if (name == "ig") return AttributionMethod::IntegratedGradients;
  fail(ErrorCode::InvalidConfig, "unknown attribution method '" + std::string(name) + "'");
}

namespace {

std::size_t batch_rows(const PerModality<Tensor>& encoded, const std::vector<std::string>& ids) {
  const std::size_t b = encoded[0].rows();
  for (const auto& t : encoded)
    if (t.rank() != 2 || t.rows() != b) fail(ErrorCode::ShapeMismatch, "encoded batches disagree on row count");
  if (ids.size() != b) fail(ErrorCode::ShapeMismatch, "ids do not match encoded batch size");
  return b;
}

void normalise(AttributionResult& r, ErrorCode zero_code) {
  const double total = std::accumulate(r.raw.begin(), r.raw.end(), 0.0);
  if (!(total > 0.0)) fail(zero_code, "patient '" + r.id + "': all modality scores are zero (" +
                                          std::string(method_name(r.method)) + ")");
  for (std::size_t m = 0; m < kNumModalities; ++m) r.percent[m] = r.raw[m] / total * 100.0;
}

// Gradient of sum(risk) with respect to each encoded batch at `at`.
PerModality<Tensor> risk_gradient(const RiskFromEncoded& risk, const PerModality<Tensor>& at) {
  Tape tape;
  PerModality<Var> vars;
  for (std::size_t m = 0; m < kNumModalities; ++m)
    vars[m] = tape.leaf(at[m], true, "h_" + std::string(modality_name(kModalities[m])));
  const Var r = risk(tape, vars);
  if (tape.value(r).size() != at[0].rows()) fail(ErrorCode::ShapeMismatch, "risk function must return one value per row");
  tape.backward(ops::sum(tape, r));
  PerModality<Tensor> g;
  for (std::size_t m = 0; m < kNumModalities; ++m) g[m] = tape.grad(vars[m]);
  return g;
}

}  // namespace

RiskFromEncoded model_risk_function(const ModelParams& params) {
  return [&params](Tape& tape, const PerModality<Var>& encoded) {
    Network net(tape, params, false);
    Rng unused(0);
    return net.risk_from_encoded(encoded, Mode::Eval, unused);
  };
}

std::vector<AttributionResult> simple_attribution(const PerModality<Tensor>& encoded,
                                                  const std::vector<std::string>& ids) {
  const std::size_t b = batch_rows(encoded, ids);
  std::vector<AttributionResult> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    auto& r = out[i];
    r.id = ids[i];
    r.method = AttributionMethod::Simple;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const Tensor& h = encoded[m];
      r.raw[m] = l1_norm(h.data().subspan(i * h.cols(), h.cols()));
    }
    normalise(r, ErrorCode::AllZeroEncodings);
  }
  return out;
}

std::vector<AttributionResult> gradient_attribution(const RiskFromEncoded& risk, const PerModality<Tensor>& encoded,
                                                    const std::vector<std::string>& ids) {
  const std::size_t b = batch_rows(encoded, ids);
  const auto grads = risk_gradient(risk, encoded);
  std::vector<AttributionResult> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    auto& r = out[i];
    r.id = ids[i];
    r.method = AttributionMethod::GradientTimesActivation;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const std::size_t w = encoded[m].cols();
      double s = 0.0;
      for (std::size_t j = 0; j < w; ++j) s += std::abs(grads[m](i, j) * encoded[m](i, j));
      r.raw[m] = s;
    }
    normalise(r, ErrorCode::ZeroTotalScore);
  }
  return out;
}

std::vector<AttributionResult> integrated_gradients(const RiskFromEncoded& risk, const PerModality<Tensor>& encoded,
                                                    const std::vector<std::string>& ids, std::size_t steps) {
  if (steps < 1) fail(ErrorCode::InvalidSteps, "integrated gradients needs steps >= 1");
  const std::size_t b = batch_rows(encoded, ids);
  PerModality<Tensor> avg;
  for (std::size_t m = 0; m < kNumModalities; ++m) avg[m] = Tensor::zeros_like(encoded[m]);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double alpha = static_cast<double>(t) / static_cast<double>(steps);
    PerModality<Tensor> point = encoded;
    for (auto& p : point) p *= alpha;
    const auto g = risk_gradient(risk, point);
    for (std::size_t m = 0; m < kNumModalities; ++m) avg[m] += g[m];
  }
  for (auto& a : avg) a *= 1.0 / static_cast<double>(steps);

  std::vector<AttributionResult> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    auto& r = out[i];
    r.id = ids[i];
    r.method = AttributionMethod::IntegratedGradients;
    r.steps = steps;
    double abs_grad = 0.0;
    std::size_t coords = 0;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const std::size_t w = encoded[m].cols();
      double raw = 0.0, sign = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        const double c = encoded[m](i, j) * avg[m](i, j);
        raw += std::abs(c);
        sign += c;
        abs_grad += std::abs(avg[m](i, j));
      }
      coords += w;
      r.raw[m] = raw;
      r.signed_sum[m] = sign;
    }
    if (abs_grad / static_cast<double>(coords) < kIgFallbackThreshold) {
      r.fallback = true;
      for (std::size_t m = 0; m < kNumModalities; ++m) {
        const Tensor& h = encoded[m];
        r.raw[m] = l1_norm(h.data().subspan(i * h.cols(), h.cols()));
      }
    }
    normalise(r, ErrorCode::ZeroTotalScore);
  }
  return out;
}

std::vector<AttributionResult> attribute(const ModelParams& params, const std::vector<ProcessedRecord>& records,
                                         AttributionMethod method, std::size_t steps) {
  const auto fwd = predict(params, records);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  switch (method) {
    case AttributionMethod::Simple: return simple_attribution(fwd.encoded, ids);
    case AttributionMethod::GradientTimesActivation:
      return gradient_attribution(model_risk_function(params), fwd.encoded, ids);
    case AttributionMethod::IntegratedGradients:
      return integrated_gradients(model_risk_function(params), fwd.encoded, ids, steps);
  }
  return {};
}

namespace {

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  const auto flat = [n](double ss, double m) { return ss <= 1e-24 * static_cast<double>(n) * std::max(1.0, m * m); };
  if (flat(saa, ma) || flat(sbb, mb)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

std::array<Modality, kNumModalities> CohortAttribution::ranking() const {
  std::array<Modality, kNumModalities> order = kModalities;
  std::stable_sort(order.begin(), order.end(),
                   [&](Modality a, Modality b) { return summary[index_of(a)].mean > summary[index_of(b)].mean; });
  return order;
}

CohortAttribution summarize_attribution(AttributionMethod method, std::vector<AttributionResult> patients,
                                        std::vector<double> risks) {
  if (patients.empty()) fail(ErrorCode::EmptyInput, "cohort attribution over no patients");
  if (risks.size() != patients.size()) fail(ErrorCode::ShapeMismatch, "risks do not match attribution results");
  CohortAttribution out;
  out.method = method;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    std::vector<double> v;
    for (const auto& p : patients) v.push_back(p.percent[m]);
    auto& s = out.summary[m];
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stdev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    s.risk_correlation = pearson(v, risks);
    std::sort(v.begin(), v.end());
    s.median = percentile_sorted(v, 0.5);
    s.q1 = percentile_sorted(v, 0.25);
    s.q3 = percentile_sorted(v, 0.75);
  }
  out.patients = std::move(patients);
  out.risks = std::move(risks);
  return out;
}

CohortAttribution cohort_attribution(const ModelParams& params, const std::vector<ProcessedRecord>& records,
                                     AttributionMethod method, std::size_t steps) {
  if (records.empty()) fail(ErrorCode::EmptyInput, "cohort attribution over no records");
  auto results = attribute(params, records, method, steps);
  return summarize_attribution(method, std::move(results), predict(params, records).risk);
}

std::string attribution_csv(const std::vector<AttributionResult>& results) {
  std::string out = "id,method,imaging_pct,text_pct,clinical_pct,fallback_flag\n";
  for (const auto& r : results)
    out += r.id + "," + std::string(method_name(r.method)) + "," + csv::format_double(r.percent[0]) + "," +
           csv::format_double(r.percent[1]) + "," + csv::format_double(r.percent[2]) + "," +
           (r.fallback ? "1" : "0") + "\n";
  return out;
}

}  // namespace eagle
