#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eagle/error.hpp"
#include "eagle/training.hpp"

namespace eagle {

namespace {

struct CoxPass {
  double loss = 0.0;
  std::vector<double> grad;
};

void check_cox_inputs(std::size_t n, std::size_t nt, std::size_t ne) {
  if (n != nt || n != ne) fail(ErrorCode::ShapeMismatch, "cox loss: risks, times and events differ in length");
  if (n < 2) fail(ErrorCode::BatchTooSmall, "cox loss needs at least 2 patients, got " + std::to_string(n));
}

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

CoxPass cox_pass(std::span<const double> r, std::span<const double> times, std::span<const int> events, bool want_grad) {
  check_cox_inputs(r.size(), times.size(), events.size());
  const std::size_t n = r.size();
  std::size_t n_events = 0;
  for (int e : events) n_events += e == 1;
  if (n_events == 0) fail(ErrorCode::NoEventsInBatch, "cox loss on a batch without events");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

  // Tie groups in descending time; lse[g] is logsumexp over the risk set.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  std::vector<double> lse;
  double run_max = -std::numeric_limits<double>::infinity();
  double run_sum = 0.0;
  double total = 0.0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && times[order[end]] == times[order[g]]) {
      const double v = r[order[end]];
      if (v > run_max) {
        run_sum = run_sum * std::exp(run_max - v) + 1.0;
        run_max = v;
      } else {
        run_sum += std::exp(v - run_max);
      }
      ++end;
    }
    const double l = run_max + std::log(run_sum);
    for (std::size_t p = g; p < end; ++p)
      if (events[order[p]] == 1) total += r[order[p]] - l;
    groups.emplace_back(g, end);
    lse.push_back(l);
    g = end;
  }
  CoxPass out;
  const double inv_e = 1.0 / static_cast<double>(n_events);
  out.loss = -total * inv_e;
  if (!want_grad) return out;

  out.grad.assign(n, 0.0);
  double log_c = -std::numeric_limits<double>::infinity();
  for (std::size_t gi = groups.size(); gi-- > 0;) {
    const auto [g, end] = groups[gi];
    std::size_t d = 0;
    for (std::size_t p = g; p < end; ++p) d += events[order[p]] == 1;
    if (d > 0) log_c = log_add(log_c, std::log(static_cast<double>(d)) - lse[gi]);
    for (std::size_t p = g; p < end; ++p) {
      const std::size_t j = order[p];
      const double share = log_c == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(r[j] + log_c);
      out.grad[j] = -(static_cast<double>(events[j] == 1) - share) * inv_e;
    }
  }
  return out;
}

}  // namespace

double cox_loss(std::span<const double> risks, std::span<const double> times, std::span<const int> events) {
  return cox_pass(risks, times, events, false).loss;
}

Var cox_loss(Tape& t, Var risks, std::span<const double> times, std::span<const int> events) {
  const Tensor& rv = t.value(risks);
  CoxPass pass = cox_pass(rv.data(), times, events, true);
  Tensor grad(rv.shape(), std::move(pass.grad));
  return t.record("cox_loss", Tensor::scalar(pass.loss), {risks}, [risks, grad](Tape& tp, const Tensor& g) {
    Tensor gr = grad;
    gr *= g.item();
    tp.accumulate(risks, gr);
  });
}

double event_loss(std::span<const double> logits, std::span<const int> events) {
  if (logits.size() != events.size()) fail(ErrorCode::ShapeMismatch, "event loss: logits and events differ in length");
  if (logits.empty()) fail(ErrorCode::EmptyInput, "event loss on an empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    s += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * events[i];
  }
  return s / static_cast<double>(logits.size());
}

Var event_loss(Tape& t, Var logits, std::span<const int> events) {
  const Tensor& zv = t.value(logits);
  const double value = event_loss(zv.data(), events);
  Tensor grad = Tensor::zeros_like(zv);
  const double inv_n = 1.0 / static_cast<double>(zv.size());
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const double z = zv[i];
    const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    grad[i] = (sig - events[i]) * inv_n;
  }
  return t.record("event_loss", Tensor::scalar(value), {logits}, [logits, grad](Tape& tp, const Tensor& g) {
    Tensor gz = grad;
    gz *= g.item();
    tp.accumulate(logits, gz);
  });
}

double total_loss(double cox, double event, double aux_weight) {
  if (!std::isfinite(cox) || !std::isfinite(event)) fail(ErrorCode::NonFinite, "loss component is not finite");
  const double v = cox + aux_weight * event;
  if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "total loss is not finite");
  return v;
}

Var total_loss(Tape& t, Var cox, Var event, double aux_weight) {
  total_loss(t.value(cox).item(), t.value(event).item(), aux_weight);
  return ops::add(t, cox, ops::scale(t, event, aux_weight));
}

}  // namespace eagle
