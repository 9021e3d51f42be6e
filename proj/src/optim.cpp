#include <algorithm>
#include <cmath>

#include "eagle/error.hpp"
#include "eagle/training.hpp"

namespace eagle {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) fail(ErrorCode::InvalidConfig, "learning_rate must be positive");
  if (!(c.weight_decay >= 0.0)) fail(ErrorCode::InvalidConfig, "weight_decay must be >= 0");
  if (c.batch_size < 2) fail(ErrorCode::InvalidConfig, "batch_size must be at least 2");
  if (c.max_epochs == 0) fail(ErrorCode::InvalidConfig, "max_epochs must be positive");
  if (c.early_stop_patience == 0) fail(ErrorCode::InvalidConfig, "early_stop_patience must be positive");
  if (!(c.clip_norm > 0.0)) fail(ErrorCode::InvalidConfig, "clip_norm must be positive");
  if (!(c.scheduler_factor > 0.0 && c.scheduler_factor < 1.0))
    fail(ErrorCode::InvalidConfig, "scheduler_factor must be in (0, 1)");
  if (c.scheduler_patience == 0) fail(ErrorCode::InvalidConfig, "scheduler_patience must be positive");
  if (!(c.aux_weight >= 0.0)) fail(ErrorCode::InvalidConfig, "aux_weight must be >= 0");
}

void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, OptimizerState& state,
                double lr, double wd) {
  if (params.size() != grads.size())
    fail(ErrorCode::ShapeMismatch, "adamw: " + std::to_string(params.size()) + " parameters but " +
                                       std::to_string(grads.size()) + " gradients");
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.push_back(Tensor::zeros_like(*p));
      state.second_moment.push_back(Tensor::zeros_like(*p));
    }
  }
  if (state.first_moment.size() != params.size()) fail(ErrorCode::ShapeMismatch, "adamw: optimizer state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (!p.same_shape(g) || !p.same_shape(m))
      fail(ErrorCode::ShapeMismatch, "adamw: parameter " + shape_str(p.shape()) + " vs gradient " + shape_str(g.shape()));
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= lr * wd * p[j];
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorCode::InvalidConfig, "clip max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

PlateauScheduler::PlateauScheduler(double initial_lr, const TrainConfig& cfg)
    : lr_(initial_lr),
      factor_(cfg.scheduler_factor),
      patience_(cfg.scheduler_patience),
      min_improvement_(cfg.min_improvement),
      floor_(cfg.min_learning_rate) {}

double PlateauScheduler::observe(double metric) {
  if (!have_best_ || metric > best_ + min_improvement_) {
    have_best_ = true;
    best_ = metric;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, std::min(floor_, lr_));
    bad_epochs_ = 0;
  }
  return lr_;
}

double plateau_scheduler(std::span<const double> history, double initial_lr, const TrainConfig& cfg) {
  if (history.empty()) fail(ErrorCode::EmptyInput, "plateau scheduler needs at least one validation value");
  PlateauScheduler s(initial_lr, cfg);
  for (double v : history) s.observe(v);
  return s.learning_rate();
}

}  // namespace eagle
