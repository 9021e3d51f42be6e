#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eagle/cohort.hpp"
#include "eagle/model.hpp"
#include "eagle/tape.hpp"

namespace eagle {

// ---- losses ---------------------------------------------------------------

// Negative Cox partial log-likelihood averaged over events, Breslow ties:
// subjects with equal times share one risk set. Computed over a
// descending-time sort with a running logsumexp.
double cox_loss(std::span<const double> risks, std::span<const double> times, std::span<const int> events);
// Taped version; `risks` is any tensor with one entry per patient.
Var cox_loss(Tape& t, Var risks, std::span<const double> times, std::span<const int> events);

// Mean binary cross-entropy with logits in the stable form
// log(1 + exp(-|z|)) + max(z, 0) - z * y.
double event_loss(std::span<const double> logits, std::span<const int> events);
Var event_loss(Tape& t, Var logits, std::span<const int> events);

double total_loss(double cox, double event, double aux_weight);
Var total_loss(Tape& t, Var cox, Var event, double aux_weight);

// ---- optimisation -----------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t early_stop_patience = 15;
  double clip_norm = 1.0;
  double scheduler_factor = 0.5;
  std::size_t scheduler_patience = 5;
  double min_improvement = 1e-4;
  double min_learning_rate = 1e-7;
  double aux_weight = 0.1;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
};

// AdamW with decoupled weight decay: theta -= lr * wd * theta, then the
// bias-corrected adaptive step.
void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, OptimizerState& state,
                double learning_rate, double weight_decay);

double global_norm(const std::vector<Tensor>& grads);
// Rescales in place when the global L2 norm exceeds max_norm; returns the
// norm before clipping.
double clip_gradients(std::vector<Tensor>& grads, double max_norm);

// ReduceLROnPlateau in "max" mode on validation C-index.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, const TrainConfig& cfg);
  // Feeds one epoch's metric and returns the learning rate for the next.
  double observe(double metric);
  double learning_rate() const noexcept { return lr_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double min_improvement_;
  double floor_;
  bool have_best_ = false;
  double best_ = 0.0;
  std::size_t bad_epochs_ = 0;
};

// Replays a metric history through a fresh scheduler.
double plateau_scheduler(std::span<const double> history, double initial_lr, const TrainConfig& cfg);

// ---- training driver ------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_cindex = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_cindex = 0.0;
  std::string stop_reason;
  std::size_t batches_without_events = 0;
};

std::string training_log_csv(const TrainReport& report);

struct FoldModel {
  ModelParams params;  // parameters from the best validation epoch
  TrainReport report;
};

using WarningSink = std::function<void(const std::string&)>;

FoldModel train_fold(const std::vector<ProcessedRecord>& train, const std::vector<ProcessedRecord>& val,
                     const ModelConfig& model_cfg, const TrainConfig& train_cfg, const WarningSink& warn = {});

struct FoldOutcome {
  std::size_t fold = 0;
  std::vector<std::string> validation_ids;
  double cindex = 0.0;
  TrainReport report;
  Checkpoint checkpoint;
};

struct CrossValidation {
  FoldSplit split;
  std::vector<FoldOutcome> folds;
  std::vector<double> cindex_per_fold;
  double cindex_mean = 0.0;
  double cindex_std = 0.0;             // sample standard deviation
  std::vector<double> oof_risk;        // aligned with cohort.records
  std::vector<std::size_t> oof_fold;   // fold that scored each record
};

// `model_cfg` supplies the architecture; input widths come from the cohort
// manifest and each fold's preprocessing. Fold f trains with seed + f.
CrossValidation cross_validate(const Cohort& cohort, std::size_t k, const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg, bool parallel = false, const WarningSink& warn = {});

std::string format_mean_std(double mean, double stdev, int digits = 3);
double sample_stdev(std::span<const double> v);

}  // namespace eagle
