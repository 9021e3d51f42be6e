#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "eagle/csv.hpp"
#include "eagle/error.hpp"
#include "eagle/survival.hpp"
#include "eagle/training.hpp"

namespace eagle {

std::string training_log_csv(const TrainReport& report) {
  std::string out = "epoch,train_loss,val_cindex,lr\n";
  for (const auto& e : report.epochs)
    out += std::to_string(e.epoch) + "," + csv::format_double(e.train_loss) + "," + csv::format_double(e.val_cindex) +
           "," + csv::format_double(e.learning_rate) + "\n";
  return out;
}

double sample_stdev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string format_mean_std(double mean, double stdev, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", digits, mean, digits, stdev);
  return buf;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size)));
  // Batch norm cannot train on a single row; fold a trailing singleton into
  // the previous batch.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

double validation_cindex(const ModelParams& params, const std::vector<ProcessedRecord>& val) {
  const auto out = predict(params, val);
  std::vector<double> times;
  std::vector<int> events;
  for (const auto& r : val) {
    times.push_back(r.time);
    events.push_back(r.event);
  }
  return c_index(out.risk, times, events);
}

}  // namespace

FoldModel train_fold(const std::vector<ProcessedRecord>& train, const std::vector<ProcessedRecord>& val,
                     const ModelConfig& model_cfg, const TrainConfig& cfg, const WarningSink& warn) {
  validate(cfg);
  validate(model_cfg);
  std::size_t train_events = 0;
  for (const auto& r : train) train_events += r.event == 1;
  if (train_events < 2)
    fail(ErrorCode::DegenerateSplit, "training split has " + std::to_string(train_events) + " events; need at least 2");
  {
    std::vector<double> t, r(val.size(), 0.0);
    std::vector<int> e;
    for (const auto& v : val) {
      t.push_back(v.time);
      e.push_back(v.event);
    }
    if (concordance_counts(r, t, e).comparable == 0)
      fail(ErrorCode::DegenerateSplit, "validation split has no comparable pair");
  }

  const Rng root(cfg.seed);
  Rng shuffle_rng = root.derive(stream::kShuffle);
  Rng dropout_rng = root.derive(stream::kDropout);
  ModelParams params = init_params(model_cfg, root);
  OptimizerState opt;
  PlateauScheduler scheduler(cfg.learning_rate, cfg);

  FoldModel result{params, {}};
  TrainReport& rep = result.report;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  rep.stop_reason = "max_epochs";

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = scheduler.learning_rate();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    const auto batches = make_batches(order, cfg.batch_size);
    for (const auto& batch : batches) {
      std::vector<double> times;
      std::vector<int> events;
      for (std::size_t i : batch) {
        times.push_back(train[i].time);
        events.push_back(train[i].event);
      }
      Tape tape;
      Network net(tape, params, true, true);
      const auto inputs = stack_inputs(train, batch, model_cfg);
      PerModality<Var> vars;
      for (std::size_t m = 0; m < kNumModalities; ++m) vars[m] = tape.constant(inputs[m]);
      const auto g = net.forward(vars, Mode::Train, dropout_rng);
      const Var ev = event_loss(tape, g.heads.event_logit, events);
      Var loss;
      if (std::find(events.begin(), events.end(), 1) != events.end()) {
        loss = total_loss(tape, cox_loss(tape, g.heads.risk, times, events), ev, cfg.aux_weight);
      } else {
        ++rep.batches_without_events;
        if (warn) warn("epoch " + std::to_string(epoch) + ": batch without events, using auxiliary loss only");
        loss = ops::scale(tape, ev, cfg.aux_weight);
      }
      loss_sum += tape.value(loss).item();
      tape.backward(loss);
      auto grads = net.param_grads();
      clip_gradients(grads, cfg.clip_norm);
      adamw_step(params.learnable(), grads, opt, lr, cfg.weight_decay);
    }

    const double vc = validation_cindex(params, val);
    rep.epochs.push_back({epoch, loss_sum / static_cast<double>(batches.size()), vc, lr});
    if (vc > best) {
      best = vc;
      rep.best_epoch = epoch;
      rep.best_cindex = vc;
      result.params = params;
      since_best = 0;
    } else {
      ++since_best;
    }
    scheduler.observe(vc);
    if (since_best >= cfg.early_stop_patience) {
      rep.stop_reason = "early_stopping";
      break;
    }
  }
  return result;
}

CrossValidation cross_validate(const Cohort& cohort, std::size_t k, const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg, bool parallel, const WarningSink& warn) {
  CrossValidation cv;
  cv.split = stratified_folds(cohort.records, k, Rng(train_cfg.seed));
  cv.folds.resize(k);

  auto run_fold = [&](std::size_t f) {
    std::vector<PatientRecord> train, val;
    for (std::size_t i = 0; i < cohort.records.size(); ++i)
      (cv.split.fold_of[i] == f ? val : train).push_back(cohort.records[i]);
    const PreprocessStats stats = fit_preprocess(train, cohort.manifest.numeric, cohort.manifest.categorical);
    const auto ptrain = apply_preprocess(train, stats);
    const auto pval = apply_preprocess(val, stats);

    ModelConfig mc = model_cfg;
    mc.input_dims[index_of(Modality::Imaging)] = cohort.manifest.dim(Modality::Imaging);
    mc.input_dims[index_of(Modality::Text)] = cohort.manifest.dim(Modality::Text);
    mc.input_dims[index_of(Modality::Clinical)] = stats.clinical_width();
    if (stats.clinical_width() == 0)
      fail(ErrorCode::InvalidConfig, "fold " + std::to_string(f) + ": no usable clinical features after preprocessing");
    TrainConfig tc = train_cfg;
    tc.seed = train_cfg.seed + f;

    FoldModel fm = train_fold(ptrain, pval, mc, tc, warn);
    FoldOutcome& out = cv.folds[f];
    out.fold = f;
    for (const auto& r : val) out.validation_ids.push_back(r.id);
    out.cindex = fm.report.best_cindex;
    out.report = std::move(fm.report);
    out.checkpoint = Checkpoint{std::move(fm.params), stats, static_cast<int>(f), out.validation_ids};
  };

  if (parallel && k > 1) {
    std::vector<std::exception_ptr> errors(k);
    std::vector<std::thread> workers;
    for (std::size_t f = 0; f < k; ++f)
      workers.emplace_back([&, f] {
        try {
          run_fold(f);
        } catch (...) {
          errors[f] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  }

  cv.oof_risk.assign(cohort.records.size(), 0.0);
  cv.oof_fold.assign(cohort.records.size(), 0);
  for (std::size_t f = 0; f < k; ++f) {
    const auto& fold = cv.folds[f];
    std::vector<PatientRecord> val;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cohort.records.size(); ++i)
      if (cv.split.fold_of[i] == f) {
        val.push_back(cohort.records[i]);
        idx.push_back(i);
      }
    const auto out = predict(fold.checkpoint.params, apply_preprocess(val, fold.checkpoint.preprocess));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      cv.oof_risk[idx[j]] = out.risk[j];
      cv.oof_fold[idx[j]] = f;
    }
    cv.cindex_per_fold.push_back(fold.cindex);
  }
  cv.cindex_mean = std::accumulate(cv.cindex_per_fold.begin(), cv.cindex_per_fold.end(), 0.0) / static_cast<double>(k);
  cv.cindex_std = sample_stdev(cv.cindex_per_fold);
  return cv;
}

}  // namespace eagle
