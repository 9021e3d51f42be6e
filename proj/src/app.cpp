#include "eagle/app.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "eagle/csv.hpp"
#include "eagle/error.hpp"
#include "eagle/serialize.hpp"
#include "eagle/survival.hpp"
#include "json.hpp"

namespace eagle::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t I = 0, T = 1, C = 2;

Preset make_gbm() {
  Preset p{"gbm", "Glioblastoma: imaging 1000, text 2304", {}, {}};
  p.model.input_dims = {1000, 2304, 0};
  p.train.learning_rate = 1e-4;
  p.train.batch_size = 32;
  p.model.dropout = 0.3;
  return p;
}

Preset make_ipmn() {
  Preset p{"ipmn", "Pancreatic cysts: imaging 1000, text 1536, encoders [256,128]", {}, {}};
  p.model.input_dims = {1000, 1536, 0};
  p.model.encoder_layers[I] = {256, 128};
  p.model.encoder_layers[T] = {256, 128};
  p.train.learning_rate = 1e-4;
  p.train.batch_size = 32;
  return p;
}

Preset make_nsclc() {
  Preset p{"nsclc", "Lung cancer: imaging 2048, text 1024, clinical [128,64,32]", {}, {}};
  p.model.input_dims = {2048, 1024, 0};
  p.model.encoder_layers[T] = {256, 128};
  p.model.encoder_layers[C] = {128, 64, 32};
  p.model.dropout = 0.35;
  p.train.learning_rate = 5e-5;
  p.train.batch_size = 24;
  return p;
}

// Desk-scale network for synthetic cohorts; any field can be overridden
// with --config.
Preset make_custom() {
  Preset p{"custom", "Desk-scale network for synthetic cohorts (override with --config)", {}, {}};
  p.model.encoder_layers[I] = {32, 16};
  p.model.encoder_layers[T] = {32, 16};
  p.model.encoder_layers[C] = {16, 8};
  p.model.common_dim = 16;
  p.model.attention_heads = 4;
  p.model.fusion_layers = {32, 16};
  p.model.dropout = 0.1;
  p.train.learning_rate = 1e-3;
  p.train.batch_size = 32;
  p.train.max_epochs = 100;
  return p;
}

std::string widths(const std::vector<std::size_t>& w) {
  std::string s = "[";
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s + "]";
}

json train_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"clip_norm", c.clip_norm},
          {"scheduler_factor", c.scheduler_factor},
          {"scheduler_patience", c.scheduler_patience},
          {"min_improvement", c.min_improvement},
          {"min_learning_rate", c.min_learning_rate},
          {"aux_weight", c.aux_weight},
          {"seed", c.seed}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.scheduler_factor = j.at("scheduler_factor").get<double>();
  c.scheduler_patience = j.at("scheduler_patience").get<std::size_t>();
  c.min_improvement = j.at("min_improvement").get<double>();
  c.min_learning_rate = j.at("min_learning_rate").get<double>();
  c.aux_weight = j.at("aux_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Nested override where every key must already exist in `base`.
void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) fail(ErrorCode::InvalidConfig, where + " must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorCode::InvalidConfig, "unknown config field " + key);
    if (base[it.key()].is_object())
      overlay(base[it.key()], it.value(), key);
    else
      base[it.key()] = it.value();
  }
}

std::string ctx(const std::string& stage, const std::string& msg) { return stage + ": " + msg; }

template <typename F>
auto staged(const std::string& stage, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    fail(e.code(), ctx(stage, msg));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, ctx(stage, e.what()));
  }
}

fs::path fold_dir(const fs::path& run, std::size_t f) { return run / "folds" / ("fold_" + std::to_string(f)); }

struct RunDir {
  json config;
  std::size_t k = 0;
  std::map<std::string, std::size_t> fold_of;
  std::vector<Checkpoint> checkpoints;
};

RunDir load_run(const fs::path& run) {
  RunDir rd;
  rd.config = json::parse(csv::read_text(run / "config.json"));
  rd.k = rd.config.at("k").get<std::size_t>();
  const auto folds = csv::read(run / "folds.csv");
  const auto id_col = folds.column("id"), fold_col = folds.column("fold");
  if (!id_col || !fold_col) fail(ErrorCode::SchemaMismatch, "folds.csv needs columns id,fold");
  for (const auto& row : folds.rows)
    rd.fold_of[row[*id_col]] = static_cast<std::size_t>(csv::parse_double(row[*fold_col], "folds.csv fold"));
  for (std::size_t f = 0; f < rd.k; ++f) rd.checkpoints.push_back(load_checkpoint(fold_dir(run, f) / "checkpoint.json"));
  return rd;
}

// Checkpoint and cohort must describe the same inputs.
void check_schema(const Checkpoint& ck, const Cohort& cohort, std::size_t fold) {
  const std::string where = "fold " + std::to_string(fold) + " checkpoint vs manifest: ";
  for (Modality m : {Modality::Imaging, Modality::Text}) {
    const auto want = ck.params.config.input_dims[index_of(m)];
    const auto got = cohort.manifest.dim(m);
    if (want != got)
      fail(ErrorCode::SchemaMismatch, where + "field '" + std::string(modality_name(m)) + ".dim' is " +
                                          std::to_string(got) + ", checkpoint expects " + std::to_string(want));
  }
  if (ck.preprocess.numeric_schema != cohort.manifest.numeric)
    fail(ErrorCode::SchemaMismatch, where + "field 'clinical.numeric' differs from the trained schema");
  if (ck.preprocess.categorical_schema != cohort.manifest.categorical)
    fail(ErrorCode::SchemaMismatch, where + "field 'clinical.categorical' differs from the trained schema");
  if (ck.params.config.input_dims[index_of(Modality::Clinical)] != ck.preprocess.clinical_width())
    fail(ErrorCode::SchemaMismatch, where + "field 'clinical width' inconsistent inside checkpoint");
}

// Per fold, the records that fold held out (cohort order preserved).
std::vector<std::vector<std::size_t>> held_out(const RunDir& rd, const Cohort& cohort) {
  std::vector<std::vector<std::size_t>> out(rd.k);
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto it = rd.fold_of.find(cohort.records[i].id);
    if (it == rd.fold_of.end())
      fail(ErrorCode::SchemaMismatch, "field 'id': patient " + cohort.records[i].id + " is not in folds.csv");
    if (it->second >= rd.k) fail(ErrorCode::SchemaMismatch, "field 'fold' out of range for " + it->first);
    out[it->second].push_back(i);
  }
  if (rd.fold_of.size() != cohort.records.size())
    fail(ErrorCode::SchemaMismatch, "field 'id': folds.csv lists " + std::to_string(rd.fold_of.size()) +
                                        " patients, cohort has " + std::to_string(cohort.records.size()));
  return out;
}

std::vector<PatientRecord> pick(const Cohort& cohort, const std::vector<std::size_t>& idx) {
  std::vector<PatientRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cohort.records[i]);
  return out;
}

std::string summary_json(const std::string& dataset, std::size_t k, const std::vector<double>& per_fold,
                         std::size_t n, std::size_t events, double reduction) {
  const double mean = std::accumulate(per_fold.begin(), per_fold.end(), 0.0) / static_cast<double>(per_fold.size());
  json j;
  j["dataset"] = dataset;
  j["k"] = k;
  j["cindex_per_fold"] = per_fold;
  j["cindex_mean"] = mean;
  j["cindex_std"] = sample_stdev(per_fold);
  j["n_patients"] = n;
  j["n_events"] = events;
  j["reduction_ratio"] = reduction;
  return j.dump(2) + "\n";
}

std::string oof_csv(const Cohort& cohort, const std::vector<double>& risk, const std::vector<std::size_t>& fold) {
  std::string s = "id,fold,risk,time,event\n";
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& r = cohort.records[i];
    s += r.id + "," + std::to_string(fold[i]) + "," + csv::format_double(risk[i]) + "," + csv::format_double(r.time) +
         "," + std::to_string(r.event) + "\n";
  }
  return s;
}

SurvivalReport build_report(const Cohort& cohort, const std::vector<double>& risk) {
  std::vector<std::string> ids;
  std::vector<double> times;
  std::vector<int> events;
  for (const auto& r : cohort.records) {
    ids.push_back(r.id);
    times.push_back(r.time);
    events.push_back(r.event);
  }
  return survival_report(std::move(ids), risk, std::move(times), std::move(events));
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all{make_gbm(), make_ipmn(), make_nsclc(), make_custom()};
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  fail(ErrorCode::InvalidConfig, "unknown preset '" + name + "' (expected gbm, ipmn, nsclc or custom)");
}

std::string preset_table() {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "  %-7s %-6s %-6s %-14s %-14s %-12s %-7s %-8s %-5s %-6s\n", "preset", "img", "text",
                "img enc", "text enc", "clin enc", "common", "lr", "batch", "drop");
  os << line;
  for (const auto& p : presets()) {
    const auto& m = p.model;
    auto dim = [](std::size_t d) { return d ? std::to_string(d) : std::string("data"); };
    char lr[16];
    std::snprintf(lr, sizeof(lr), "%g", p.train.learning_rate);
    std::snprintf(line, sizeof(line), "  %-7s %-6s %-6s %-14s %-14s %-12s %-7zu %-8s %-5zu %-6g\n", p.name.c_str(),
                  dim(m.input_dims[I]).c_str(), dim(m.input_dims[T]).c_str(), widths(m.encoder_layers[I]).c_str(),
                  widths(m.encoder_layers[T]).c_str(), widths(m.encoder_layers[C]).c_str(), m.common_dim, lr,
                  p.train.batch_size, m.dropout);
    os << line;
  }
  const Preset& gbm = presets().front();
  const Preset& custom = presets().back();
  os << "  all presets: heads " << gbm.model.attention_heads << " (custom " << custom.model.attention_heads
     << "), attention dropout " << gbm.model.attention_dropout << ", fusion " << widths(gbm.model.fusion_layers)
     << " (custom " << widths(custom.model.fusion_layers) << "), weight decay 0.01, aux weight 0.1,\n"
     << "  max epochs " << gbm.train.max_epochs << " (custom " << custom.train.max_epochs
     << "), early-stop patience 15, plateau factor 0.5 / patience 5, clip norm 1.0.\n"
     << "  'data' dims and the clinical width are read from the cohort manifest.\n";
  return os.str();
}

RunConfig resolve_config(const std::string& preset, const std::optional<fs::path>& config_path, std::uint64_t seed,
                         std::optional<std::size_t> k) {
  return staged("config", [&] {
    const Preset& p = find_preset(preset);
    RunConfig rc;
    rc.preset = p.name;
    json base{{"model", config_to_json(p.model)}, {"train", train_to_json(p.train)}, {"k", rc.k}};
    base["train"]["seed"] = seed;
    if (config_path) overlay(base, json::parse(csv::read_text(*config_path)), "config");
    rc.model = config_from_json(base["model"]);
    rc.train = train_from_json(base["train"]);
    rc.k = base["k"].get<std::size_t>();
    if (k) rc.k = *k;
    // Command line seed wins over the config file.
    rc.train.seed = seed;
    rc.model.aux_weight = rc.train.aux_weight;
    validate(rc.train);
    if (rc.k < 2) fail(ErrorCode::InvalidConfig, "k must be at least 2");
    return rc;
  });
}

std::string run_config_json(const RunConfig& cfg) {
  json j{{"preset", cfg.preset}, {"k", cfg.k}, {"model", config_to_json(cfg.model)}, {"train", train_to_json(cfg.train)}};
  return j.dump(2) + "\n";
}

SynthResult run_synth(const SynthConfig& cfg, const fs::path& out) {
  return staged("synth", [&] {
    const SynthCohort sc = synth_cohort(cfg);
    write_cohort(sc.cohort, out);
    std::string gt = "id,true_risk\n";
    std::vector<double> times;
    std::vector<int> events;
    for (std::size_t i = 0; i < sc.cohort.records.size(); ++i) {
      const auto& r = sc.cohort.records[i];
      gt += r.id + "," + csv::format_double(sc.true_risk[i]) + "\n";
      times.push_back(r.time);
      events.push_back(r.event);
    }
    csv::write_text(out / "ground_truth.csv", gt);
    return SynthResult{out / "manifest.json", c_index(sc.true_risk, times, events)};
  });
}

TrainResult run_train(const fs::path& manifest, const RunConfig& cfg, const fs::path& out, bool parallel,
                      const WarningSink& warn) {
  const Cohort cohort = staged("load cohort", [&] { return load_cohort(manifest); });
  TrainResult res;
  res.cv = staged("train", [&] { return cross_validate(cohort, cfg.k, cfg.model, cfg.train, parallel, warn); });
  return staged("write run", [&] {
    csv::write_text(out / "config.json", run_config_json(cfg));
    std::string folds = "id,fold\n";
    for (std::size_t i = 0; i < res.cv.split.ids.size(); ++i)
      folds += res.cv.split.ids[i] + "," + std::to_string(res.cv.split.fold_of[i]) + "\n";
    csv::write_text(out / "folds.csv", folds);
    for (const auto& f : res.cv.folds) {
      save_checkpoint(f.checkpoint, fold_dir(out, f.fold) / "checkpoint.json");
      csv::write_text(fold_dir(out, f.fold) / "log.csv", training_log_csv(f.report));
    }
    csv::write_text(out / "oof_risks.csv", oof_csv(cohort, res.cv.oof_risk, res.cv.oof_fold));
    res.reduction_ratio = count_params(res.cv.folds.front().checkpoint.params.config).reduction_ratio;
    res.report = build_report(cohort, res.cv.oof_risk);
    write_survival_report(res.report, out / "report");
    csv::write_text(out / "report" / "summary.json",
                    summary_json(cohort.manifest.name, cfg.k, res.cv.cindex_per_fold, cohort.records.size(),
                                 cohort.event_count(), res.reduction_ratio));
    return std::move(res);
  });
}

SurvivalReport run_evaluate(const fs::path& manifest, const fs::path& run_dir) {
  const Cohort cohort = staged("load cohort", [&] { return load_cohort(manifest); });
  const RunDir rd = staged("load run", [&] { return load_run(run_dir); });
  return staged("evaluate", [&] {
    for (std::size_t f = 0; f < rd.k; ++f) check_schema(rd.checkpoints[f], cohort, f);
    const auto groups = held_out(rd, cohort);
    std::vector<double> risk(cohort.records.size(), 0.0);
    std::vector<std::size_t> fold(cohort.records.size(), 0);
    std::vector<double> per_fold;
    for (std::size_t f = 0; f < rd.k; ++f) {
      const auto recs = pick(cohort, groups[f]);
      const auto out = predict(rd.checkpoints[f].params, apply_preprocess(recs, rd.checkpoints[f].preprocess));
      std::vector<double> t, r;
      std::vector<int> e;
      for (std::size_t j = 0; j < recs.size(); ++j) {
        risk[groups[f][j]] = out.risk[j];
        fold[groups[f][j]] = f;
        t.push_back(recs[j].time);
        e.push_back(recs[j].event);
      }
      per_fold.push_back(c_index(out.risk, t, e));
    }
    csv::write_text(run_dir / "oof_risks.csv", oof_csv(cohort, risk, fold));
    SurvivalReport rep = build_report(cohort, risk);
    write_survival_report(rep, run_dir / "report");
    csv::write_text(run_dir / "report" / "summary.json",
                    summary_json(cohort.manifest.name, rd.k, per_fold, cohort.records.size(), cohort.event_count(),
                                 count_params(rd.checkpoints.front().params.config).reduction_ratio));
    return rep;
  });
}

std::vector<CohortAttribution> run_attribute(const fs::path& manifest, const fs::path& run_dir,
                                             const std::vector<AttributionMethod>& methods, std::size_t steps) {
  const Cohort cohort = staged("load cohort", [&] { return load_cohort(manifest); });
  const RunDir rd = staged("load run", [&] { return load_run(run_dir); });
  return staged("attribute", [&] {
    for (std::size_t f = 0; f < rd.k; ++f) check_schema(rd.checkpoints[f], cohort, f);
    const auto groups = held_out(rd, cohort);
    std::vector<std::vector<ProcessedRecord>> processed(rd.k);
    for (std::size_t f = 0; f < rd.k; ++f)
      processed[f] = apply_preprocess(pick(cohort, groups[f]), rd.checkpoints[f].preprocess);

    std::vector<CohortAttribution> all;
    json summary = json::object();
    for (AttributionMethod method : methods) {
      std::vector<AttributionResult> patients(cohort.records.size());
      std::vector<double> risks(cohort.records.size(), 0.0);
      for (std::size_t f = 0; f < rd.k; ++f) {
        if (processed[f].empty()) continue;
        const auto ca = cohort_attribution(rd.checkpoints[f].params, processed[f], method, steps);
        for (std::size_t j = 0; j < groups[f].size(); ++j) {
          patients[groups[f][j]] = ca.patients[j];
          risks[groups[f][j]] = ca.risks[j];
        }
      }
      CohortAttribution pooled = summarize_attribution(method, std::move(patients), std::move(risks));
      const std::string name(method_name(method));
      csv::write_text(run_dir / "report" / ("attribution_" + name + ".csv"), attribution_csv(pooled.patients));
      json mj;
      std::size_t fallbacks = 0;
      for (const auto& p : pooled.patients) fallbacks += p.fallback;
      for (Modality m : kModalities) {
        const auto& s = pooled.summary[index_of(m)];
        mj[std::string(modality_name(m))] = {
            {"mean", s.mean},   {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"stdev", s.stdev},
            {"risk_correlation", s.risk_correlation ? json(*s.risk_correlation) : json()}};
      }
      json ranking = json::array();
      for (Modality m : pooled.ranking()) ranking.push_back(std::string(modality_name(m)));
      mj["ranking"] = ranking;
      mj["fallback_count"] = fallbacks;
      summary[name] = mj;
      all.push_back(std::move(pooled));
    }
    if (!methods.empty()) summary["steps"] = steps;
    csv::write_text(run_dir / "report" / "attribution_summary.json", summary.dump(2) + "\n");
    return all;
  });
}

std::vector<AttributionMethod> parse_methods(const std::string& list) {
  if (list == "all") return {kAttributionMethods.begin(), kAttributionMethods.end()};
  std::vector<AttributionMethod> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const AttributionMethod m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) fail(ErrorCode::InvalidConfig, "no attribution methods given");
  return out;
}

}  // namespace eagle::app
