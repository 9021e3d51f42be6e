#include <cstdio>
#include <sstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "eagle/app.hpp"
#include "eagle/error.hpp"

namespace {

std::string describe(const eagle::Modality m) { return std::string(eagle::modality_name(m)); }

std::vector<eagle::Modality> parse_signal_modalities(const std::string& list) {
  if (list == "all") return {eagle::kModalities.begin(), eagle::kModalities.end()};
  std::vector<eagle::Modality> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(eagle::parse_modality(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"EAGLE multimodal survival modelling: synthesize cohorts, train with stratified cross-validation,\n"
               "evaluate risk groups and attribute predictions to modalities."};
  cli.footer("Presets:\n" + eagle::app::preset_table());
  cli.require_subcommand(1);
  cli.fallthrough();

  std::uint64_t seed = 0;
  std::string out = "eagle_out";
  std::string config;
  std::string preset = "gbm";
  std::size_t k = 5;
  cli.add_option("--seed", seed, "Seed for every random stream")->capture_default_str();
  cli.add_option("--out", out, "Output directory (cohort for synth, run directory otherwise)")->capture_default_str();
  cli.add_option("--config", config, "JSON overrides: {\"model\": {...}, \"train\": {...}, \"k\": n}");
  cli.add_option("--preset", preset, "Dataset preset")
      ->check(CLI::IsMember({"gbm", "ipmn", "nsclc", "custom"}))
      ->capture_default_str();
  auto* k_opt = cli.add_option("--k", k, "Number of cross-validation folds")->capture_default_str();

  eagle::SynthConfig sc;
  std::string signal_modalities = "all";
  auto* synth = cli.add_subcommand("synth", "Generate a synthetic cohort with known latent risk");
  synth->add_option("--n", sc.n, "Number of patients")->capture_default_str();
  synth->add_option("--signal", sc.signal_strength, "Log-hazard coefficient of the latent risk")->capture_default_str();
  synth->add_option("--signal-modalities", signal_modalities,
                    "Modalities carrying the signal: all or a comma list of imaging,text,clinical")
      ->capture_default_str();
  synth->add_option("--imaging-dim", sc.imaging_dim, "Imaging embedding width")->capture_default_str();
  synth->add_option("--text-dim", sc.text_dim, "Text embedding width")->capture_default_str();
  synth->add_option("--clinical-dim", sc.clinical_dim, "Numeric clinical columns")->capture_default_str();
  synth->add_option("--censor-max", sc.censor_max, "Censoring times are uniform on [0, censor-max]")
      ->capture_default_str();
  synth->add_option("--noise", sc.noise_scale, "Feature noise standard deviation")->capture_default_str();
  synth->add_option("--missing-rate", sc.missing_rate, "Fraction of missing clinical cells")->capture_default_str();

  std::string manifest;
  bool parallel = false;
  auto* train = cli.add_subcommand("train", "Stratified k-fold training; writes checkpoints, logs and the report");
  train->add_option("--manifest", manifest, "Cohort manifest.json")->required();
  train->add_flag("--parallel-folds", parallel, "Train folds concurrently");

  auto* evaluate = cli.add_subcommand("evaluate", "Re-score a run out of fold: tertiles, Kaplan-Meier, log-rank");
  evaluate->add_option("--manifest", manifest, "Cohort manifest.json")->required();

  std::string methods = "all";
  std::size_t steps = eagle::kDefaultIgSteps;
  auto* attribute = cli.add_subcommand("attribute", "Per-patient modality attribution for a finished run");
  attribute->add_option("--manifest", manifest, "Cohort manifest.json")->required();
  attribute->add_option("--methods", methods, "all, or a comma list of simple,gradient,integrated_gradients")
      ->capture_default_str();
  attribute->add_option("--steps", steps, "Integrated-gradient Riemann steps")->capture_default_str();

  CLI11_PARSE(cli, argc, argv);

  std::string stage = cli.get_subcommands().front()->get_name();
  try {
    if (synth->parsed()) {
      sc.seed = seed;
      sc.signal_modalities = parse_signal_modalities(signal_modalities);
      const auto res = eagle::app::run_synth(sc, out);
      std::printf("wrote %s\n", res.manifest.string().c_str());
      std::printf("ground-truth C-index (fold ceiling): %.4f\n", res.ground_truth_cindex);
      std::printf("signal modalities:");
      for (auto m : sc.signal_modalities) std::printf(" %s", describe(m).c_str());
      std::printf("\n");
    } else if (train->parsed()) {
      const auto cfg = eagle::app::resolve_config(
          preset, config.empty() ? std::nullopt : std::optional<std::filesystem::path>(config), seed,
          k_opt->count() ? std::optional<std::size_t>(k) : std::nullopt);
      const auto res = eagle::app::run_train(manifest, cfg, out, parallel,
                                             [](const std::string& w) { std::fprintf(stderr, "warning: %s\n", w.c_str()); });
      for (std::size_t f = 0; f < res.cv.cindex_per_fold.size(); ++f)
        std::printf("fold %zu: C-index %.4f (best epoch %zu, %s)\n", f, res.cv.cindex_per_fold[f],
                    res.cv.folds[f].report.best_epoch, res.cv.folds[f].report.stop_reason.c_str());
      std::printf("C-index %s over %zu folds\n", eagle::format_mean_std(res.cv.cindex_mean, res.cv.cindex_std).c_str(),
                  cfg.k);
      if (res.report.logrank) std::printf("log-rank across tertiles: p = %.3g\n", res.report.logrank->p_value);
      std::printf("dimensionality reduction: %.2f%%\n", 100.0 * res.reduction_ratio);
      std::printf("run written to %s\n", out.c_str());
    } else if (evaluate->parsed()) {
      const auto rep = eagle::app::run_evaluate(manifest, out);
      std::printf("out-of-fold C-index (pooled): %.4f\n", rep.cindex);
      for (std::size_t g = 0; g < 3; ++g) {
        const auto& med = rep.median_survival[g];
        std::printf("%-6s n=%zu median survival %s\n", eagle::risk_level_name(eagle::kRiskLevels[g]),
                    rep.strata.groups[g].members.size(), med ? std::to_string(*med).c_str() : "not reached");
      }
      if (rep.logrank) std::printf("log-rank: chi2 = %.4f, df = %zu, p = %.3g\n", rep.logrank->statistic,
                                   rep.logrank->df, rep.logrank->p_value);
      for (const auto& w : rep.strata.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    } else if (attribute->parsed()) {
      const auto list = eagle::app::parse_methods(methods);
      const auto results = eagle::app::run_attribute(manifest, out, list, steps);
      for (const auto& r : results) {
        std::printf("%s:", std::string(eagle::method_name(r.method)).c_str());
        for (auto m : eagle::kModalities)
          std::printf(" %s %.1f%%", describe(m).c_str(), r.summary[eagle::index_of(m)].mean);
        std::printf("\n");
      }
    }
  } catch (const eagle::Error& e) {
    std::fprintf(stderr, "eagle %s: error: %s\n", stage.c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "eagle %s: error: %s\n", stage.c_str(), e.what());
    return 2;
  }
  return 0;
}
