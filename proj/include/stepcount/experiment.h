#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepcount/augment.h"
#include "stepcount/dataset.h"
#include "stepcount/dsp_features.h"
#include "stepcount/estimators.h"
#include "stepcount/eval_metrics.h"
#include "stepcount/trainer.h"
#include "stepcount/windowing.h"

namespace stepcount {

struct ExperimentConfig {
  std::string manifest;
  std::string output_dir = "run";
  std::uint64_t seed = 0;
  double window_len_s = 5.0;
  WindowStrategy strategy = WindowStrategy::fixed;
  EstimatorKind estimator = EstimatorKind::cnn;
  std::string fold = "s0";  // fold used by train/eval
  int n_folds = 5;
  FeatureConfig features;
  TrainConfig train;  // window, strategy, seed and augment are filled from the fields above
  AugmentSpec augment;
  PeakPickConfig peakpick;

  void validate() const;
  // TrainConfig with the experiment-level fields applied.
  TrainConfig resolved_train() const;
  // Hash of the resolved config, excluding paths.
  std::string hash() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Unknown keys and type mismatches raise ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& j);
// JSON syntax errors are reported with line and column.
ExperimentConfig load_config(const std::filesystem::path& path);

struct PreparedData {
  std::vector<WindowSample> samples;
  std::vector<FoldSplit> splits;
};

PreparedData prepare_samples(const Dataset& ds, const ExperimentConfig& cfg);

struct TrainRunResult {
  TrainHistory history;
  std::string checkpoint_hash;
};

// Each writes config.resolved.json into cfg.output_dir plus its own artifacts.
TrainRunResult run_train(const ExperimentConfig& cfg);
MetricsReport run_eval(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint);
CvResult run_cv(const ExperimentConfig& cfg);
CvResult run_cv(const ExperimentConfig& cfg, const Dataset& ds);

struct AblationGrid {
  std::vector<double> window_lens;
  std::vector<WindowStrategy> strategies;
  std::vector<AugmentSpec> augments;

  static AblationGrid from_json(const nlohmann::json& j);
  std::size_t cell_count() const { return window_lens.size() * strategies.size() * augments.size(); }
};

struct AblationCell {
  double window_len_s = 0.0;
  WindowStrategy strategy = WindowStrategy::fixed;
  AugmentKind augment = AugmentKind::none;
  std::string name;
  std::string status;  // "ok" or "failed: ..."
  std::optional<MetricsReport> report;
};

std::vector<AblationCell> run_ablate(const ExperimentConfig& cfg, const AblationGrid& grid);
// Markdown table with MAE, cMAE, PCC and baseline columns per cell.
std::string ablation_table(const std::vector<AblationCell>& cells);

// Writes one cache file per window plus features/index.jsonl.
std::size_t run_featurize(const ExperimentConfig& cfg);

}  // namespace stepcount
