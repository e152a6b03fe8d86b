#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepcount/estimators.h"
#include "stepcount/trainer.h"
#include "stepcount/windowing.h"

namespace stepcount {

constexpr double kReferenceWindowSeconds = 20.0;

double mae(std::span<const double> pred, std::span<const double> truth);

// MAE rescaled to the reference window: mae * reference_len / window_len.
double cmae(double mae_value, double window_len_s, double reference_len_s = kReferenceWindowSeconds);

// Pearson correlation. Throws UndefinedCorrelationError if either input has
// zero variance.
double pcc(std::span<const double> pred, std::span<const double> truth);
std::optional<double> try_pcc(std::span<const double> pred, std::span<const double> truth);

struct MetricSet {
  double mae = 0.0;
  double cmae = 0.0;
  std::optional<double> pcc;  // null when undefined
};

MetricSet compute_metrics(std::span<const double> pred, std::span<const double> truth, double window_len_s);

struct FoldMetrics {
  std::string fold_id;
  MetricSet model;
  MetricSet baseline;  // naive baseline fitted on the same fold's training labels
  std::size_t n_windows = 0;
};

struct MetricsReport {
  std::vector<FoldMetrics> per_fold;
  MetricSet aggregate;
  MetricSet baseline_aggregate;
  std::string config_hash;
  double window_len_s = 5.0;
  std::string strategy = "fixed";
  std::string estimator = "naive";
  bool oracle_dependent = false;

  // Recomputes both aggregates as arithmetic means over per_fold. An aggregate
  // PCC is null if any fold's PCC is null.
  void aggregate_folds();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  // One row per fold plus a "mean" row.
  std::string to_csv() const;
};

struct CvConfig {
  EstimatorKind estimator = EstimatorKind::cnn;
  TrainConfig train;
  PeakPickConfig peakpick;
  std::uint64_t model_seed = 0;
  std::uint64_t feature_hash = 0;
  std::string config_hash;
  unsigned workers = 1;
};

struct FoldOutput {
  std::string fold_id;
  std::vector<double> predictions;
  std::vector<double> truth;
  std::optional<TrainHistory> history;
  std::optional<CnnRegressor> model;
};

struct CvResult {
  MetricsReport report;
  std::vector<FoldOutput> folds;
};

// Evaluates one estimator on one fold's test partition (training it first for
// the cnn estimator), plus the fold's naive baseline.
FoldOutput run_fold(std::span<const WindowSample> samples, const FoldSplit& fold, const CvConfig& cfg,
                    FoldMetrics* metrics);

// Runs every fold, optionally in parallel; the result is independent of the
// worker count.
CvResult cross_validate(std::span<const WindowSample> samples, const std::vector<FoldSplit>& splits,
                        const CvConfig& cfg);

}  // namespace stepcount
