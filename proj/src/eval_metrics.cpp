#include "stepcount/eval_metrics.h"

#include <cmath>
#include <algorithm>
#include <future>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "stepcount/errors.h"
#include "stepcount/util.h"

namespace stepcount {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) throw InvalidInputError("metric inputs differ in length");
  if (a.size() < min_len) throw InvalidInputError("metric inputs too short");
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

double cmae(double mae_value, double window_len_s, double reference_len_s) {
  if (!(window_len_s > 0.0)) throw InvalidInputError("cMAE needs a positive window length");
  return mae_value * (reference_len_s / window_len_s);
}

double pcc(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, 2);
  auto constant = [](std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
  };
  if (constant(pred) || constant(truth)) throw UndefinedCorrelationError("correlation undefined for constant input");
  const double n = static_cast<double>(pred.size());
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp;
    const double dt = truth[i] - mt;
    sxy += dp * dt;
    sxx += dp * dp;
    syy += dt * dt;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> try_pcc(std::span<const double> pred, std::span<const double> truth) {
  try {
    return pcc(pred, truth);
  } catch (const UndefinedCorrelationError&) {
    return std::nullopt;
  }
}

MetricSet compute_metrics(std::span<const double> pred, std::span<const double> truth, double window_len_s) {
  MetricSet m;
  m.mae = mae(pred, truth);
  m.cmae = cmae(m.mae, window_len_s);
  m.pcc = pred.size() >= 2 ? try_pcc(pred, truth) : std::nullopt;
  return m;
}

void MetricsReport::aggregate_folds() {
  if (per_fold.empty()) throw InvalidInputError("report has no folds");
  auto mean_of = [&](auto getter) {
    MetricSet out;
    bool pcc_defined = true;
    double pcc_sum = 0.0;
    for (const auto& f : per_fold) {
      const MetricSet& m = getter(f);
      out.mae += m.mae;
      out.cmae += m.cmae;
      if (m.pcc) pcc_sum += *m.pcc; else pcc_defined = false;
    }
    const double n = static_cast<double>(per_fold.size());
    out.mae /= n;
    out.cmae /= n;
    if (pcc_defined) out.pcc = pcc_sum / n;
    return out;
  };
  aggregate = mean_of([](const FoldMetrics& f) -> const MetricSet& { return f.model; });
  baseline_aggregate = mean_of([](const FoldMetrics& f) -> const MetricSet& { return f.baseline; });
}

namespace {

nlohmann::json metric_json(const MetricSet& m) {
  nlohmann::json j;
  j["mae"] = m.mae;
  j["cmae"] = m.cmae;
  j["pcc"] = m.pcc ? nlohmann::json(*m.pcc) : nlohmann::json(nullptr);
  return j;
}

MetricSet metric_from_json(const nlohmann::json& j) {
  MetricSet m;
  m.mae = j.at("mae").get<double>();
  m.cmae = j.at("cmae").get<double>();
  if (!j.at("pcc").is_null()) m.pcc = j.at("pcc").get<double>();
  return m;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["window_len_s"] = window_len_s;
  j["strategy"] = strategy;
  j["estimator"] = estimator;
  j["oracle_dependent"] = oracle_dependent;
  auto& folds = j["per_fold"] = nlohmann::json::array();
  for (const auto& f : per_fold) {
    nlohmann::json fj = metric_json(f.model);
    fj["fold_id"] = f.fold_id;
    fj["n_windows"] = f.n_windows;
    fj["baseline"] = metric_json(f.baseline);
    folds.push_back(std::move(fj));
  }
  j["aggregate"] = metric_json(aggregate);
  j["aggregate"]["baseline"] = metric_json(baseline_aggregate);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.window_len_s = j.at("window_len_s").get<double>();
  r.strategy = j.at("strategy").get<std::string>();
  r.estimator = j.at("estimator").get<std::string>();
  r.oracle_dependent = j.at("oracle_dependent").get<bool>();
  for (const auto& fj : j.at("per_fold")) {
    FoldMetrics f;
    f.fold_id = fj.at("fold_id").get<std::string>();
    f.n_windows = fj.at("n_windows").get<std::size_t>();
    f.model = metric_from_json(fj);
    f.baseline = metric_from_json(fj.at("baseline"));
    r.per_fold.push_back(std::move(f));
  }
  r.aggregate = metric_from_json(j.at("aggregate"));
  r.baseline_aggregate = metric_from_json(j.at("aggregate").at("baseline"));
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream ss;
  ss.precision(10);
  auto pcc_text = [](const std::optional<double>& p) { return p ? std::to_string(*p) : std::string(); };
  ss << "fold_id,n_windows,mae,cmae,pcc,baseline_mae,baseline_cmae,window_len_s,strategy,estimator,oracle_dependent\n";
  auto row = [&](const std::string& id, std::size_t n, const MetricSet& m, const MetricSet& b) {
    ss << id << ',' << n << ',' << m.mae << ',' << m.cmae << ',' << pcc_text(m.pcc) << ',' << b.mae << ','
       << b.cmae << ',' << window_len_s << ',' << strategy << ',' << estimator << ','
       << (oracle_dependent ? "true" : "false") << '\n';
  };
  std::size_t total = 0;
  for (const auto& f : per_fold) {
    row(f.fold_id, f.n_windows, f.model, f.baseline);
    total += f.n_windows;
  }
  row("mean", total, aggregate, baseline_aggregate);
  return ss.str();
}

FoldOutput run_fold(std::span<const WindowSample> samples, const FoldSplit& fold, const CvConfig& cfg,
                    FoldMetrics* metrics) {
  const auto train_idx = select_samples(samples, fold.train);
  const auto test_idx = select_samples(samples, fold.test);
  if (train_idx.empty()) throw InvalidInputError(fold.fold_id + ": no training windows");
  if (test_idx.empty()) throw InvalidInputError(fold.fold_id + ": no test windows");

  std::vector<int> train_labels;
  for (std::size_t i : train_idx) train_labels.push_back(samples[i].label_steps);
  const NaiveBaseline naive = NaiveBaseline::fit(train_labels);

  FoldOutput out;
  out.fold_id = fold.fold_id;
  for (std::size_t i : test_idx) out.truth.push_back(samples[i].label_steps);

  switch (cfg.estimator) {
    case EstimatorKind::naive:
      out.predictions.assign(test_idx.size(), naive.predict());
      break;
    case EstimatorKind::peakpick: {
      const PeakPickEstimator pp(cfg.peakpick);
      for (std::size_t i : test_idx) {
        if (samples[i].audio.empty()) throw InvalidInputError("peakpick needs window audio");
        out.predictions.push_back(pp.count(Waveform(samples[i].audio, kCanonicalSampleRate)));
      }
      break;
    }
    case EstimatorKind::cnn: {
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.train.seed, {fnv1a64(fold.fold_id)});
      CnnRegressor init(derive_seed(cfg.model_seed, {fnv1a64(fold.fold_id)}), cfg.feature_hash);
      TrainResult trained = train(std::move(init), samples, fold, tc);
      std::vector<const MelSpectrogram*> feats;
      for (std::size_t i : test_idx) feats.push_back(&samples[i].features);
      out.predictions = trained.model.predict(feats);
      out.history = std::move(trained.history);
      out.model = std::move(trained.model);
      break;
    }
  }

  if (metrics != nullptr) {
    metrics->fold_id = fold.fold_id;
    metrics->n_windows = test_idx.size();
    const double w = cfg.train.window_len_s;
    metrics->model = compute_metrics(out.predictions, out.truth, w);
    const std::vector<double> base(test_idx.size(), naive.predict());
    metrics->baseline = compute_metrics(base, out.truth, w);
  }
  return out;
}

CvResult cross_validate(std::span<const WindowSample> samples, const std::vector<FoldSplit>& splits,
                        const CvConfig& cfg) {
  if (splits.empty()) throw InvalidInputError("cross-validation needs at least one fold");
  std::map<std::string, std::string> runner_of;
  for (const auto& s : samples) runner_of[s.recording_id] = s.runner_id;
  for (const auto& f : splits) {
    std::set<std::string> tr, va, te;
    for (const auto& id : f.train) tr.insert(runner_of[id]);
    for (const auto& id : f.validation) va.insert(runner_of[id]);
    for (const auto& id : f.test) te.insert(runner_of[id]);
    for (const auto& r : te) {
      if (tr.contains(r) || va.contains(r)) {
        throw InvalidInputError(f.fold_id + ": runner '" + r + "' appears in test and another partition");
      }
    }
    for (const auto& r : va) {
      if (tr.contains(r)) throw InvalidInputError(f.fold_id + ": runner '" + r + "' in train and validation");
    }
  }

  CvResult result;
  result.folds.resize(splits.size());
  result.report.per_fold.resize(splits.size());
  const unsigned workers = std::max(1u, cfg.workers);
  for (std::size_t start = 0; start < splits.size(); start += workers) {
    std::vector<std::future<void>> jobs;
    for (std::size_t k = start; k < std::min(splits.size(), start + workers); ++k) {
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, [&, k] {
        result.folds[k] = run_fold(samples, splits[k], cfg, &result.report.per_fold[k]);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  MetricsReport& r = result.report;
  r.window_len_s = cfg.train.window_len_s;
  r.strategy = to_string(cfg.train.strategy);
  r.estimator = to_string(cfg.estimator);
  r.oracle_dependent = cfg.train.strategy == WindowStrategy::step_aligned;
  r.config_hash = cfg.config_hash;
  r.aggregate_folds();
  return result;
}

}  // namespace stepcount
