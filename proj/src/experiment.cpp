#include "stepcount/experiment.h"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stepcount/checkpoint.h"
#include "stepcount/errors.h"
#include "stepcount/util.h"

namespace stepcount {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  if (!(window_len_s > 0.0)) throw ConfigError("window_len_s must be positive");
  if (n_folds < 2) throw ConfigError("n_folds must be >= 2");
  features.validate();
  resolved_train().validate();
  peakpick.validate(features.sample_rate_hz);
}

TrainConfig ExperimentConfig::resolved_train() const {
  TrainConfig t = train;
  t.window_len_s = window_len_s;
  t.strategy = strategy;
  t.seed = seed;
  t.augment = augment;
  t.augment.seed = seed;
  return t;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["manifest"] = c.manifest;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["window_len_s"] = c.window_len_s;
  j["strategy"] = to_string(c.strategy);
  j["estimator"] = to_string(c.estimator);
  j["fold"] = c.fold;
  j["n_folds"] = c.n_folds;
  const auto& f = c.features;
  j["features"] = {{"sample_rate_hz", f.sample_rate_hz}, {"fft_size", f.fft_size},
                   {"win_length", f.win_length},         {"hop_length", f.hop_length},
                   {"mel_bins", f.mel_bins},             {"fmin_hz", f.fmin_hz},
                   {"fmax_hz", f.fmax_hz},               {"log_floor", f.log_floor},
                   {"per_window_norm", f.per_window_norm}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"scheduler_patience", t.scheduler_patience},
                {"scheduler_factor", t.scheduler_factor},
                {"min_lr", t.min_lr},
                {"divergence_patience", t.divergence_patience}};
  const auto& a = c.augment;
  j["augment"] = {{"kind", to_string(a.kind)},
                  {"n_masks", a.n_masks},
                  {"time_mask_frames", a.time_mask_frames},
                  {"freq_mask_bins", a.freq_mask_bins},
                  {"n_bands", a.n_bands},
                  {"gain_db_lo", a.gain_db_lo},
                  {"gain_db_hi", a.gain_db_hi},
                  {"alpha", a.alpha}};
  const auto& p = c.peakpick;
  j["peakpick"] = {{"band_lo_hz", p.band_lo_hz},
                   {"band_hi_hz", p.band_hi_hz},
                   {"envelope_smooth_ms", p.envelope_smooth_ms},
                   {"peak_min_distance_s", p.peak_min_distance_s},
                   {"threshold_k", p.threshold_k}};
  return j;
}

std::string ExperimentConfig::hash() const {
  json j = config_to_json(*this);
  j.erase("manifest");
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config field '" + label() + "': expected an object");
  }

  template <typename V>
  void read(const char* key, V& dst) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    const std::string where = path_.empty() ? key : path_ + "." + key;
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw ConfigError("config field '" + where + "': expected a boolean");
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) throw ConfigError("config field '" + where + "': expected an integer");
      if (std::is_unsigned_v<V> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
        throw ConfigError("config field '" + where + "': expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) throw ConfigError("config field '" + where + "': expected a number");
    } else {
      if (!v.is_string()) throw ConfigError("config field '" + where + "': expected a string");
    }
    dst = v.get<V>();
  }

  FieldReader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return FieldReader(obj_.contains(key) ? obj_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.contains(k)) {
        throw ConfigError("config field '" + (path_.empty() ? k : path_ + "." + k) + "': unknown key");
      }
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  FieldReader root(j, "");
  root.read("manifest", c.manifest);
  root.read("output_dir", c.output_dir);
  root.read("seed", c.seed);
  root.read("window_len_s", c.window_len_s);
  std::string strategy = to_string(c.strategy);
  root.read("strategy", strategy);
  c.strategy = parse_strategy(strategy);
  std::string estimator = to_string(c.estimator);
  root.read("estimator", estimator);
  c.estimator = parse_estimator(estimator);
  root.read("fold", c.fold);
  root.read("n_folds", c.n_folds);

  auto f = root.child("features");
  f.read("sample_rate_hz", c.features.sample_rate_hz);
  f.read("fft_size", c.features.fft_size);
  f.read("win_length", c.features.win_length);
  f.read("hop_length", c.features.hop_length);
  f.read("mel_bins", c.features.mel_bins);
  f.read("fmin_hz", c.features.fmin_hz);
  f.read("fmax_hz", c.features.fmax_hz);
  f.read("log_floor", c.features.log_floor);
  f.read("per_window_norm", c.features.per_window_norm);
  f.finish();

  auto t = root.child("train");
  t.read("epochs", c.train.epochs);
  t.read("batch_size", c.train.batch_size);
  t.read("lr", c.train.lr);
  t.read("scheduler_patience", c.train.scheduler_patience);
  t.read("scheduler_factor", c.train.scheduler_factor);
  t.read("min_lr", c.train.min_lr);
  t.read("divergence_patience", c.train.divergence_patience);
  t.finish();

  auto a = root.child("augment");
  std::string kind = to_string(c.augment.kind);
  a.read("kind", kind);
  c.augment.kind = parse_augment_kind(kind);
  a.read("n_masks", c.augment.n_masks);
  a.read("time_mask_frames", c.augment.time_mask_frames);
  a.read("freq_mask_bins", c.augment.freq_mask_bins);
  a.read("n_bands", c.augment.n_bands);
  a.read("gain_db_lo", c.augment.gain_db_lo);
  a.read("gain_db_hi", c.augment.gain_db_hi);
  a.read("alpha", c.augment.alpha);
  a.finish();

  auto p = root.child("peakpick");
  p.read("band_lo_hz", c.peakpick.band_lo_hz);
  p.read("band_hi_hz", c.peakpick.band_hi_hz);
  p.read("envelope_smooth_ms", c.peakpick.envelope_smooth_ms);
  p.read("peak_min_distance_s", c.peakpick.peak_min_distance_s);
  p.read("threshold_k", c.peakpick.threshold_k);
  p.finish();

  root.finish();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    // nlohmann reports "parse error at line L, column C: ..."
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

PreparedData prepare_samples(const Dataset& ds, const ExperimentConfig& cfg) {
  PreparedData out;
  SampleOptions opts;
  opts.compute_features = cfg.estimator == EstimatorKind::cnn;
  opts.keep_audio = cfg.estimator == EstimatorKind::peakpick;
  for (const auto& rec : ds.recordings) {
    auto s = make_samples(rec.annotations, rec.waveform, cfg.strategy, cfg.window_len_s, cfg.features, opts);
    out.samples.insert(out.samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  if (ds.splits) {
    out.splits = *ds.splits;
  } else {
    out.splits = generate_splits(ds.annotations(), cfg.n_folds, {}, cfg.seed);
  }
  return out;
}

namespace {

Dataset load_for(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (set 'manifest' or --manifest)");
  if (!fs::exists(cfg.manifest)) throw ConfigError("manifest not found: " + cfg.manifest);
  return load_dataset(cfg.manifest, cfg.features.sample_rate_hz);
}

void prepare_output(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  write_file(fs::path(cfg.output_dir) / "config.resolved.json", config_to_json(cfg).dump(2) + "\n");
}

const FoldSplit& find_fold(const std::vector<FoldSplit>& splits, const std::string& id) {
  for (const auto& f : splits) {
    if (f.fold_id == id) return f;
  }
  throw ConfigError("fold '" + id + "' not found in splits");
}

CvConfig cv_config(const ExperimentConfig& cfg) {
  CvConfig cv;
  cv.estimator = cfg.estimator;
  cv.train = cfg.resolved_train();
  cv.peakpick = cfg.peakpick;
  cv.model_seed = cfg.seed;
  cv.feature_hash = cfg.features.hash();
  cv.config_hash = cfg.hash();
  cv.workers = worker_count();
  return cv;
}

std::string scatter_csv(const CvResult& r) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "fold_id,prediction,truth\n";
  for (const auto& f : r.folds) {
    for (std::size_t i = 0; i < f.predictions.size(); ++i) {
      ss << f.fold_id << ',' << f.predictions[i] << ',' << f.truth[i] << '\n';
    }
  }
  return ss.str();
}

}  // namespace

TrainRunResult run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.estimator != EstimatorKind::cnn) throw ConfigError("train only applies to the cnn estimator");
  const Dataset ds = load_for(cfg);
  const PreparedData data = prepare_samples(ds, cfg);
  const FoldSplit& fold = find_fold(data.splits, cfg.fold);
  prepare_output(cfg);

  CnnRegressor init(derive_seed(cfg.seed, {fnv1a64(fold.fold_id)}), cfg.features.hash());
  TrainConfig tc = cfg.resolved_train();
  tc.seed = derive_seed(tc.seed, {fnv1a64(fold.fold_id)});
  TrainResult trained = train(std::move(init), data.samples, fold, tc);

  const fs::path out = cfg.output_dir;
  const auto bytes = encode_checkpoint(trained.model, static_cast<std::uint32_t>(trained.history.best_epoch));
  write_file(out / "checkpoint.bin", std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  write_file(out / "history.json", trained.history.to_json().dump(2) + "\n");
  return {trained.history, hex64(fnv1a64(std::span<const std::uint8_t>(bytes)))};
}

MetricsReport run_eval(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint) {
  cfg.validate();
  std::optional<CnnRegressor> model;
  if (cfg.estimator == EstimatorKind::cnn) {
    if (!checkpoint) throw ConfigError("eval with the cnn estimator needs --checkpoint");
    if (!fs::exists(*checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint->string());
    CheckpointInfo info;
    model = load_checkpoint(*checkpoint, &info);
    if (info.feature_hash != cfg.features.hash()) {
      throw ConfigError("checkpoint feature config hash " + hex64(info.feature_hash) +
                        " does not match the configured features (" + hex64(cfg.features.hash()) + ")");
    }
  }
  const Dataset ds = load_for(cfg);
  const PreparedData data = prepare_samples(ds, cfg);
  const FoldSplit& fold = find_fold(data.splits, cfg.fold);
  prepare_output(cfg);

  const auto train_idx = select_samples(data.samples, fold.train);
  const auto test_idx = select_samples(data.samples, fold.test);
  if (train_idx.empty() || test_idx.empty()) throw InvalidInputError(fold.fold_id + ": empty partition");
  std::vector<int> train_labels;
  for (std::size_t i : train_idx) train_labels.push_back(data.samples[i].label_steps);
  const NaiveBaseline naive = NaiveBaseline::fit(train_labels);

  std::vector<double> truth;
  std::vector<double> pred;
  for (std::size_t i : test_idx) truth.push_back(data.samples[i].label_steps);
  if (cfg.estimator == EstimatorKind::cnn) {
    std::vector<const MelSpectrogram*> feats;
    for (std::size_t i : test_idx) {
      const auto& m = data.samples[i].features;
      if (m.mel_bins() != cfg.features.mel_bins) throw ConfigError("feature geometry mismatch with checkpoint");
      feats.push_back(&m);
    }
    pred = model->predict(feats);
  } else if (cfg.estimator == EstimatorKind::peakpick) {
    const PeakPickEstimator pp(cfg.peakpick);
    for (std::size_t i : test_idx) pred.push_back(pp.count(Waveform(data.samples[i].audio, cfg.features.sample_rate_hz)));
  } else {
    pred.assign(test_idx.size(), naive.predict());
  }

  MetricsReport report;
  FoldMetrics fm;
  fm.fold_id = fold.fold_id;
  fm.n_windows = test_idx.size();
  fm.model = compute_metrics(pred, truth, cfg.window_len_s);
  fm.baseline = compute_metrics(std::vector<double>(truth.size(), naive.predict()), truth, cfg.window_len_s);
  report.per_fold.push_back(fm);
  report.window_len_s = cfg.window_len_s;
  report.strategy = to_string(cfg.strategy);
  report.estimator = to_string(cfg.estimator);
  report.oracle_dependent = cfg.strategy == WindowStrategy::step_aligned;
  report.config_hash = cfg.hash();
  report.aggregate_folds();
  write_file(fs::path(cfg.output_dir) / "report.json", report.to_json().dump(2) + "\n");
  return report;
}

CvResult run_cv(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_cv(cfg, load_for(cfg));
}

CvResult run_cv(const ExperimentConfig& cfg, const Dataset& ds) {
  cfg.validate();
  const PreparedData data = prepare_samples(ds, cfg);
  prepare_output(cfg);
  CvResult result = cross_validate(data.samples, data.splits, cv_config(cfg));

  const fs::path out = cfg.output_dir;
  write_file(out / "report.json", result.report.to_json().dump(2) + "\n");
  write_file(out / "report.csv", result.report.to_csv());
  write_file(out / "scatter.csv", scatter_csv(result));
  write_file(out / "splits.json", splits_to_json(data.splits).dump(2) + "\n");
  for (const auto& f : result.folds) {
    if (f.history) {
      fs::create_directories(out / "folds");
      write_file(out / "folds" / (f.fold_id + ".history.json"), f.history->to_json().dump(2) + "\n");
    }
    if (f.model) {
      save_checkpoint(*f.model, static_cast<std::uint32_t>(f.history ? f.history->best_epoch : 0),
                      out / "folds" / (f.fold_id + ".checkpoint.bin"));
    }
  }
  return result;
}

AblationGrid AblationGrid::from_json(const json& j) {
  AblationGrid g;
  if (!j.is_object()) throw ConfigError("grid spec must be a JSON object");
  try {
    for (const auto& w : j.value("window_lens", json::array())) g.window_lens.push_back(w.get<double>());
    for (const auto& s : j.value("strategies", json::array())) g.strategies.push_back(parse_strategy(s.get<std::string>()));
    for (const auto& a : j.value("augments", json::array())) {
      AugmentSpec spec;
      if (a.is_string()) {
        spec.kind = parse_augment_kind(a.get<std::string>());
      } else {
        json wrapped = {{"augment", a}};
        spec = config_from_json(wrapped).augment;
      }
      g.augments.push_back(spec);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid spec: ") + e.what());
  }
  return g;
}

std::vector<AblationCell> run_ablate(const ExperimentConfig& cfg, const AblationGrid& grid) {
  if (grid.cell_count() == 0) throw ConfigError("ablation grid is empty");
  cfg.validate();
  const Dataset ds = load_for(cfg);
  prepare_output(cfg);

  std::vector<AblationCell> cells;
  for (double w : grid.window_lens) {
    for (WindowStrategy s : grid.strategies) {
      for (const AugmentSpec& a : grid.augments) {
        AblationCell cell;
        cell.window_len_s = w;
        cell.strategy = s;
        cell.augment = a.kind;
        std::ostringstream name;
        name << w << "s_" << to_string(s) << "_" << to_string(a.kind);
        cell.name = name.str();
        ExperimentConfig cc = cfg;
        cc.window_len_s = w;
        cc.strategy = s;
        cc.augment = a;
        cc.output_dir = (fs::path(cfg.output_dir) / cell.name).string();
        try {
          cell.report = run_cv(cc, ds).report;
          cell.status = "ok";
        } catch (const std::exception& e) {
          cell.status = std::string("failed: ") + e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }

  json merged = json::array();
  for (const auto& c : cells) {
    json jc = {{"cell", c.name},
               {"window_len_s", c.window_len_s},
               {"strategy", to_string(c.strategy)},
               {"augment", to_string(c.augment)},
               {"status", c.status}};
    if (c.report) jc["report"] = c.report->to_json();
    merged.push_back(std::move(jc));
  }
  write_file(fs::path(cfg.output_dir) / "ablation.json", merged.dump(2) + "\n");
  write_file(fs::path(cfg.output_dir) / "ablation.md", ablation_table(cells));
  return cells;
}

std::string ablation_table(const std::vector<AblationCell>& cells) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(3);
  auto pcc_text = [](const std::optional<double>& p) {
    if (!p) return std::string("-");
    std::ostringstream t;
    t.setf(std::ios::fixed);
    t.precision(3);
    t << *p;
    return t.str();
  };
  ss << "| window | strategy | augment | MAE | cMAE | PCC | Baseline | Baseline cMAE | oracle_dependent | status |\n";
  ss << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& c : cells) {
    ss << "| " << c.window_len_s << "s | " << to_string(c.strategy) << " | " << to_string(c.augment) << " | ";
    if (c.report) {
      const auto& r = *c.report;
      ss << r.aggregate.mae << " | " << r.aggregate.cmae << " | " << pcc_text(r.aggregate.pcc) << " | "
         << r.baseline_aggregate.mae << " | " << r.baseline_aggregate.cmae << " | "
         << (r.oracle_dependent ? "yes" : "no");
    } else {
      ss << "- | - | - | - | - | " << (c.strategy == WindowStrategy::step_aligned ? "yes" : "no");
    }
    ss << " | " << c.status << " |\n";
  }
  return ss.str();
}

std::size_t run_featurize(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_for(cfg);
  ExperimentConfig fc = cfg;
  fc.estimator = EstimatorKind::cnn;  // forces feature computation
  prepare_output(cfg);
  const fs::path dir = fs::path(cfg.output_dir) / "features";
  fs::create_directories(dir);
  const std::uint64_t hash = cfg.features.hash();
  std::ostringstream index;
  std::size_t count = 0;
  std::map<std::string, int> per_recording;
  for (const auto& rec : ds.recordings) {
    SampleOptions opts;
    const auto samples = make_samples(rec.annotations, rec.waveform, cfg.strategy, cfg.window_len_s, cfg.features, opts);
    for (const auto& s : samples) {
      const int k = per_recording[s.recording_id]++;
      std::ostringstream file;
      file << s.recording_id << "_" << k << ".lmel";
      write_feature_cache(s.features, hash, dir / file.str());
      json entry = {{"file", file.str()},           {"recording_id", s.recording_id},
                    {"runner_id", s.runner_id},     {"start_s", s.window.start_s},
                    {"end_s", s.window.end_s},      {"label_steps", s.label_steps},
                    {"oracle_dependent", s.oracle_dependent}};
      index << entry.dump() << '\n';
      ++count;
    }
  }
  write_file(dir / "index.jsonl", index.str());
  return count;
}

}  // namespace stepcount
