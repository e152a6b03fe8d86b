#include "stepcount/cli.h"

#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "stepcount/dataset.h"
#include "stepcount/errors.h"
#include "stepcount/experiment.h"
#include "stepcount/synth_corpus.h"
#include "stepcount/util.h"

namespace stepcount {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Overrides {
  std::string config;
  std::optional<std::string> manifest;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> window;
  std::optional<std::string> strategy;
  std::optional<std::string> estimator;
  std::optional<std::string> fold;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<std::string> augment;
  std::optional<double> alpha;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Experiment config (JSON)");
    cmd->add_option("--manifest", manifest, "Dataset manifest");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--seed", seed, "Seed");
    cmd->add_option("--window", window, "Window length in seconds");
    cmd->add_option("--strategy", strategy, "fixed | step_aligned");
    cmd->add_option("--estimator", estimator, "naive | peakpick | cnn");
    cmd->add_option("--fold", fold, "Fold id for train/eval");
    cmd->add_option("--epochs", epochs, "Epoch cap");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--lr", lr, "Initial learning rate");
    cmd->add_option("--augment", augment, "none | spec_mask | filter_aug | mixup");
    cmd->add_option("--alpha", alpha, "Mixup Beta parameter");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : load_config(config);
    if (manifest) c.manifest = *manifest;
    if (out) c.output_dir = *out;
    if (seed) c.seed = *seed;
    if (window) c.window_len_s = *window;
    if (strategy) c.strategy = parse_strategy(*strategy);
    if (estimator) c.estimator = parse_estimator(*estimator);
    if (fold) c.fold = *fold;
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (lr) c.train.lr = *lr;
    if (augment) c.augment.kind = parse_augment_kind(*augment);
    if (alpha) c.augment.alpha = *alpha;
    return c;
  }
};

std::string pcc_text(const std::optional<double>& p) {
  if (!p) return "null";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << *p;
  return s.str();
}

void print_report(const MetricsReport& r, std::ostream& out) {
  out << std::fixed << std::setprecision(3);
  out << "estimator " << r.estimator << ", window " << r.window_len_s << " s, strategy " << r.strategy
      << (r.oracle_dependent ? " (oracle_dependent)" : "") << '\n';
  out << "fold    n     MAE    cMAE   PCC    base MAE\n";
  for (const auto& f : r.per_fold) {
    out << std::left << std::setw(6) << f.fold_id << std::right << std::setw(4) << f.n_windows << "  "
        << std::setw(6) << f.model.mae << "  " << std::setw(6) << f.model.cmae << "  " << std::setw(5)
        << pcc_text(f.model.pcc) << "  " << std::setw(6) << f.baseline.mae << '\n';
  }
  out << "mean          " << std::setw(6) << r.aggregate.mae << "  " << std::setw(6) << r.aggregate.cmae << "  "
      << std::setw(5) << pcc_text(r.aggregate.pcc) << "  " << std::setw(6) << r.baseline_aggregate.mae << '\n';
}

}  // namespace

int run_cli(int argc, char** argv) { return run_cli(argc, argv, std::cout, std::cerr); }

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Step-count estimation from running audio"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic running-audio corpus");
  std::string synth_out = "corpus";
  int runners = 10;
  int per_runner = 2;
  std::uint64_t synth_seed = 0;
  ProfileRanges ranges;
  std::optional<double> jitter;
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--runners", runners, "Number of runners");
  synth->add_option("--per-runner", per_runner, "Recordings per runner");
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--duration", ranges.duration_s, "Recording length in seconds");
  synth->add_option("--cadence-min", ranges.cadence_spm.lo, "Lowest cadence (spm)");
  synth->add_option("--cadence-max", ranges.cadence_spm.hi, "Highest cadence (spm)");
  synth->add_option("--jitter", jitter, "Fixed inter-step jitter for every recording");
  synth->add_option("--noise-min", ranges.noise_floor_db.lo, "Lowest noise floor (dBFS)");
  synth->add_option("--noise-max", ranges.noise_floor_db.hi, "Highest noise floor (dBFS)");

  Overrides feat_o, train_o, eval_o, cv_o, ablate_o;
  auto* featurize = app.add_subcommand("featurize", "Cache log-mel features for every window");
  feat_o.attach(featurize);
  auto* train_cmd = app.add_subcommand("train", "Train the CNN on one fold");
  train_o.attach(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate an estimator on one fold");
  eval_o.attach(eval_cmd);
  std::optional<std::string> checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "CNN checkpoint");
  auto* cv_cmd = app.add_subcommand("cv", "Cross-validate over all folds");
  cv_o.attach(cv_cmd);
  auto* ablate = app.add_subcommand("ablate", "Run a grid of cross-validations");
  ablate_o.attach(ablate);
  std::string grid_path;
  ablate->add_option("--grid", grid_path, "Grid spec (JSON)")->required();

  auto* report = app.add_subcommand("report", "Print a saved report");
  std::string report_path;
  std::uint64_t report_seed = 0;
  report->add_option("path", report_path, "report.json or ablation.json")->required();
  report->add_option("--seed", report_seed, "Unused; accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      if (runners <= 0) throw ConfigError("--runners must be positive");
      if (per_runner <= 0) throw ConfigError("--per-runner must be positive");
      if (!(ranges.duration_s > 0.0)) throw ConfigError("--duration must be positive");
      if (jitter) ranges.cadence_jitter = {*jitter, *jitter};
      const auto corpus = synth_corpus(runners, per_runner, ranges, synth_seed);
      write_corpus(corpus, synth_out);
      const auto cad = corpus_runner_cadences(runners, ranges, synth_seed);
      const auto [lo, hi] = std::minmax_element(cad.begin(), cad.end());
      out << std::fixed << std::setprecision(1) << "wrote " << corpus.size() << " recordings from " << runners
          << " runners to " << synth_out << " (cadence " << *lo << "-" << *hi << " spm)\n";
    } else if (*featurize) {
      const auto n = run_featurize(feat_o.resolve());
      out << "cached " << n << " windows\n";
    } else if (*train_cmd) {
      const ExperimentConfig cfg = train_o.resolve();
      const auto r = run_train(cfg);
      out << "trained " << r.history.epochs.size() << " epochs (" << r.history.stop_reason << "), best epoch "
          << r.history.best_epoch << ", val MSE " << r.history.best_val_loss << ", checkpoint " << r.checkpoint_hash
          << '\n';
    } else if (*eval_cmd) {
      std::optional<fs::path> ck;
      if (checkpoint) ck = *checkpoint;
      print_report(run_eval(eval_o.resolve(), ck), out);
    } else if (*cv_cmd) {
      print_report(run_cv(cv_o.resolve()).report, out);
    } else if (*ablate) {
      if (!fs::exists(grid_path)) throw ConfigError("grid spec not found: " + grid_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(grid_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(grid_path + ": " + e.what());
      }
      const auto cells = run_ablate(ablate_o.resolve(), AblationGrid::from_json(j));
      out << ablation_table(cells);
    } else if (*report) {
      if (!fs::exists(report_path)) throw ConfigError("report not found: " + report_path);
      const auto j = nlohmann::json::parse(read_file(report_path));
      if (j.is_array()) {
        std::vector<AblationCell> cells;
        for (const auto& jc : j) {
          AblationCell c;
          c.name = jc.at("cell").get<std::string>();
          c.window_len_s = jc.at("window_len_s").get<double>();
          c.strategy = parse_strategy(jc.at("strategy").get<std::string>());
          c.augment = parse_augment_kind(jc.at("augment").get<std::string>());
          c.status = jc.at("status").get<std::string>();
          if (jc.contains("report")) c.report = MetricsReport::from_json(jc.at("report"));
          cells.push_back(std::move(c));
        }
        out << ablation_table(cells);
      } else {
        print_report(MetricsReport::from_json(j), out);
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace stepcount
