// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "oracles.h"
#include "stepcount/augment.h"
#include "stepcount/dataset.h"
#include "stepcount/dsp_features.h"
#include "stepcount/estimators.h"
#include "stepcount/eval_metrics.h"
#include "stepcount/experiment.h"
#include "stepcount/nn/ops.h"
#include "stepcount/nn/optim.h"
#include "stepcount/synth_corpus.h"
#include "stepcount/util.h"
#include "stepcount/windowing.h"

using namespace stepcount;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1: numerical core -----------------------------------------------------

using nn::Parameter;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Largest |analytic - numeric| / max(1e-5, 1e-3 * scale); <= 1 passes.
double gradient_violation(std::vector<Parameter<double>> ps, const Build& build) {
  auto eval = [&] {
    Tape<double> t;
    std::vector<Var> v;
    for (auto& p : ps) v.push_back(t.parameter(p));
    return t.value(build(t, v))[0];
  };
  for (auto& p : ps) p.zero_grad();
  {
    Tape<double> t;
    std::vector<Var> v;
    for (auto& p : ps) v.push_back(t.parameter(p));
    t.backward(build(t, v));
  }
  double worst = 0.0;
  const double h = 1e-4;
  for (auto& p : ps) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = eval();
      p.value[i] = orig - h;
      const double down = eval();
      p.value[i] = orig;
      const double num = (up - down) / (2 * h);
      const double tol = std::max(1e-5, 1e-3 * std::max(std::fabs(num), std::fabs(p.grad[i])));
      worst = std::max(worst, std::fabs(num - p.grad[i]) / tol);
    }
  }
  return worst;
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto loss = [&](Tape<double>& t, Var y) {
      std::mt19937_64 r(seed + 1000);
      return nn::mse_loss(t, y, random_tensor(t.value(y).shape(), r));
    };
    worst = std::max(worst, gradient_violation({{"x", random_tensor({2, 2, 5, 6}, rng)},
                                                {"w", random_tensor({3, 2, 3, 3}, rng)},
                                                {"b", random_tensor({3}, rng)}},
                                               [&](Tape<double>& t, const std::vector<Var>& v) {
                                                 return loss(t, nn::conv2d(t, v[0], v[1], v[2], {1, 1}));
                                               }));
    worst = std::max(worst, gradient_violation({{"x", random_tensor({1, 2, 7, 8}, rng)},
                                                {"w", random_tensor({2, 2, 3, 3}, rng)}},
                                               [&](Tape<double>& t, const std::vector<Var>& v) {
                                                 return loss(t, nn::conv2d(t, v[0], v[1], Var{}, {1, 2}));
                                               }));
    auto rx = random_tensor({2, 3, 4, 4}, rng);
    for (auto& v : rx.values())
      if (std::fabs(v) < 1e-2) v += v < 0 ? -1e-2 : 1e-2;
    worst = std::max(worst, gradient_violation({{"x", rx}}, [&](Tape<double>& t, const std::vector<Var>& v) {
                       return loss(t, nn::relu(t, v[0]));
                     }));
    worst = std::max(worst, gradient_violation({{"x", random_tensor({2, 2, 6, 8}, rng)}},
                                               [&](Tape<double>& t, const std::vector<Var>& v) {
                                                 return loss(t, nn::avg_pool2d(t, v[0]));
                                               }));
    worst = std::max(worst, gradient_violation({{"x", random_tensor({3, 4, 3, 5}, rng)}},
                                               [&](Tape<double>& t, const std::vector<Var>& v) {
                                                 return loss(t, nn::global_mean_max_pool(t, v[0]));
                                               }));
    worst = std::max(worst, gradient_violation({{"x", random_tensor({4, 6}, rng)},
                                                {"w", random_tensor({3, 6}, rng)},
                                                {"b", random_tensor({3}, rng)}},
                                               [&](Tape<double>& t, const std::vector<Var>& v) {
                                                 return loss(t, nn::linear(t, v[0], v[1], v[2]));
                                               }));
  }

  const FeatureConfig cfg;
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  std::vector<float> x(3000);
  for (auto& v : x) v = u(rng);
  const Waveform w(x, 16000);
  const RealMatrix p = stft_power(w, cfg);
  const auto hann = oracle::periodic_hann(400);
  double stft_err = 0.0, parseval_err = 0.0;
  for (Eigen::Index t = 0; t < p.cols(); ++t) {
    std::vector<double> frame(400);
    double energy = 0.0;
    for (std::size_t i = 0; i < 400; ++i) {
      frame[i] = static_cast<double>(x[t * 160 + i]) * hann[i];
      energy += frame[i] * frame[i];
    }
    const auto ref = oracle::dft_power(frame, 512);
    const double peak = *std::max_element(ref.begin(), ref.end());
    for (std::size_t k = 0; k < ref.size(); ++k) stft_err = std::max(stft_err, std::fabs(p(k, t) - ref[k]) / peak);
    double spec = p(0, t) + p(256, t);
    for (int k = 1; k < 256; ++k) spec += 2.0 * p(k, t);
    parseval_err = std::max(parseval_err, std::fabs(spec / 512.0 - energy) / energy);
  }
  const double elapsed = seconds_since(t0);
  const bool ok = worst <= 1.0 && stft_err <= 1e-5 && parseval_err <= 1e-6 && elapsed < 60.0;
  report(1, ok,
         fmt("grad worst/tol=%.3g over %.0f seeds, stft rel err=%.2g, parseval rel err=%.2g", worst, seeds, stft_err,
             parseval_err) +
             fmt(", %.1f s", elapsed));
}

// ---- 2: windowing oracle equivalence ------------------------------------

void criterion2() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dur_d(0.5, 60.0), win_d(0.25, 20.0), u(0.0, 1.0);
  std::uniform_int_distribution<int> n_d(0, 80);
  int mismatches = 0;
  long windows = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    StepAnnotations a;
    a.recording_duration_s = dur_d(rng);
    const double w = win_d(rng);
    std::set<double> uniq;
    const int n = n_d(rng) + 1;
    for (int i = 0; i < n; ++i) uniq.insert(u(rng) * a.recording_duration_s);
    a.step_times_s.assign(uniq.begin(), uniq.end());

    const auto fw = fixed_windows(a.recording_duration_s, w);
    const auto fo = oracle::fixed_windows(a.recording_duration_s, w);
    if (fw.size() != fo.size()) ++mismatches;
    for (std::size_t i = 0; i < std::min(fw.size(), fo.size()); ++i) {
      if (fw[i].start_s != fo[i].start || fw[i].end_s != fo[i].end) ++mismatches;
      if (count_steps(a, fw[i]) != oracle::count_in(a.step_times_s, fw[i].start_s, fw[i].end_s)) ++mismatches;
    }
    const auto sw = step_aligned_windows(a, w);
    const auto so = oracle::step_aligned_windows(a.step_times_s, w);
    if (sw.size() != so.size()) ++mismatches;
    for (std::size_t i = 0; i < std::min(sw.size(), so.size()); ++i) {
      if (sw[i].start_s != so[i].start || sw[i].end_s != so[i].end) ++mismatches;
      if (count_steps(a, sw[i]) != oracle::count_in(a.step_times_s, sw[i].start_s, sw[i].end_s)) ++mismatches;
    }
    windows += static_cast<long>(fw.size() + sw.size());
  }
  report(2, mismatches == 0, fmt("%.0f annotation sets, %.0f windows, %.0f mismatches", trials, windows, mismatches));
}

// ---- 3: metric identities ------------------------------------------------

void criterion3() {
  struct Row {
    double mae, w, expected;
  };
  bool rows_ok = true;
  std::string detail;
  for (const Row r : {Row{0.847, 5, 3.388}, Row{2.025, 10, 4.050}, Row{4.047, 20, 4.047}}) {
    const double c = cmae(r.mae, r.w);
    rows_ok = rows_ok && std::fabs(c - r.expected) <= 1e-12 && std::round(c * 1000) == std::round(r.expected * 1000);
    detail += fmt("(%.3f, %.0f s) -> %.3f; ", r.mae, r.w, c);
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 30.0), a_d(0.1, 10.0), b_d(-50.0, 50.0);
  double affine_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> p(50), t(50), q(50);
    for (auto& v : p) v = d(rng);
    for (auto& v : t) v = d(rng);
    const double a = a_d(rng), b = b_d(rng);
    for (std::size_t k = 0; k < p.size(); ++k) q[k] = a * p[k] + b;
    affine_err = std::max(affine_err, std::fabs(pcc(q, t) - pcc(p, t)));
  }
  MetricsReport r;
  std::uniform_real_distribution<double> m_d(0.0, 3.0);
  for (int k = 0; k < 5; ++k) {
    FoldMetrics f;
    f.model = {m_d(rng), m_d(rng), m_d(rng) - 1.5};
    f.baseline = {m_d(rng), m_d(rng), m_d(rng) - 1.5};
    r.per_fold.push_back(f);
  }
  r.aggregate_folds();
  double s_mae = 0, s_cmae = 0, s_pcc = 0;
  for (const auto& f : r.per_fold) {
    s_mae += f.model.mae;
    s_cmae += f.model.cmae;
    s_pcc += *f.model.pcc;
  }
  const bool agg_ok = r.aggregate.mae == s_mae / 5 && r.aggregate.cmae == s_cmae / 5 && *r.aggregate.pcc == s_pcc / 5;
  report(3, rows_ok && affine_err <= 1e-12 && agg_ok,
         detail + fmt("pcc affine max err=%.2g, aggregate==mean: ", affine_err) + (agg_ok ? "yes" : "no"));
}

// ---- 4: scheduler ----------------------------------------------------------

void criterion4() {
  nn::PlateauScheduler s;
  s.lr = 1e-3;
  double after6 = 0, after11 = 0;
  for (int epoch = 1; epoch <= 11; ++epoch) {
    s.step(0.5);
    if (epoch == 6) after6 = s.lr;
    if (epoch == 11) after11 = s.lr;
  }
  const bool ok = std::fabs(after6 - 9e-4) <= 1e-15 && std::fabs(after11 - 8.1e-4) <= 1e-15;
  report(4, ok, fmt("lr after epoch 6 = %.6g, after epoch 11 = %.6g", after6, after11));
}

// ---- 5 / 6: end-to-end learning -----------------------------------------

Dataset e2e_dataset(const fs::path& dir) {
  ProfileRanges ranges;
  ranges.cadence_spm = {150.0, 190.0};
  ranges.cadence_jitter = {0.05, 0.05};
  ranges.noise_floor_db = {-45.0, -30.0};
  ranges.duration_s = 60.0;
  write_corpus(synth_corpus(25, 1, ranges, 2024), dir);
  return load_dataset(dir / "manifest.json");
}

ExperimentConfig e2e_config(const fs::path& out, WindowStrategy strategy) {
  ExperimentConfig cfg;
  cfg.output_dir = out.string();
  cfg.seed = 7;
  cfg.window_len_s = 5.0;
  cfg.strategy = strategy;
  cfg.estimator = EstimatorKind::cnn;
  cfg.train.epochs = 30;
  return cfg;
}

void criteria5and6(const fs::path& root) {
  const Dataset ds = e2e_dataset(root / "e2e_corpus");
  const auto t0 = std::chrono::steady_clock::now();
  const CvResult fixed = run_cv(e2e_config(root / "e2e_fixed", WindowStrategy::fixed), ds);
  const double t_fixed = seconds_since(t0);
  const auto& a = fixed.report.aggregate;
  const auto& b = fixed.report.baseline_aggregate;
  const double improvement = 1.0 - a.mae / b.mae;
  const bool ok5 = fixed.report.per_fold.size() == 5 && improvement >= 0.30 && a.pcc && *a.pcc >= 0.6;
  report(5, ok5,
         fmt("cnn MAE=%.3f vs naive MAE=%.3f (%.1f%% lower), ", a.mae, b.mae, 100 * improvement) +
             fmt("PCC=%.3f, %.0f s", a.pcc.value_or(NAN), t_fixed));

  const auto t1 = std::chrono::steady_clock::now();
  const CvResult aligned = run_cv(e2e_config(root / "e2e_aligned", WindowStrategy::step_aligned), ds);
  const double t_aligned = seconds_since(t1);
  const double mae_sa = aligned.report.aggregate.mae;
  const bool ok6 = mae_sa < a.mae && aligned.report.oracle_dependent && !fixed.report.oracle_dependent;
  report(6, ok6,
         fmt("step_aligned MAE=%.3f vs fixed MAE=%.3f, ", mae_sa, a.mae) +
             "oracle_dependent=" + (aligned.report.oracle_dependent ? "true" : "false") + fmt(", %.0f s", t_aligned));
}

// ---- 7: peak picking -------------------------------------------------------

void criterion7() {
  ProfileRanges ranges;
  ranges.cadence_jitter = {0.0, 0.0};
  ranges.step_gain_db = {-12.0, -6.0};
  ranges.noise_floor_db = {-45.0, -35.0};  // at least 23 dB below the step peaks
  ranges.duration_s = 30.0;
  const auto corpus = synth_corpus(12, 1, ranges, 99);
  const PeakPickEstimator pp;
  std::vector<double> pred, truth;
  for (const auto& r : corpus) {
    const auto samples = make_samples(r.annotations, r.waveform, WindowStrategy::fixed, 5.0, FeatureConfig{},
                                      {.compute_features = false, .keep_audio = true});
    for (const auto& s : samples) {
      pred.push_back(pp.count(Waveform(s.audio, r.waveform.sample_rate_hz())));
      truth.push_back(s.label_steps);
    }
  }
  const double m = mae(pred, truth);
  report(7, m <= 1.0, fmt("peakpick MAE=%.3f over %.0f clean 5 s windows", m, static_cast<double>(pred.size())));
}

// ---- 8: reproducibility ----------------------------------------------------

void criterion8(const fs::path& root) {
  ProfileRanges ranges;
  ranges.duration_s = 20.0;
  ranges.cadence_jitter = {0.05, 0.05};
  write_corpus(synth_corpus(5, 1, ranges, 31), root / "repro_corpus");

  auto train_once = [&](const std::string& name) {
    ExperimentConfig cfg;
    cfg.manifest = (root / "repro_corpus" / "manifest.json").string();
    cfg.output_dir = (root / name).string();
    cfg.seed = 123;
    cfg.train.epochs = 3;
    cfg.augment.kind = AugmentKind::mixup;
    return run_train(cfg);
  };
  const auto a = train_once("repro_a");
  const auto b = train_once("repro_b");
  const bool hist_same = read_file(root / "repro_a" / "history.json") == read_file(root / "repro_b" / "history.json");
  const bool ckpt_same = a.checkpoint_hash == b.checkpoint_hash &&
                         read_file(root / "repro_a" / "checkpoint.bin") == read_file(root / "repro_b" / "checkpoint.bin");

  auto cv_once = [&](const std::string& name) {
    ExperimentConfig cfg;
    cfg.manifest = (root / "repro_corpus" / "manifest.json").string();
    cfg.output_dir = (root / name).string();
    cfg.seed = 5;
    cfg.train.epochs = 2;
    cfg.augment.kind = AugmentKind::spec_mask;
    run_cv(cfg);
  };
  cv_once("repro_cv_a");
  cv_once("repro_cv_b");
  bool cv_same = read_file(root / "repro_cv_a" / "report.json") == read_file(root / "repro_cv_b" / "report.json");
  for (int k = 0; k < 5; ++k) {
    const std::string f = "s" + std::to_string(k);
    cv_same = cv_same &&
              read_file(root / "repro_cv_a" / "folds" / (f + ".history.json")) ==
                  read_file(root / "repro_cv_b" / "folds" / (f + ".history.json")) &&
              read_file(root / "repro_cv_a" / "folds" / (f + ".checkpoint.bin")) ==
                  read_file(root / "repro_cv_b" / "folds" / (f + ".checkpoint.bin"));
  }
  report(8, hist_same && ckpt_same && cv_same,
         std::string("train history identical: ") + (hist_same ? "yes" : "no") + ", checkpoint hash " + a.checkpoint_hash +
             (ckpt_same ? " (identical)" : " (differs)") + ", cv artifacts identical: " + (cv_same ? "yes" : "no"));
}

// ---- 9: augmentation identities -----------------------------------------

void criterion9() {
  std::mt19937 rng(3);
  std::normal_distribution<float> d(0.0f, 2.0f);
  bool mix_ok = true, filt_ok = true, mask_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    MelSpectrogram a, b;
    a.values.resize(64, 500);
    b.values.resize(64, 500);
    for (Eigen::Index i = 0; i < a.values.size(); ++i) {
      a.values.data()[i] = d(rng);
      b.values.data()[i] = d(rng);
    }
    const auto m = mixup(a.values, 13.0, b.values, 16.0, 1.0);
    mix_ok = mix_ok && m.features == a.values && m.label == 13.0;

    AugmentRng arng(trial);
    AugmentSpec fa;
    fa.kind = AugmentKind::filter_aug;
    fa.gain_db_lo = fa.gain_db_hi = 0.0;
    filt_ok = filt_ok && filter_aug(a, fa, arng).values == a.values;

    AugmentSpec sm;
    sm.kind = AugmentKind::spec_mask;
    sm.n_masks = 0;
    mask_ok = mask_ok && spec_mask(a, sm, arng).values == a.values;
  }
  report(9, mix_ok && filt_ok && mask_ok,
         std::string("mixup(lambda=1): ") + (mix_ok ? "identity" : "differs") +
             ", filter_aug(gain 0): " + (filt_ok ? "identity" : "differs") +
             ", spec_mask(n_masks=0): " + (mask_ok ? "identity" : "differs"));
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "stepcount_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  retain_freed_memory();

  auto guarded = [](int id, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(9, criterion9);
  guarded(7, criterion7);
  guarded(8, [&] { criterion8(root); });
  guarded(5, [&] { criteria5and6(root); });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
