// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. The heavier criteria train on the planted-motif benchmark
// and carry their own wall-clock budgets.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "attnhar/checkpoint.hpp"
#include "attnhar/data.hpp"
#include "attnhar/errors.hpp"
#include "attnhar/grad_check.hpp"
#include "attnhar/metrics.hpp"
#include "attnhar/model.hpp"
#include "attnhar/training.hpp"
#include "json.hpp"

using namespace attnhar;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void verdict(int number, const std::string& name, bool pass, const std::string& detail,
             double seconds) {
  std::printf("[%s] %2d. %s: %s [%.1fs]\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

Matrix random_window(std::size_t t, std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix x(t, d);
  for (double& v : x.values()) v = dist(rng);
  return x;
}

ModelParams scaled_params(std::uint64_t seed, Variant variant, const Dims& dims,
                          double scale) {
  InitOptions opts;
  if (has_sensor(variant)) {
    opts.modality_map.resize(dims.input);
    for (std::size_t i = 0; i < dims.input; ++i)
      opts.modality_map[i] = i * dims.modalities / dims.input;
  }
  ModelParams p = init_params(seed, dims, variant, opts);
  for (auto& ref : tensor_refs(p))
    for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] *= scale;
  return p;
}

// ---------------------------------------------------------------------------
// 1. gradient correctness
// ---------------------------------------------------------------------------

Matrix ref_as_matrix(const ConstTensorRef& ref) {
  const std::size_t r = ref.shape.size() == 2 ? ref.shape[0] : 1;
  const std::size_t c = ref.shape.back();
  return Matrix(r, c, Vec(ref.data, ref.data + ref.size));
}

// the difference quotient is only a valid oracle away from the L1 tie points
// and away from coordinates whose gradient drowns in its rounding noise
bool well_conditioned(const ModelParams& params, const LossConfig& cfg, const Matrix& x,
                      std::size_t label) {
  const ForwardResult fwd = forward(params, cfg, x);
  if (has_temporal(params.variant)) {
    for (std::size_t t = 1; t < fwd.trace.alpha.size(); ++t)
      if (std::abs(fwd.trace.alpha[t] - fwd.trace.alpha[t - 1]) < 1e-4) return false;
  }
  if (has_sensor(params.variant)) {
    for (std::size_t t = 1; t < fwd.trace.beta.rows(); ++t)
      for (std::size_t j = 0; j < fwd.trace.beta.cols(); ++j)
        if (std::abs(fwd.trace.beta(t, j) - fwd.trace.beta(t - 1, j)) < 1e-4) return false;
  }
  const ModelParams grads = backward(params, cfg, x, label, fwd);
  for (const auto& ref : tensor_refs(grads))
    for (std::size_t i = 0; i < ref.size; ++i)
      if (std::abs(ref.data[i]) < 1e-6) return false;
  return true;
}

double worst_tensor_error(const ModelParams& params, const LossConfig& cfg, const Matrix& x,
                          std::size_t label, double eps) {
  const ForwardResult fwd = forward(params, cfg, x);
  const ModelParams grads = backward(params, cfg, x, label, fwd);
  const auto plist = tensor_refs(std::as_const(params));
  const auto glist = tensor_refs(std::as_const(grads));
  double worst = 0.0;
  for (std::size_t ti = 0; ti < plist.size(); ++ti) {
    const Matrix start = ref_as_matrix(plist[ti]);
    const Matrix analytic = ref_as_matrix(glist[ti]);
    auto f = [&, ti](const Matrix& probe) {
      ModelParams perturbed = params;
      auto refs = tensor_refs(perturbed);
      std::copy(probe.data(), probe.data() + probe.size(), refs[ti].data);
      const ForwardResult out = forward(perturbed, cfg, x);
      return loss(out.probs, label, out.trace, cfg);
    };
    worst = std::max(worst, grad_check(f, start, analytic, eps).max_rel_error);
  }
  return worst;
}

void criterion_1() {
  Timer timer;
  const Dims dims{4, 5, 3, 2, 2};  // D=4 H=5 C=3 M=2 k=2
  const std::size_t t_len = 7;
  const double eps = 1e-5;
  double worst = 0.0;
  bool ok = true;
  std::string detail;

  for (Variant variant : {Variant::plain, Variant::temporal, Variant::sensor,
                          Variant::temporal_sensor}) {
    const LossConfig cfg{variant, has_temporal(variant) ? 0.1 : 0.0,
                         has_sensor(variant) ? 0.5 : 0.0};
    std::size_t accepted = 0;
    for (std::uint64_t seed = 1; accepted < 3 && seed < 300; ++seed) {
      std::mt19937_64 rng(seed * 7919);
      const ModelParams params = scaled_params(seed, variant, dims, 3.0);
      const Matrix x = random_window(t_len, dims.input, rng, 1.5);
      const std::size_t label = seed % dims.classes;
      if (!well_conditioned(params, cfg, x, label)) continue;
      worst = std::max(worst, worst_tensor_error(params, cfg, x, label, eps));
      ++accepted;
    }
    if (accepted != 3) {
      ok = false;
      detail = "could not find 3 well-conditioned seeds for " + variant_name(variant);
    }
  }
  const double secs = timer.seconds();
  if (ok) {
    ok = worst < 1e-4 && secs < 60.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "all variants, D=4 H=5 T=7 C=3 M=2 k=2, eps=1e-5, 3 seeds each: "
                  "max rel err %.2e (< 1e-4), runtime %.1fs (< 60s)",
                  worst, secs);
    detail = buf;
  }
  verdict(1, "gradient correctness", ok, detail, secs);
}

// ---------------------------------------------------------------------------
// 2. normalization invariants
// ---------------------------------------------------------------------------

void criterion_2() {
  Timer timer;
  const Dims dims{4, 5, 3, 2, 2};
  const Variant variants[4] = {Variant::plain, Variant::temporal, Variant::sensor,
                               Variant::temporal_sensor};
  std::mt19937_64 rng(2024);
  double worst_alpha = 0.0, worst_beta = 0.0, worst_probs = 0.0;
  std::uniform_int_distribution<std::size_t> t_dist(2, 12);
  for (int pass = 0; pass < 1000; ++pass) {
    const Variant variant = variants[pass % 4];
    const LossConfig cfg{variant, 0.1, 0.5};
    const ModelParams params = scaled_params(1000 + pass, variant, dims, 2.0);
    const Matrix x = random_window(t_dist(rng), dims.input, rng, 2.0);
    const ForwardResult fwd = forward(params, cfg, x);

    double alpha_sum = 0.0;
    for (double a : fwd.trace.alpha) alpha_sum += a;
    worst_alpha = std::max(worst_alpha, std::abs(alpha_sum - 1.0));
    for (std::size_t t = 0; t < fwd.trace.beta.rows(); ++t) {
      double row = 0.0;
      for (std::size_t j = 0; j < fwd.trace.beta.cols(); ++j) row += fwd.trace.beta(t, j);
      worst_beta = std::max(worst_beta, std::abs(row - 1.0));
    }
    double prob_sum = 0.0;
    for (double p : fwd.probs) prob_sum += p;
    worst_probs = std::max(worst_probs, std::abs(prob_sum - 1.0));
  }
  const bool ok = worst_alpha <= 1e-9 && worst_beta <= 1e-9 && worst_probs <= 1e-9;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "1000 passes: |sum(alpha)-1| <= %.1e, |sum(beta row)-1| <= %.1e, "
                "|sum(probs)-1| <= %.1e (all <= 1e-9)",
                worst_alpha, worst_beta, worst_probs);
  verdict(2, "normalization invariants", ok, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 3. reduction equivalences
// ---------------------------------------------------------------------------

void criterion_3() {
  Timer timer;
  const std::size_t d = 4, h = 5, c = 3, t_len = 7;
  bool ok = true;
  std::mt19937_64 rng(3000);

  for (int trial = 0; trial < 100 && ok; ++trial) {
    // (a) temporal with alpha forced one-hot at T vs plain
    const ModelParams temporal =
        scaled_params(5000 + trial, Variant::temporal, Dims{d, h, c, 1, 0}, 1.5);
    ModelParams plain = scaled_params(5000 + trial, Variant::plain, Dims{d, h, c, 1, 0}, 1.5);
    plain.lstm = temporal.lstm;
    plain.head = temporal.head;
    const Matrix x = random_window(t_len, d, rng, 1.5);
    Vec onehot(t_len, 0.0);
    onehot.back() = 1.0;
    const ForwardResult forced =
        forward(temporal, LossConfig{Variant::temporal, 0.0, 0.0}, x, &onehot);
    const ForwardResult ref = forward(plain, LossConfig{Variant::plain, 0.0, 0.0}, x);
    if (forced.trace.context != ref.trace.context || forced.probs != ref.probs) ok = false;

    // (b) sensor with M=1 vs plain on identical params
    const ModelParams sensor =
        scaled_params(6000 + trial, Variant::sensor, Dims{d, h, c, 1, 2}, 1.5);
    ModelParams plain2 = scaled_params(6000 + trial, Variant::plain, Dims{d, h, c, 1, 0}, 1.5);
    plain2.lstm = sensor.lstm;
    plain2.head = sensor.head;
    const Matrix x2 = random_window(t_len, d, rng, 1.5);
    const ForwardResult gated = forward(sensor, LossConfig{Variant::sensor, 0.0, 0.0}, x2);
    const ForwardResult ref2 = forward(plain2, LossConfig{Variant::plain, 0.0, 0.0}, x2);
    if (gated.probs != ref2.probs || gated.layers[0].inputs != x2) ok = false;
  }
  verdict(3, "reduction equivalences", ok,
          ok ? "100 instances each: forced one-hot == plain and M=1 sensor == plain, bit-exact"
             : "reduction mismatch",
          timer.seconds());
}

// ---------------------------------------------------------------------------
// 4. regularizer semantics
// ---------------------------------------------------------------------------

void criterion_4() {
  Timer timer;
  bool ok = true;
  std::string detail = "constant sequences cost exactly 0; 10 fixed sequences match the "
                       "direct-summation oracle to 1e-12";

  // constant attention costs exactly zero
  const Vec const_alpha(9, 1.0 / 9.0);
  if (temporal_continuity(const_alpha) != 0.0) ok = false;
  Matrix const_beta(6, 3);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 3; ++j) const_beta(t, j) = 1.0 / 3.0;
  if (sensor_continuity(const_beta) != 0.0) ok = false;

  const std::vector<Vec> fixed = {
      {1, 0, 0, 0},
      {0, 0, 0, 1},
      {1, 0, 1, 0},
      {0.25, 0.25, 0.25, 0.25},
      {0.7, 0.1, 0.1, 0.1},
      {0.0, 0.5, 0.5, 0.0},
      {0.9, 0.05, 0.03, 0.02},
      {0.1, 0.2, 0.3, 0.4},
      {0.4, 0.3, 0.2, 0.1},
      {0.05, 0.45, 0.05, 0.45},
  };
  for (const Vec& alpha : fixed) {
    double oracle = 0.0;  // direct absolute-difference summation
    for (std::size_t t = 1; t < alpha.size(); ++t) oracle += std::abs(alpha[t] - alpha[t - 1]);
    if (std::abs(temporal_continuity(alpha) - oracle) > 1e-12) ok = false;

    // the same sequences doubled up as two-modality rows
    Matrix beta(alpha.size(), 2);
    for (std::size_t t = 0; t < alpha.size(); ++t) {
      beta(t, 0) = alpha[t];
      beta(t, 1) = 1.0 - alpha[t];
    }
    double beta_oracle = 0.0;
    for (std::size_t t = 1; t < alpha.size(); ++t)
      beta_oracle += std::abs(beta(t, 0) - beta(t - 1, 0)) + std::abs(beta(t, 1) - beta(t - 1, 1));
    if (std::abs(sensor_continuity(beta) - beta_oracle) > 1e-12) ok = false;
  }

  // frozen hand sums: a single unit jump costs 1 wherever it sits; [1,0,1,0] costs 3
  if (temporal_continuity(fixed[0]) != 1.0) ok = false;
  if (temporal_continuity(fixed[1]) != 1.0) ok = false;
  if (temporal_continuity(fixed[2]) != 3.0) ok = false;

  verdict(4, "regularizer semantics", ok, ok ? detail : "continuity penalty mismatch",
          timer.seconds());
}

// ---------------------------------------------------------------------------
// training helpers for criteria 5-7
// ---------------------------------------------------------------------------

struct TrainedModel {
  ModelParams params;
  LossConfig cfg;
  EvalReport report;
};

TrainedModel train_on(const SyntheticData& data, Variant variant, double lambda1,
                      double lambda2, std::uint64_t seed, std::size_t classes,
                      std::size_t epochs, std::size_t hidden = 24) {
  TrainConfig tc;
  tc.hidden = hidden;
  tc.learning_rate = 0.05;
  tc.max_grad_norm = 1.0;
  tc.batch_size = 64;
  tc.max_epochs = epochs;
  tc.patience = epochs;
  tc.seed = seed;
  tc.classes = classes;
  tc.threads = 0;
  tc.loss = LossConfig{variant, lambda1, lambda2};
  tc.modality_map = data.manifest.modality_map;
  auto [params, hist] = train(tc, data.train, data.val);
  EvalReport report = evaluate(params, tc.loss, data.test, classes);
  return TrainedModel{std::move(params), tc.loss, std::move(report)};
}

// ---------------------------------------------------------------------------
// 5. continuity effect
// ---------------------------------------------------------------------------

void criterion_5() {
  Timer timer;
  SyntheticSpec spec;
  spec.n_windows = 2000;
  spec.length = 64;
  spec.channels = 6;
  spec.modalities = 3;
  spec.classes = 2;
  spec.noise_std = 0.4;
  spec.motif_min = 12;
  spec.motif_max = 20;
  spec.seed = 100;
  const SyntheticData data = gen_synthetic(spec);

  const double lambdas[3] = {0.0, 0.1, 1.0};
  double medians[3];
  for (int li = 0; li < 3; ++li) {
    std::vector<double> tvs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const TrainedModel m =
          train_on(data, Variant::temporal, lambdas[li], 0.0, seed, 2, 8);
      for (const auto& w : data.test) {
        const ForwardResult f = forward(m.params, m.cfg, w.x);
        tvs.push_back(temporal_continuity(f.trace.alpha));
      }
    }
    std::sort(tvs.begin(), tvs.end());
    medians[li] = tvs[tvs.size() / 2];
  }
  const double secs = timer.seconds();
  const bool monotone = medians[0] >= medians[1] && medians[1] >= medians[2];
  const bool ok = monotone && secs < 900.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "median TV over 5 seeds: lambda1=0 -> %.4f, 0.1 -> %.4f, 1.0 -> %.4f "
                "(non-increasing), runtime %.0fs (< 900s)",
                medians[0], medians[1], medians[2], secs);
  verdict(5, "continuity effect", ok, buf, secs);
}

// ---------------------------------------------------------------------------
// 6. attention localization
// ---------------------------------------------------------------------------

void criterion_6() {
  Timer timer;

  // temporal sub-task: four frequency classes share one informative modality,
  // short motifs in a long window make uniform attention costly
  SyntheticSpec tspec;
  tspec.n_windows = 1500;
  tspec.length = 96;
  tspec.channels = 6;
  tspec.modalities = 3;
  tspec.classes = 4;
  tspec.noise_std = 0.4;
  tspec.motif_min = 10;
  tspec.motif_max = 16;
  tspec.amplitudes.assign(4, 1.5);
  tspec.frequencies = {0.04, 0.09, 0.17, 0.30};
  tspec.informative_modality = {0, 0, 0, 0};
  tspec.seed = 200;
  const SyntheticData tdata = gen_synthetic(tspec);
  const TrainedModel temporal = train_on(tdata, Variant::temporal, 0.1, 0.0, 1, 4, 8);

  double mass = 0.0, base = 0.0;
  for (const auto& w : tdata.test) {
    const ForwardResult f = forward(temporal.params, temporal.cfg, w.x);
    for (std::size_t t = w.truth->begin; t < w.truth->end; ++t) mass += f.trace.alpha[t];
    base += double(w.truth->end - w.truth->begin) / double(tspec.length);
  }
  const double mass_ratio = mass / base;

  // sensor sub-task: same family, sized so the plain h_T readout can carry it,
  // with two pure-noise modalities worth suppressing
  SyntheticSpec sspec;
  sspec.n_windows = 1500;
  sspec.length = 64;
  sspec.channels = 6;
  sspec.modalities = 3;
  sspec.classes = 2;
  sspec.noise_std = 0.5;
  sspec.motif_min = 16;
  sspec.motif_max = 24;
  sspec.amplitudes = {1.0, 1.0};
  sspec.frequencies = {0.05, 0.25};
  sspec.informative_modality = {0, 0};
  sspec.seed = 200;
  const SyntheticData sdata = gen_synthetic(sspec);

  double worst_beta = 1.0, worst_sensor_f1 = 1.0, worst_sensor_acc = 1.0;
  for (std::uint64_t seed : {2ull, 3ull}) {
    const TrainedModel sensor = train_on(sdata, Variant::sensor, 0.0, 0.5, seed, 2, 30);
    double info_beta = 0.0;
    for (const auto& w : sdata.test) {
      const ForwardResult f = forward(sensor.params, sensor.cfg, w.x);
      double bsum = 0.0;
      for (std::size_t t = 0; t < f.trace.beta.rows(); ++t)
        bsum += f.trace.beta(t, w.truth->modality);
      info_beta += bsum / double(f.trace.beta.rows());
    }
    worst_beta = std::min(worst_beta, info_beta / double(sdata.test.size()));
    worst_sensor_f1 = std::min(worst_sensor_f1, sensor.report.mean_f1);
    worst_sensor_acc = std::min(worst_sensor_acc, sensor.report.accuracy);
  }

  const double secs = timer.seconds();
  const bool ok = mass_ratio >= 2.0 && worst_beta > 1.0 / 3.0 &&
                  temporal.report.mean_f1 >= 0.95 && temporal.report.accuracy >= 0.95 &&
                  worst_sensor_f1 >= 0.95 && worst_sensor_acc >= 0.95 && secs < 600.0;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "temporal mass %.2fx uniform baseline (>= 2x), informative beta %.3f "
                "(> 1/3); F1/acc: temporal %.3f/%.3f, sensor %.3f/%.3f (>= 0.95); "
                "runtime %.0fs (< 600s)",
                mass_ratio, worst_beta, temporal.report.mean_f1, temporal.report.accuracy,
                worst_sensor_f1, worst_sensor_acc, secs);
  verdict(6, "attention localization", ok, buf, secs);
}

// ---------------------------------------------------------------------------
// 7. directional claim
// ---------------------------------------------------------------------------

void criterion_7() {
  Timer timer;
  SyntheticSpec spec;
  spec.n_windows = 1500;
  spec.length = 64;
  spec.channels = 6;
  spec.modalities = 3;
  spec.classes = 2;
  spec.noise_std = 0.8;
  spec.motif_min = 8;
  spec.motif_max = 14;  // at most 22% of the window
  spec.seed = 300;
  const SyntheticData data = gen_synthetic(spec);

  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TrainedModel att = train_on(data, Variant::temporal, 0.1, 0.0, seed, 2, 8);
    const TrainedModel plain = train_on(data, Variant::plain, 0.0, 0.0, seed, 2, 8);
    if (att.report.mean_f1 >= plain.report.mean_f1) ++wins;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " s%llu %.3f/%.3f", (unsigned long long)seed,
                  att.report.mean_f1, plain.report.mean_f1);
    per_seed += buf;
  }
  const bool ok = wins >= 4;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "continuous temporal attention >= plain LSTM in %d/5 seeds (need >= 4);"
                "%s",
                wins, per_seed.c_str());
  verdict(7, "directional claim", ok, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 8. metrics oracle
// ---------------------------------------------------------------------------

void criterion_8() {
  Timer timer;
  bool ok = true;

  // brute force from raw pairs
  std::mt19937_64 rng(8000);
  for (int trial = 0; trial < 100 && ok; ++trial) {
    std::uniform_int_distribution<std::size_t> class_dist(2, 8);
    const std::size_t classes = class_dist(rng);
    std::uniform_int_distribution<std::size_t> label(0, classes - 1);
    std::uniform_int_distribution<int> count(1, 300);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    ConfusionMatrix cm(classes);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const std::size_t t = label(rng), p = label(rng);
      pairs.emplace_back(t, p);
      cm.add(t, p);
    }
    double oracle = 0.0;
    for (std::size_t i = 0; i < classes; ++i) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& [t, p] : pairs) {
        if (t == i && p == i) ++tp;
        if (t != i && p == i) ++fp;
        if (t == i && p != i) ++fn;
      }
      const double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
      const double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
      oracle += precision + recall == 0.0 ? 0.0
                                          : 2.0 * precision * recall / (precision + recall);
    }
    oracle /= double(classes);
    if (std::abs(report(cm).mean_f1 - oracle) > 1e-12) ok = false;
  }

  // the hand example cm = [[3,1],[2,4]]
  ConfusionMatrix cm(2);
  for (int i = 0; i < 3; ++i) cm.add(0, 0);
  cm.add(0, 1);
  for (int i = 0; i < 2; ++i) cm.add(1, 0);
  for (int i = 0; i < 4; ++i) cm.add(1, 1);
  const EvalReport rep = report(cm);
  if (std::abs(rep.precision[0] - 0.6) > 1e-12 || std::abs(rep.precision[1] - 0.8) > 1e-12 ||
      std::abs(rep.recall[0] - 0.75) > 1e-12 || std::abs(rep.recall[1] - 2.0 / 3.0) > 1e-12 ||
      std::abs(rep.f1[0] - 2.0 / 3.0) > 1e-12 || std::abs(rep.f1[1] - 8.0 / 11.0) > 1e-12 ||
      std::abs(rep.mean_f1 - 23.0 / 33.0) > 1e-12) {
    ok = false;
  }
  verdict(8, "metrics oracle", ok,
          ok ? "100 random confusion setups match brute force to 1e-12; hand example "
               "[[3,1],[2,4]] reproduced"
             : "metric mismatch",
          timer.seconds());
}

// ---------------------------------------------------------------------------
// 9. pipeline determinism and persistence
// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ATTNHAR_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void criterion_9() {
  Timer timer;
  const fs::path root =
      fs::temp_directory_path() / ("attnhar_accept_" + std::to_string(std::random_device{}()));
  bool ok = true;
  std::string detail;

  auto run_pipeline = [&](const fs::path& dir) -> bool {
    fs::create_directories(dir);
    nlohmann::json cfg;
    cfg["dataset"]["synthetic"] = {{"windows", 120}, {"length", 24}, {"channels", 4},
                                   {"modalities", 2}, {"classes", 2}, {"noise_std", 0.3},
                                   {"motif_min", 6},  {"motif_max", 10}, {"seed", 17}};
    cfg["model"] = {{"variant", "temporal_sensor"}, {"hidden", 10}, {"lambda1", 0.1},
                    {"lambda2", 0.5}};
    cfg["training"] = {{"learning_rate", 0.05}, {"batch_size", 32}, {"max_epochs", 3},
                       {"patience", 5},         {"seed", 7},        {"threads", 2}};
    cfg["output"] = {{"checkpoint", (dir / "model.ckpt").string()},
                     {"report", (dir / "report.json").string()},
                     {"history", (dir / "history.json").string()},
                     {"trace", (dir / "trace.jsonl").string()},
                     {"dir", (dir / "data").string()}};
    const fs::path cfg_gen = dir / "gen.json";
    std::ofstream(cfg_gen) << cfg.dump(2);

    if (run_cli("gen-synthetic --config " + cfg_gen.string()) != 0) return false;

    nlohmann::json train_cfg = cfg;
    train_cfg["dataset"].erase("synthetic");
    train_cfg["dataset"]["train_csv"] = (dir / "data/train.csv").string();
    train_cfg["dataset"]["val_csv"] = (dir / "data/val.csv").string();
    train_cfg["dataset"]["test_csv"] = (dir / "data/test.csv").string();
    train_cfg["dataset"]["manifest"] = (dir / "data/manifest.json").string();
    const fs::path cfg_train = dir / "train.json";
    std::ofstream(cfg_train) << train_cfg.dump(2);

    if (run_cli("train --config " + cfg_train.string()) != 0) return false;
    if (run_cli("eval --config " + cfg_train.string() + " --checkpoint " +
                (dir / "model.ckpt").string() + " --out " + (dir / "eval.json").string()) != 0)
      return false;
    if (run_cli("export-attention --config " + cfg_train.string() + " --checkpoint " +
                (dir / "model.ckpt").string() + " --n 6") != 0)
      return false;
    return true;
  };

  if (!run_pipeline(root / "a") || !run_pipeline(root / "b")) {
    ok = false;
    detail = "pipeline command failed";
  } else {
    for (const char* rel :
         {"data/train.csv", "data/val.csv", "data/test.csv", "data/manifest.json",
          "data/ground_truth.jsonl", "model.ckpt", "history.json", "report.json",
          "eval.json", "trace.jsonl"}) {
      if (slurp(root / "a" / rel) != slurp(root / "b" / rel)) {
        ok = false;
        detail = std::string("artifact differs between runs: ") + rel;
        break;
      }
    }
  }

  if (ok) {
    // checkpoint round trip is bit-exact, file level and tensor level
    const auto [params, meta] = load_checkpoint((root / "a/model.ckpt").string());
    save_checkpoint((root / "a/model2.ckpt").string(), params, meta);
    if (slurp(root / "a/model.ckpt") != slurp(root / "a/model2.ckpt")) {
      ok = false;
      detail = "checkpoint re-save is not byte-identical";
    } else {
      const auto [params2, meta2] = load_checkpoint((root / "a/model2.ckpt").string());
      const auto ra = tensor_refs(std::as_const(params));
      const auto rb = tensor_refs(std::as_const(params2));
      for (std::size_t ti = 0; ti < ra.size(); ++ti)
        for (std::size_t i = 0; i < ra[ti].size; ++i)
          if (ra[ti].data[i] != rb[ti].data[i]) ok = false;
      if (!ok) detail = "checkpoint tensors changed across a round trip";
    }
  }
  if (ok)
    detail = "gen -> train -> eval -> export twice: all 10 artifacts byte-identical; "
             "checkpoint round trip bit-exact";
  std::error_code ec;
  fs::remove_all(root, ec);
  verdict(9, "pipeline determinism and persistence", ok, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 10. windowing arithmetic
// ---------------------------------------------------------------------------

void criterion_10() {
  Timer timer;
  bool ok = true;
  std::string detail;

  // the pamap2 preset resamples to 100/3 Hz and cuts 5.12 s windows at 78%
  const double rate = 100.0 / 3.0;
  Recording rec;
  rec.sample_rate = rate;
  rec.channel_names = {"ch0"};
  rec.modality_map = {0};
  rec.channels = {Vec(4000, 0.0)};
  rec.labels.assign(4000, 0);
  const auto ws = window(rec, 5.12, 0.78);
  if (ws.empty() || ws[0].x.rows() != 171 || ws.size() < 2 || ws[1].start - ws[0].start != 38) {
    ok = false;
    detail = "pamap2 recipe did not produce L=171, S=38";
  }

  std::mt19937_64 rng(10000);
  std::uniform_int_distribution<std::size_t> len_dist(1, 600);
  std::uniform_real_distribution<double> sec_dist(0.3, 6.0);
  std::uniform_real_distribution<double> ov_dist(0.0, 0.9);
  for (int trial = 0; trial < 200 && ok; ++trial) {
    const std::size_t n = len_dist(rng);
    const double seconds = sec_dist(rng);
    const double overlap = ov_dist(rng);
    Recording r;
    r.sample_rate = 10.0;
    r.channel_names = {"ch0"};
    r.modality_map = {0};
    r.channels = {Vec(n, 0.0)};
    r.labels.assign(n, 0);
    const auto l = static_cast<std::size_t>(std::llround(seconds * r.sample_rate));
    if (l < 1) continue;
    const auto s = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(double(l) * (1.0 - overlap))));
    const std::size_t expected = n >= l ? (n - l) / s + 1 : 0;
    if (window(r, seconds, overlap).size() != expected) {
      ok = false;
      detail = "window count deviates from the closed-form floor formula";
    }
  }
  if (ok)
    detail = "pamap2 preset: L=171, S=38 at 100/3 Hz; 200 randomized lengths match "
             "(n-L)/S+1";
  verdict(10, "windowing arithmetic", ok, detail, timer.seconds());
}

}  // namespace

int main() {
  std::printf("acceptance suite (%s)\n", ATTNHAR_CLI_PATH);
  const Timer total;
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("%d of 10 criteria passed in %.0fs\n", 10 - g_failures, total.seconds());
  return g_failures;
}
