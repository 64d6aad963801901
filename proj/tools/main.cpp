#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <functional>
#include <algorithm>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "attnhar/checkpoint.hpp"
#include "attnhar/errors.hpp"
#include "attnhar/run_config.hpp"
#include "attnhar/training.hpp"

namespace {

using namespace attnhar;
namespace fs = std::filesystem;

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("ATTNHAR_LOG");
  if (env == nullptr) return LogLevel::info;
  const std::string v(env);
  if (v == "quiet") return LogLevel::quiet;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[attnhar] " << msg << "\n";
}

TrainConfig to_train_config(const RunConfig& cfg, const DatasetBundle& bundle) {
  TrainConfig tc;
  tc.hidden = cfg.model.hidden;
  tc.learning_rate = cfg.training.learning_rate;
  tc.max_grad_norm = cfg.training.max_grad_norm;
  tc.batch_size = cfg.training.batch_size;
  tc.max_epochs = cfg.training.max_epochs;
  tc.patience = cfg.training.patience;
  tc.seed = cfg.training.seed;
  tc.threads = cfg.training.threads;
  tc.loss = LossConfig{cfg.model.variant, cfg.model.lambda1, cfg.model.lambda2};
  tc.classes = bundle.classes;
  tc.attn_hidden = cfg.model.attn_hidden;
  tc.stacked = cfg.model.stacked;
  tc.cell_bias = cfg.model.cell_bias;
  tc.modality_map = bundle.modality_map;
  return tc;
}

CheckpointMeta to_meta(const RunConfig& cfg, const DatasetBundle& bundle,
                       const ModelParams& params) {
  CheckpointMeta meta;
  meta.dims = params.dims;
  meta.variant = params.variant;
  meta.stacked = params.lstm_top.has_value();
  meta.cell_bias = !params.lstm.b_c.empty();
  meta.modality_map = bundle.modality_map;
  meta.lambda1 = cfg.model.lambda1;
  meta.lambda2 = cfg.model.lambda2;
  meta.class_names = bundle.class_names;
  return meta;
}

void write_text(const std::string& path, const std::string& text) {
  if (!path.empty()) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write output file '" + path + "'");
  os << text;
  if (!os.flush()) throw DataError("write to '" + path + "' failed");
}

void write_report(const std::string& path, const EvalReport& rep,
                  const std::vector<std::string>& class_names) {
  nlohmann::json j = nlohmann::json::parse(rep.to_json());
  j["class_names"] = class_names;
  write_text(path, j.dump(2) + "\n");
}

// Wall-clock durations stay in the log; the history file must be
// byte-identical across reruns of the same seed.
void write_history(const std::string& path, const TrainHistory& history) {
  nlohmann::json j;
  j["best_epoch"] = history.best_epoch;
  j["best_val_f1"] = history.best_val_f1;
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : history.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val_f1}});
  j["epochs"] = epochs;
  write_text(path, j.dump(2) + "\n");
}

void check_checkpoint_vs_dataset(const CheckpointMeta& meta, const DatasetBundle& bundle) {
  if (meta.dims.input != bundle.input_dim) {
    throw DataError("checkpoint expects " + std::to_string(meta.dims.input) +
                    " channels but the dataset has " + std::to_string(bundle.input_dim));
  }
  if (meta.dims.classes != bundle.classes) {
    throw DataError("checkpoint expects " + std::to_string(meta.dims.classes) +
                    " classes but the dataset has " + std::to_string(bundle.classes));
  }
  if (has_sensor(meta.variant) && meta.modality_map != bundle.modality_map)
    throw DataError("checkpoint modality map does not match the dataset");
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed) {
  RunConfig cfg = parse_run_config(config_path);
  if (seed) {
    cfg.training.seed = *seed;
    if (cfg.dataset.synthetic) cfg.dataset.synthetic->seed = *seed;
  }
  DatasetBundle bundle = load_dataset(cfg.dataset);
  if (bundle.train.empty() || bundle.val.empty() || bundle.test.empty())
    throw DataError("dataset has an empty split (train " + std::to_string(bundle.train.size()) +
                    ", val " + std::to_string(bundle.val.size()) + ", test " +
                    std::to_string(bundle.test.size()) + ")");

  log_info("training variant=" + variant_name(cfg.model.variant) + " on " +
           std::to_string(bundle.train.size()) + " windows (val " +
           std::to_string(bundle.val.size()) + ", test " + std::to_string(bundle.test.size()) +
           ")");
  const TrainConfig tc = to_train_config(cfg, bundle);
  auto [params, history] = train(tc, bundle.train, bundle.val);
  for (const auto& e : history.epochs) {
    log_info("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss) +
             " val_f1 " + std::to_string(e.val_f1) + " (" + std::to_string(e.seconds) + "s)");
  }

  save_checkpoint(cfg.output.checkpoint, params, to_meta(cfg, bundle, params));
  write_history(cfg.output.history, history);
  const EvalReport rep = evaluate(params, tc.loss, bundle.test, bundle.classes, tc.threads);
  write_report(cfg.output.report, rep, bundle.class_names);
  log_info("test mean_f1 " + std::to_string(rep.mean_f1) + ", checkpoint " +
           cfg.output.checkpoint);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& out_override) {
  RunConfig cfg = parse_run_config(config_path);
  auto [params, meta] = load_checkpoint(checkpoint_path);
  DatasetBundle bundle = load_dataset(cfg.dataset);
  check_checkpoint_vs_dataset(meta, bundle);
  if (bundle.test.empty()) throw DataError("no windows in the test split");

  const LossConfig loss_cfg{meta.variant, meta.lambda1, meta.lambda2};
  const EvalReport rep =
      evaluate(params, loss_cfg, bundle.test, bundle.classes, cfg.training.threads);
  const std::string out = out_override.empty() ? cfg.output.report : out_override;
  write_report(out, rep, bundle.class_names);
  if (log_level() >= LogLevel::info) std::cerr << rep.to_text();
  log_info("test mean_f1 " + std::to_string(rep.mean_f1) + ", report " + out);
  return 0;
}

int cmd_export_attention(const std::string& config_path, const std::string& checkpoint_path,
                         std::size_t n, const std::string& out_override, bool with_input) {
  if (n == 0) throw ArgumentError("--n must be at least 1");
  RunConfig cfg = parse_run_config(config_path);
  auto [params, meta] = load_checkpoint(checkpoint_path);
  DatasetBundle bundle = load_dataset(cfg.dataset);
  check_checkpoint_vs_dataset(meta, bundle);
  if (bundle.test.empty()) throw DataError("no windows in the test split");
  if (!has_temporal(meta.variant) && !has_sensor(meta.variant))
    log_info("note: plain variant exports the degenerate one-hot alpha");

  const LossConfig loss_cfg{meta.variant, meta.lambda1, meta.lambda2};
  const std::size_t count = std::min(n, bundle.test.size());
  std::string out_path = out_override.empty() ? cfg.output.trace : out_override;

  std::ostringstream lines;
  for (std::size_t i = 0; i < count; ++i) {
    const SequenceWindow& w = bundle.test[i];
    const ForwardResult fwd = forward(params, loss_cfg, w.x);
    const auto pred = static_cast<std::size_t>(
        std::max_element(fwd.probs.begin(), fwd.probs.end()) - fwd.probs.begin());

    nlohmann::json rec;
    rec["window"] = w.id;
    rec["true"] = w.label;
    rec["pred"] = pred;
    rec["alpha"] = fwd.trace.alpha;
    nlohmann::json beta = nlohmann::json::array();
    for (std::size_t t = 0; t < fwd.trace.beta.rows(); ++t) {
      const auto row = fwd.trace.beta.row(t);
      beta.push_back(std::vector<double>(row.begin(), row.end()));
    }
    rec["beta"] = beta;
    if (w.truth) {
      rec["motif"] = {{"begin", w.truth->begin},
                      {"end", w.truth->end},
                      {"modality", w.truth->modality}};
    }
    if (with_input) {
      nlohmann::json x = nlohmann::json::array();
      for (std::size_t t = 0; t < w.x.rows(); ++t) {
        const auto row = w.x.row(t);
        x.push_back(std::vector<double>(row.begin(), row.end()));
      }
      rec["x"] = x;
    }
    lines << rec.dump() << "\n";
  }
  write_text(out_path, lines.str());
  log_info("wrote " + std::to_string(count) + " trace records to " + out_path);
  return 0;
}

int cmd_gen_synthetic(const std::string& config_path, const std::string& out_dir,
                      std::optional<std::uint64_t> seed) {
  RunConfig cfg = parse_run_config(config_path);
  if (!cfg.dataset.synthetic)
    throw ConfigError("gen-synthetic needs a dataset.synthetic section");
  if (seed) cfg.dataset.synthetic->seed = *seed;

  const std::string dir = out_dir.empty() ? cfg.output.dir : out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());

  SyntheticData data = gen_synthetic(*cfg.dataset.synthetic);
  data.manifest.ground_truth = "ground_truth.jsonl";

  save_windows_csv(dir + "/train.csv", data.train, data.manifest);
  save_windows_csv(dir + "/val.csv", data.val, data.manifest);
  save_windows_csv(dir + "/test.csv", data.test, data.manifest);
  save_manifest(dir + "/manifest.json", data.manifest);

  std::vector<const SequenceWindow*> all;
  for (const auto* split : {&data.train, &data.val, &data.test})
    for (const auto& w : *split) all.push_back(&w);
  std::sort(all.begin(), all.end(),
            [](const SequenceWindow* a, const SequenceWindow* b) { return a->id < b->id; });
  std::ostringstream gt;
  for (const auto* w : all) {
    nlohmann::json j;
    j["window"] = w->id;
    j["label"] = w->label;
    j["motif_begin"] = w->truth->begin;
    j["motif_end"] = w->truth->end;
    j["modality"] = w->truth->modality;
    gt << j.dump() << "\n";
  }
  write_text(dir + "/ground_truth.jsonl", gt.str());

  log_info("wrote " + std::to_string(all.size()) + " windows to " + dir);
  return 0;
}

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuity-regularized attention LSTMs for multichannel HAR"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, out_path;
  std::size_t n_windows = 8;
  bool with_input = false;
  std::optional<std::uint64_t> seed;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the run seed");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model and report on the test split");
  train_cmd->add_option("--config", config_path, "run configuration file")->required();
  add_seed(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval_cmd->add_option("--config", config_path, "run configuration file")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--out", out_path, "report output path");

  auto* export_cmd =
      app.add_subcommand("export-attention", "dump per-window attention traces");
  export_cmd->add_option("--config", config_path, "run configuration file")->required();
  export_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  export_cmd->add_option("--n", n_windows, "number of windows to export");
  export_cmd->add_option("--out", out_path, "trace output path");
  export_cmd->add_flag("--with-input", with_input, "include the raw window signal");

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic CSV dataset");
  gen_cmd->add_option("--config", config_path, "run configuration file")->required();
  gen_cmd->add_option("--out", out_path, "output directory");
  add_seed(gen_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (train_cmd->parsed()) return guarded([&] { return cmd_train(config_path, seed); });
  if (eval_cmd->parsed())
    return guarded([&] { return cmd_eval(config_path, checkpoint_path, out_path); });
  if (export_cmd->parsed()) {
    return guarded(
        [&] { return cmd_export_attention(config_path, checkpoint_path, n_windows, out_path, with_input); });
  }
  if (gen_cmd->parsed())
    return guarded([&] { return cmd_gen_synthetic(config_path, out_path, seed); });
  return 2;
}
