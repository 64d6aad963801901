#include "attnhar/run_config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "attnhar/errors.hpp"
#include "json.hpp"

namespace attnhar {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return key == k; }) == known.end()) {
      throw ConfigError("unknown key '" + section + "." + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + section + "." + key + "' has the wrong type");
  }
}

SyntheticSpec parse_synthetic(const json& j) {
  reject_unknown(j, "dataset.synthetic",
                 {"windows", "length", "channels", "modalities", "classes", "noise_std",
                  "motif_min", "motif_max", "frequencies", "amplitudes",
                  "informative_modality", "seed"});
  SyntheticSpec spec;
  const std::string sec = "dataset.synthetic";
  spec.n_windows = get_or<std::size_t>(j, "windows", spec.n_windows, sec);
  spec.length = get_or<std::size_t>(j, "length", spec.length, sec);
  spec.channels = get_or<std::size_t>(j, "channels", spec.channels, sec);
  spec.modalities = get_or<std::size_t>(j, "modalities", spec.modalities, sec);
  spec.classes = get_or<std::size_t>(j, "classes", spec.classes, sec);
  spec.noise_std = get_or<double>(j, "noise_std", spec.noise_std, sec);
  spec.motif_min = get_or<std::size_t>(j, "motif_min", spec.motif_min, sec);
  spec.motif_max = get_or<std::size_t>(j, "motif_max", spec.motif_max, sec);
  spec.frequencies = get_or<std::vector<double>>(j, "frequencies", {}, sec);
  spec.amplitudes = get_or<std::vector<double>>(j, "amplitudes", {}, sec);
  spec.informative_modality =
      get_or<std::vector<std::size_t>>(j, "informative_modality", {}, sec);
  spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed, sec);
  try {
    resolve_spec(spec);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("dataset.synthetic: ") + e.what());
  }
  return spec;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  reject_unknown(j, "", {"dataset", "model", "training", "output"});

  RunConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, "dataset",
                   {"synthetic", "train_csv", "val_csv", "test_csv", "manifest", "preset",
                    "window_seconds", "overlap", "downsample_hz", "label_rule", "standardize"});
    if (d.contains("synthetic")) cfg.dataset.synthetic = parse_synthetic(d.at("synthetic"));
    cfg.dataset.train_csv = get_or<std::string>(d, "train_csv", "", "dataset");
    cfg.dataset.val_csv = get_or<std::string>(d, "val_csv", "", "dataset");
    cfg.dataset.test_csv = get_or<std::string>(d, "test_csv", "", "dataset");
    cfg.dataset.manifest = get_or<std::string>(d, "manifest", "", "dataset");
    cfg.dataset.preset = get_or<std::string>(d, "preset", "", "dataset");
    if (d.contains("window_seconds"))
      cfg.dataset.window_seconds = get_or<double>(d, "window_seconds", 0.0, "dataset");
    if (d.contains("overlap")) cfg.dataset.overlap = get_or<double>(d, "overlap", 0.0, "dataset");
    if (d.contains("downsample_hz"))
      cfg.dataset.downsample_hz = get_or<double>(d, "downsample_hz", 0.0, "dataset");
    if (d.contains("label_rule")) {
      try {
        cfg.dataset.label_rule =
            label_rule_from_name(get_or<std::string>(d, "label_rule", "majority", "dataset"));
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("dataset.label_rule: ") + e.what());
      }
    }
    cfg.dataset.standardize = get_or<bool>(d, "standardize", true, "dataset");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, "model",
                   {"variant", "hidden", "attn_hidden", "stacked", "cell_bias", "lambda1",
                    "lambda2"});
    if (m.contains("variant")) {
      try {
        cfg.model.variant = variant_from_name(get_or<std::string>(m, "variant", "", "model"));
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("model.variant: ") + e.what());
      }
    }
    cfg.model.hidden = get_or<std::size_t>(m, "hidden", cfg.model.hidden, "model");
    cfg.model.attn_hidden = get_or<std::size_t>(m, "attn_hidden", cfg.model.attn_hidden, "model");
    cfg.model.stacked = get_or<bool>(m, "stacked", cfg.model.stacked, "model");
    cfg.model.cell_bias = get_or<bool>(m, "cell_bias", cfg.model.cell_bias, "model");
    cfg.model.lambda1 = get_or<double>(m, "lambda1", cfg.model.lambda1, "model");
    cfg.model.lambda2 = get_or<double>(m, "lambda2", cfg.model.lambda2, "model");
    if (cfg.model.hidden == 0) throw ConfigError("field 'model.hidden' must be positive");
    if (!(cfg.model.lambda1 >= 0.0)) throw ConfigError("field 'model.lambda1' must be >= 0");
    if (!(cfg.model.lambda2 >= 0.0)) throw ConfigError("field 'model.lambda2' must be >= 0");
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    reject_unknown(t, "training",
                   {"learning_rate", "max_grad_norm", "batch_size", "max_epochs", "patience",
                    "seed", "threads"});
    cfg.training.learning_rate =
        get_or<double>(t, "learning_rate", cfg.training.learning_rate, "training");
    cfg.training.max_grad_norm =
        get_or<double>(t, "max_grad_norm", cfg.training.max_grad_norm, "training");
    cfg.training.batch_size = get_or<std::size_t>(t, "batch_size", cfg.training.batch_size, "training");
    cfg.training.max_epochs = get_or<std::size_t>(t, "max_epochs", cfg.training.max_epochs, "training");
    cfg.training.patience = get_or<std::size_t>(t, "patience", cfg.training.patience, "training");
    cfg.training.seed = get_or<std::uint64_t>(t, "seed", cfg.training.seed, "training");
    cfg.training.threads = get_or<std::size_t>(t, "threads", cfg.training.threads, "training");
    if (!(cfg.training.learning_rate > 0.0))
      throw ConfigError("field 'training.learning_rate' must be positive");
    if (!(cfg.training.max_grad_norm > 0.0))
      throw ConfigError("field 'training.max_grad_norm' must be positive");
    if (cfg.training.batch_size == 0) throw ConfigError("field 'training.batch_size' must be positive");
    if (cfg.training.max_epochs == 0) throw ConfigError("field 'training.max_epochs' must be positive");
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    reject_unknown(o, "output", {"checkpoint", "report", "history", "trace", "dir"});
    cfg.output.checkpoint = get_or<std::string>(o, "checkpoint", cfg.output.checkpoint, "output");
    cfg.output.report = get_or<std::string>(o, "report", cfg.output.report, "output");
    cfg.output.history = get_or<std::string>(o, "history", cfg.output.history, "output");
    cfg.output.trace = get_or<std::string>(o, "trace", cfg.output.trace, "output");
    cfg.output.dir = get_or<std::string>(o, "dir", cfg.output.dir, "output");
  }

  const bool has_csv = !cfg.dataset.train_csv.empty() || !cfg.dataset.val_csv.empty() ||
                       !cfg.dataset.test_csv.empty();
  if (cfg.dataset.synthetic.has_value() == has_csv) {
    throw ConfigError("dataset: exactly one of 'synthetic' or the csv paths must be given");
  }
  if (has_csv && (cfg.dataset.train_csv.empty() || cfg.dataset.val_csv.empty() ||
                  cfg.dataset.test_csv.empty()))
    throw ConfigError("dataset: train_csv, val_csv and test_csv are all required");
  if (has_csv && cfg.dataset.manifest.empty())
    throw ConfigError("dataset: a manifest path is required with csv inputs");
  if (!cfg.dataset.preset.empty() && cfg.dataset.preset != "pamap2" &&
      cfg.dataset.preset != "dg" && cfg.dataset.preset != "skoda")
    throw ConfigError("dataset.preset: unknown preset '" + cfg.dataset.preset + "'");
  return cfg;
}

namespace {

struct ResolvedPreprocess {
  std::optional<double> downsample_hz;
  std::optional<double> window_seconds;
  double overlap = 0.0;
};

ResolvedPreprocess resolve_preprocess(const DatasetConfig& cfg) {
  ResolvedPreprocess r;
  if (cfg.preset == "pamap2") {
    r.downsample_hz = 100.0 / 3.0;  // the conventional 33.3 Hz target
    r.window_seconds = 5.12;
    r.overlap = 0.78;
  } else if (cfg.preset == "dg") {
    r.downsample_hz = 32.0;
    r.window_seconds = 1.0;
    r.overlap = 0.0;
  } else if (cfg.preset == "skoda") {
    r.downsample_hz = 33.0;
  }
  if (cfg.downsample_hz) r.downsample_hz = cfg.downsample_hz;
  if (cfg.window_seconds) r.window_seconds = cfg.window_seconds;
  if (cfg.overlap) r.overlap = *cfg.overlap;
  return r;
}

std::string sibling_path(const std::string& anchor, const std::string& relative) {
  namespace fs = std::filesystem;
  const fs::path rel(relative);
  if (rel.is_absolute()) return relative;
  return (fs::path(anchor).parent_path() / rel).string();
}

void attach_ground_truth(const DatasetManifest& manifest, const std::string& manifest_path,
                         std::vector<SequenceWindow>& windows) {
  if (manifest.ground_truth.empty()) return;
  const std::string path = sibling_path(manifest_path, manifest.ground_truth);
  std::ifstream is(path);
  if (!is) throw DataError("cannot open ground truth file '" + path + "'");
  std::map<std::size_t, MotifTruth> truth;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      truth[j.at("window").get<std::size_t>()] =
          MotifTruth{j.at("motif_begin").get<std::size_t>(),
                     j.at("motif_end").get<std::size_t>(),
                     j.at("modality").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
      throw DataError("ground truth '" + path + "': " + e.what());
    }
  }
  for (auto& w : windows) {
    auto it = truth.find(w.id);
    if (it != truth.end()) w.truth = it->second;
  }
}

}  // namespace

DatasetBundle load_dataset(const DatasetConfig& cfg) {
  DatasetBundle bundle;
  if (cfg.synthetic) {
    SyntheticData data = gen_synthetic(*cfg.synthetic);
    bundle.train = std::move(data.train);
    bundle.val = std::move(data.val);
    bundle.test = std::move(data.test);
    bundle.modality_map = data.manifest.modality_map;
    bundle.class_names = data.manifest.class_names;
    bundle.input_dim = data.manifest.channels.size();
    bundle.classes = data.manifest.class_names.size();
  } else {
    for (const auto* p : {&cfg.train_csv, &cfg.val_csv, &cfg.test_csv, &cfg.manifest}) {
      if (!std::filesystem::exists(*p))
        throw DataError("dataset file '" + *p + "' does not exist");
    }
    const DatasetManifest manifest = load_manifest(cfg.manifest);
    bundle.modality_map = manifest.modality_map;
    bundle.class_names = manifest.class_names;
    bundle.input_dim = manifest.channels.size();
    bundle.classes = manifest.class_names.size();

    if (manifest.windowed) {
      bundle.train = load_windows_csv(cfg.train_csv, manifest);
      bundle.val = load_windows_csv(cfg.val_csv, manifest);
      bundle.test = load_windows_csv(cfg.test_csv, manifest);
      attach_ground_truth(manifest, cfg.manifest, bundle.train);
      attach_ground_truth(manifest, cfg.manifest, bundle.val);
      attach_ground_truth(manifest, cfg.manifest, bundle.test);
    } else {
      const ResolvedPreprocess prep = resolve_preprocess(cfg);
      if (!prep.window_seconds)
        throw ConfigError("dataset: window_seconds is required for recording CSVs");

      auto prepare = [&](const std::string& path) {
        Recording rec = fill_missing(load_csv(path, manifest));
        if (prep.downsample_hz && *prep.downsample_hz < rec.sample_rate)
          rec = downsample(rec, *prep.downsample_hz);
        return rec;
      };
      std::vector<Recording> train_recs{prepare(cfg.train_csv)};
      std::vector<Recording> val_recs{prepare(cfg.val_csv)};
      std::vector<Recording> test_recs{prepare(cfg.test_csv)};

      if (cfg.standardize) {
        const ChannelStats stats = compute_stats(train_recs, StatsProvenance::training);
        for (auto* recs : {&train_recs, &val_recs, &test_recs})
          for (auto& rec : *recs) rec = standardize(rec, stats);
      }
      bundle.train = window_all(train_recs, *prep.window_seconds, prep.overlap, cfg.label_rule);
      bundle.val = window_all(val_recs, *prep.window_seconds, prep.overlap, cfg.label_rule);
      bundle.test = window_all(test_recs, *prep.window_seconds, prep.overlap, cfg.label_rule);
    }
  }
  bundle.modalities = bundle.modality_map.empty()
                          ? 1
                          : 1 + *std::max_element(bundle.modality_map.begin(),
                                                  bundle.modality_map.end());
  return bundle;
}

}  // namespace attnhar
