#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attnhar/data.hpp"
#include "attnhar/model.hpp"

namespace attnhar {

// "dataset" section: exactly one of a synthetic spec or CSV paths.
struct DatasetConfig {
  std::optional<SyntheticSpec> synthetic;
  std::string train_csv, val_csv, test_csv;
  std::string manifest;
  std::string preset;  // "", "pamap2", "dg", "skoda"
  std::optional<double> window_seconds;
  std::optional<double> overlap;
  std::optional<double> downsample_hz;
  LabelRule label_rule = LabelRule::majority;
  bool standardize = true;
};

struct ModelConfig {
  Variant variant = Variant::temporal;
  std::size_t hidden = 128;
  std::size_t attn_hidden = 0;  // k, 0 -> M
  bool stacked = false;
  bool cell_bias = false;
  double lambda1 = 0.1;
  double lambda2 = 0.5;
};

struct TrainingConfigSection {
  double learning_rate = 0.05;
  double max_grad_norm = 1.0;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
};

struct OutputConfig {
  std::string checkpoint = "model.ckpt";
  std::string report = "report.json";
  std::string history = "history.json";
  std::string trace = "trace.jsonl";
  std::string dir = "synthetic_data";  // gen-synthetic target
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainingConfigSection training;
  OutputConfig output;
};

// Strict JSON parse: unknown keys and invalid values raise ConfigError
// naming the offending field.
RunConfig parse_run_config(const std::string& path);

// Everything a command needs after ingestion: windows plus the dataset's
// shape vocabulary.
struct DatasetBundle {
  std::vector<SequenceWindow> train, val, test;
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::size_t modalities = 1;
  std::vector<std::size_t> modality_map;
  std::vector<std::string> class_names;
};

// Generates or loads + preprocesses + windows per the dataset section.
// Presets: pamap2 = resample to 100/3 Hz, 5.12 s windows, 78% overlap;
// dg = 32 Hz, 1 s, 0%; skoda = 33 Hz (window length stays explicit).
DatasetBundle load_dataset(const DatasetConfig& cfg);

}  // namespace attnhar
