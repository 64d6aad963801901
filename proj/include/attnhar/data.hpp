#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnhar/matrix.hpp"

namespace attnhar {

// One continuous multichannel recording. Missing samples are stored as NaN
// until fill_missing interpolates them.
struct Recording {
  double sample_rate = 0.0;
  std::vector<std::string> channel_names;
  std::vector<Vec> channels;              // D channels, equal length
  std::vector<int> labels;                // per-sample class ids
  std::vector<std::size_t> modality_map;  // channel -> modality group

  std::size_t length() const { return labels.size(); }
  std::size_t num_channels() const { return channels.size(); }
};

// Ground-truth annotation for synthetic windows: the planted motif occupies
// samples [begin, end) of the channels belonging to `modality`.
struct MotifTruth {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t modality = 0;
};

struct SequenceWindow {
  Matrix x;  // T x D
  int label = 0;
  std::size_t id = 0;         // stable per dataset
  std::size_t recording = 0;  // source span
  std::size_t start = 0;
  std::optional<MotifTruth> truth;
};

// Sidecar manifest describing a CSV dataset.
struct DatasetManifest {
  double sample_rate = 0.0;
  std::vector<std::string> channels;
  std::vector<std::size_t> modality_map;
  std::vector<std::string> class_names;
  std::vector<std::string> modality_names;  // optional
  bool windowed = false;                    // true for window-dump CSVs
  std::size_t window_length = 0;            // T, window dumps only
  std::string ground_truth;                 // optional sidecar path (relative)
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

// Raw recording CSV: header row of channel names plus a final "label"
// column (an optional leading "timestamp" column is ignored). Empty cells
// become missing samples; anything non-numeric is a parse error carrying
// the 1-based line number.
Recording load_csv(const std::string& path, const DatasetManifest& manifest);

// Window-dump CSV: like load_csv but with a leading "window" id column;
// rows sharing an id form one window of manifest.window_length samples.
std::vector<SequenceWindow> load_windows_csv(const std::string& path,
                                             const DatasetManifest& manifest);
void save_windows_csv(const std::string& path, const std::vector<SequenceWindow>& windows,
                      const DatasetManifest& manifest);

// Per-channel linear interpolation across gaps; leading/trailing gaps take
// the nearest present value. A channel with no present samples is an error.
Recording fill_missing(Recording rec);

// Block-average decimation by the real ratio sample_rate/target_rate; block
// labels by majority (ties -> earliest label in the block).
Recording downsample(const Recording& rec, double target_rate);

enum class StatsProvenance { training, other };

struct ChannelStats {
  Vec mean;
  Vec stddev;  // floored at 1e-8
  StatsProvenance provenance = StatsProvenance::other;
};

ChannelStats compute_stats(const std::vector<Recording>& recordings,
                           StatsProvenance provenance = StatsProvenance::training);

// (x - mean) / std per channel. Guards against leakage: stats must carry
// training provenance.
Recording standardize(const Recording& rec, const ChannelStats& stats);

enum class LabelRule { majority, last_sample };

LabelRule label_rule_from_name(const std::string& name);
std::string label_rule_name(LabelRule rule);

// Sliding windows of L = round(window_seconds * rate) samples with step
// S = max(1, round(L * (1 - overlap))); trailing partial windows are
// dropped. Majority labels break ties with the window's last sample.
std::vector<SequenceWindow> window(const Recording& rec, double window_seconds,
                                   double overlap_fraction,
                                   LabelRule rule = LabelRule::majority,
                                   std::size_t recording_id = 0);

// Windows across recordings in (recording, start) order with sequential ids.
std::vector<SequenceWindow> window_all(const std::vector<Recording>& recordings,
                                       double window_seconds, double overlap_fraction,
                                       LabelRule rule = LabelRule::majority);

// Planted-motif benchmark: Gaussian background noise plus a class-specific
// sinusoid injected into a random interval of the class's informative
// modality. Ground truth rides along on every window.
struct SyntheticSpec {
  std::size_t n_windows = 2000;
  std::size_t length = 64;     // T
  std::size_t channels = 6;    // D
  std::size_t modalities = 3;  // M
  std::size_t classes = 2;     // C
  double noise_std = 0.4;
  std::size_t motif_min = 10;  // duration range, samples
  std::size_t motif_max = 18;
  std::vector<double> frequencies;                  // per class, cycles/sample
  std::vector<double> amplitudes;                   // per class
  std::vector<std::size_t> informative_modality;    // per class
  std::uint64_t seed = 0;
};

// Fills unset per-class fields and checks ranges; throws ArgumentError.
SyntheticSpec resolve_spec(SyntheticSpec spec);

struct SyntheticData {
  std::vector<SequenceWindow> train, val, test;  // 70/15/15
  DatasetManifest manifest;
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

}  // namespace attnhar
