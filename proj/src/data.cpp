#include "attnhar/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "attnhar/errors.hpp"
#include "json.hpp"

namespace attnhar {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    if (comma == std::string::npos) {
      cells.emplace_back(line.substr(begin));
      break;
    }
    cells.emplace_back(line.substr(begin, comma - begin));
    begin = comma + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
    cells.back().pop_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
  if (cell.empty()) return kMissing;
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": non-numeric cell '" + cell +
                    "' in column '" + column + "'");
  }
  return v;
}

long parse_int_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
  long v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw DataError("line " + std::to_string(line_no) + ": non-integer cell '" + cell +
                    "' in column '" + column + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct CsvLayout {
  bool has_timestamp = false;
  bool has_window = false;
  std::size_t channel_begin = 0;  // index of the first channel column
  std::size_t columns = 0;        // total expected per row
};

CsvLayout read_header(const std::vector<std::string>& header, const DatasetManifest& manifest,
                      bool expect_window, const std::string& path) {
  CsvLayout layout;
  std::size_t idx = 0;
  if (expect_window) {
    if (header.empty() || header[0] != "window")
      throw DataError(path + ": line 1: window-dump CSV must start with a 'window' column");
    layout.has_window = true;
    ++idx;
  }
  if (idx < header.size() && header[idx] == "timestamp") {
    layout.has_timestamp = true;
    ++idx;
  }
  layout.channel_begin = idx;
  const std::size_t d = manifest.channels.size();
  if (header.size() != idx + d + 1 || header.back() != "label") {
    throw DataError(path + ": line 1: expected columns [" +
                    (expect_window ? std::string("window, ") : std::string()) +
                    "timestamp?, " + std::to_string(d) + " channels, label]");
  }
  for (std::size_t c = 0; c < d; ++c) {
    if (header[idx + c] != manifest.channels[c]) {
      throw DataError(path + ": line 1: channel column '" + header[idx + c] +
                      "' does not match manifest channel '" + manifest.channels[c] + "'");
    }
  }
  layout.columns = header.size();
  return layout;
}

void validate_manifest(const DatasetManifest& m, const std::string& path) {
  if (m.channels.empty()) throw DataError(path + ": manifest declares no channels");
  if (m.class_names.empty()) throw DataError(path + ": manifest declares no class names");
  if (m.modality_map.size() != m.channels.size())
    throw DataError(path + ": manifest modality_map must cover every channel");
  if (!(m.sample_rate > 0.0)) throw DataError(path + ": manifest sample_rate must be positive");
  std::size_t modalities = 1 + *std::max_element(m.modality_map.begin(), m.modality_map.end());
  std::vector<bool> seen(modalities, false);
  for (std::size_t mm : m.modality_map) seen[mm] = true;
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw DataError(path + ": manifest modality indices must be contiguous from 0");
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.sample_rate = j.at("sample_rate").get<double>();
    m.channels = j.at("channels").get<std::vector<std::string>>();
    m.modality_map = j.at("modality_map").get<std::vector<std::size_t>>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("modality_names"))
      m.modality_names = j.at("modality_names").get<std::vector<std::string>>();
    if (j.contains("windowed")) m.windowed = j.at("windowed").get<bool>();
    if (j.contains("window_length")) m.window_length = j.at("window_length").get<std::size_t>();
    if (j.contains("ground_truth")) m.ground_truth = j.at("ground_truth").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  validate_manifest(m, path);
  if (m.windowed && m.window_length == 0)
    throw DataError(path + ": windowed manifest needs window_length");
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["sample_rate"] = m.sample_rate;
  j["channels"] = m.channels;
  j["modality_map"] = m.modality_map;
  j["class_names"] = m.class_names;
  if (!m.modality_names.empty()) j["modality_names"] = m.modality_names;
  j["windowed"] = m.windowed;
  if (m.windowed) j["window_length"] = m.window_length;
  if (!m.ground_truth.empty()) j["ground_truth"] = m.ground_truth;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest '" + path + "'");
  os << j.dump(2) << "\n";
}

Recording load_csv(const std::string& path, const DatasetManifest& manifest) {
  validate_manifest(manifest, path);
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  const CsvLayout layout = read_header(split_csv_line(line), manifest, false, path);

  Recording rec;
  rec.sample_rate = manifest.sample_rate;
  rec.channel_names = manifest.channels;
  rec.modality_map = manifest.modality_map;
  rec.channels.assign(manifest.channels.size(), {});

  const long num_classes = static_cast<long>(manifest.class_names.size());
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != layout.columns) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(layout.columns) + " columns, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      rec.channels[c].push_back(
          parse_cell(cells[layout.channel_begin + c], line_no, manifest.channels[c]));
    }
    const long label = parse_int_cell(cells.back(), line_no, "label");
    if (label < 0 || label >= num_classes) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": unknown label value '" +
                      cells.back() + "' (classes: " + std::to_string(num_classes) + ")");
    }
    rec.labels.push_back(static_cast<int>(label));
  }
  return rec;
}

std::vector<SequenceWindow> load_windows_csv(const std::string& path,
                                             const DatasetManifest& manifest) {
  validate_manifest(manifest, path);
  if (manifest.window_length == 0) throw DataError(path + ": manifest lacks window_length");
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  const CsvLayout layout = read_header(split_csv_line(line), manifest, true, path);

  const std::size_t t_len = manifest.window_length;
  const std::size_t d = manifest.channels.size();
  const long num_classes = static_cast<long>(manifest.class_names.size());

  std::vector<SequenceWindow> windows;
  std::size_t line_no = 1;
  SequenceWindow current;
  std::size_t row = 0;
  bool open = false;

  auto flush = [&]() {
    if (!open) return;
    if (row != t_len) {
      throw DataError(path + ": window " + std::to_string(current.id) + " has " +
                      std::to_string(row) + " rows, expected " + std::to_string(t_len));
    }
    windows.push_back(std::move(current));
    open = false;
  };

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != layout.columns) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(layout.columns) + " columns, got " +
                      std::to_string(cells.size()));
    }
    const long id = parse_int_cell(cells[0], line_no, "window");
    if (id < 0) throw DataError(path + ": line " + std::to_string(line_no) + ": negative window id");
    const long label = parse_int_cell(cells.back(), line_no, "label");
    if (label < 0 || label >= num_classes) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": unknown label value '" +
                      cells.back() + "'");
    }

    if (!open || static_cast<std::size_t>(id) != current.id) {
      flush();
      current = SequenceWindow{};
      current.x = Matrix(t_len, d);
      current.id = static_cast<std::size_t>(id);
      current.recording = current.id;
      current.label = static_cast<int>(label);
      row = 0;
      open = true;
    }
    if (row >= t_len) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": window " +
                      std::to_string(id) + " longer than " + std::to_string(t_len));
    }
    if (static_cast<int>(label) != current.label) {
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": inconsistent label inside window " + std::to_string(id));
    }
    for (std::size_t c = 0; c < d; ++c) {
      const double v = parse_cell(cells[layout.channel_begin + c], line_no, manifest.channels[c]);
      if (std::isnan(v)) {
        throw DataError(path + ": line " + std::to_string(line_no) +
                        ": missing values are not allowed in window dumps");
      }
      current.x(row, c) = v;
    }
    ++row;
  }
  flush();
  return windows;
}

void save_windows_csv(const std::string& path, const std::vector<SequenceWindow>& windows,
                      const DatasetManifest& manifest) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write dataset file '" + path + "'");
  os << "window";
  for (const auto& name : manifest.channels) os << ',' << name;
  os << ",label\n";
  for (const auto& w : windows) {
    for (std::size_t t = 0; t < w.x.rows(); ++t) {
      os << w.id;
      for (std::size_t c = 0; c < w.x.cols(); ++c) os << ',' << format_double(w.x(t, c));
      os << ',' << w.label << '\n';
    }
  }
  if (!os) throw DataError("write to '" + path + "' failed");
}

Recording fill_missing(Recording rec) {
  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    Vec& ch = rec.channels[c];
    std::ptrdiff_t prev = -1;
    bool any = false;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (std::isnan(ch[i])) continue;
      any = true;
      const std::ptrdiff_t cur = static_cast<std::ptrdiff_t>(i);
      if (prev == -1) {
        for (std::ptrdiff_t j = 0; j < cur; ++j) ch[j] = ch[i];  // leading gap
      } else if (cur - prev > 1) {
        const double lo = ch[prev];
        const double hi = ch[i];
        const double span = static_cast<double>(cur - prev);
        for (std::ptrdiff_t j = prev + 1; j < cur; ++j)
          ch[j] = lo + (hi - lo) * static_cast<double>(j - prev) / span;
      }
      prev = cur;
    }
    if (!any) {
      throw DataError("channel '" +
                      (c < rec.channel_names.size() ? rec.channel_names[c] : std::to_string(c)) +
                      "' has no present samples");
    }
    if (prev >= 0) {
      for (std::size_t j = static_cast<std::size_t>(prev) + 1; j < ch.size(); ++j)
        ch[j] = ch[prev];  // trailing gap
    }
  }
  return rec;
}

Recording downsample(const Recording& rec, double target_rate) {
  if (!(target_rate > 0.0)) throw ArgumentError("downsample: target rate must be positive");
  if (target_rate > rec.sample_rate)
    throw ArgumentError("downsample: target rate " + std::to_string(target_rate) +
                        " exceeds source rate " + std::to_string(rec.sample_rate));

  const double ratio = rec.sample_rate / target_rate;
  Recording out;
  out.sample_rate = target_rate;
  out.channel_names = rec.channel_names;
  out.modality_map = rec.modality_map;
  out.channels.assign(rec.channels.size(), {});

  const std::size_t len = rec.length();
  for (std::size_t n = 0;; ++n) {
    const auto begin = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio));
    const auto end = static_cast<std::size_t>(std::floor(static_cast<double>(n + 1) * ratio));
    if (end > len || begin >= end) break;

    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      double acc = 0.0;
      for (std::size_t i = begin; i < end; ++i) acc += rec.channels[c][i];
      out.channels[c].push_back(acc / static_cast<double>(end - begin));
    }

    // majority label; ties resolved by earliest appearance in the block
    int best_label = rec.labels[begin];
    std::size_t best_count = 0, best_first = begin;
    std::vector<std::pair<int, std::size_t>> counts;  // label -> count
    std::vector<std::size_t> firsts;
    for (std::size_t i = begin; i < end; ++i) {
      const int lab = rec.labels[i];
      std::size_t k = 0;
      for (; k < counts.size(); ++k)
        if (counts[k].first == lab) break;
      if (k == counts.size()) {
        counts.emplace_back(lab, 0);
        firsts.push_back(i);
      }
      ++counts[k].second;
      if (counts[k].second > best_count ||
          (counts[k].second == best_count && firsts[k] < best_first)) {
        best_count = counts[k].second;
        best_label = lab;
        best_first = firsts[k];
      }
    }
    out.labels.push_back(best_label);
  }
  return out;
}

ChannelStats compute_stats(const std::vector<Recording>& recordings,
                           StatsProvenance provenance) {
  if (recordings.empty()) throw ArgumentError("compute_stats: no recordings");
  const std::size_t d = recordings[0].num_channels();
  ChannelStats stats;
  stats.provenance = provenance;
  stats.mean.assign(d, 0.0);
  stats.stddev.assign(d, 0.0);

  Vec sum(d, 0.0), sumsq(d, 0.0);
  std::size_t n = 0;
  for (const auto& rec : recordings) {
    if (rec.num_channels() != d)
      throw DataError("compute_stats: recordings disagree on channel count");
    for (std::size_t c = 0; c < d; ++c) {
      for (double v : rec.channels[c]) {
        if (!std::isfinite(v))
          throw DataError("compute_stats: missing values present; run fill_missing first");
        sum[c] += v;
        sumsq[c] += v * v;
      }
    }
    n += rec.length();
  }
  if (n == 0) throw DataError("compute_stats: recordings are empty");

  for (std::size_t c = 0; c < d; ++c) {
    stats.mean[c] = sum[c] / static_cast<double>(n);
    const double var =
        std::max(0.0, sumsq[c] / static_cast<double>(n) - stats.mean[c] * stats.mean[c]);
    double sd = std::sqrt(var);
    if (sd < 1e-8) {
      std::cerr << "warning: channel " << c << " has near-zero variance; flooring std\n";
      sd = 1e-8;
    }
    stats.stddev[c] = sd;
  }
  return stats;
}

Recording standardize(const Recording& rec, const ChannelStats& stats) {
  if (stats.provenance != StatsProvenance::training)
    throw ArgumentError("standardize: stats must come from the training split");
  if (stats.mean.size() != rec.num_channels())
    throw ShapeError("standardize: stats cover " + std::to_string(stats.mean.size()) +
                     " channels, recording has " + std::to_string(rec.num_channels()));
  Recording out = rec;
  for (std::size_t c = 0; c < out.channels.size(); ++c) {
    const double m = stats.mean[c];
    const double inv = 1.0 / stats.stddev[c];
    for (double& v : out.channels[c]) v = (v - m) * inv;
  }
  return out;
}

LabelRule label_rule_from_name(const std::string& name) {
  if (name == "majority") return LabelRule::majority;
  if (name == "last_sample") return LabelRule::last_sample;
  throw ArgumentError("unknown label rule '" + name + "'");
}

std::string label_rule_name(LabelRule rule) {
  return rule == LabelRule::majority ? "majority" : "last_sample";
}

std::vector<SequenceWindow> window(const Recording& rec, double window_seconds,
                                   double overlap_fraction, LabelRule rule,
                                   std::size_t recording_id) {
  if (!(rec.sample_rate > 0.0)) throw ArgumentError("window: recording lacks a sample rate");
  if (!(overlap_fraction >= 0.0) || overlap_fraction >= 1.0)
    throw ArgumentError("window: overlap must be in [0, 1)");
  const auto l_samples = static_cast<long long>(std::llround(window_seconds * rec.sample_rate));
  if (l_samples < 1) throw ArgumentError("window: window length is below one sample");
  const std::size_t l = static_cast<std::size_t>(l_samples);
  const std::size_t step = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(static_cast<double>(l) * (1.0 - overlap_fraction))));

  std::vector<SequenceWindow> out;
  const std::size_t d = rec.num_channels();
  for (std::size_t start = 0; start + l <= rec.length(); start += step) {
    SequenceWindow w;
    w.x = Matrix(l, d);
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t c = 0; c < d; ++c) w.x(t, c) = rec.channels[c][start + t];
    w.recording = recording_id;
    w.start = start;
    w.id = out.size();

    if (rule == LabelRule::last_sample) {
      w.label = rec.labels[start + l - 1];
    } else {
      std::vector<std::pair<int, std::size_t>> counts;
      for (std::size_t i = start; i < start + l; ++i) {
        const int lab = rec.labels[i];
        std::size_t k = 0;
        for (; k < counts.size(); ++k)
          if (counts[k].first == lab) break;
        if (k == counts.size()) counts.emplace_back(lab, 0);
        ++counts[k].second;
      }
      std::size_t best = 0;
      bool tie = false;
      for (std::size_t k = 1; k < counts.size(); ++k) {
        if (counts[k].second > counts[best].second) {
          best = k;
          tie = false;
        } else if (counts[k].second == counts[best].second) {
          tie = true;
        }
      }
      w.label = tie ? rec.labels[start + l - 1] : counts[best].first;
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<SequenceWindow> window_all(const std::vector<Recording>& recordings,
                                       double window_seconds, double overlap_fraction,
                                       LabelRule rule) {
  std::vector<SequenceWindow> all;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    auto ws = window(recordings[r], window_seconds, overlap_fraction, rule, r);
    for (auto& w : ws) {
      w.id = all.size();
      all.push_back(std::move(w));
    }
  }
  return all;
}

SyntheticSpec resolve_spec(SyntheticSpec spec) {
  if (spec.n_windows == 0 || spec.length == 0 || spec.channels == 0 || spec.classes == 0)
    throw ArgumentError("synthetic spec: counts must be positive");
  if (spec.modalities == 0 || spec.modalities > spec.channels)
    throw ArgumentError("synthetic spec: modalities must be in [1, channels]");
  if (spec.motif_min == 0 || spec.motif_min > spec.motif_max || spec.motif_max > spec.length)
    throw ArgumentError("synthetic spec: motif duration range must fit the window");
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std))
    throw ArgumentError("synthetic spec: noise_std must be finite and non-negative");

  if (spec.frequencies.empty()) {
    for (std::size_t c = 0; c < spec.classes; ++c)
      spec.frequencies.push_back(std::min(0.45, 0.05 + 0.10 * static_cast<double>(c)));
  }
  if (spec.amplitudes.empty()) spec.amplitudes.assign(spec.classes, 1.5);
  if (spec.informative_modality.empty()) {
    for (std::size_t c = 0; c < spec.classes; ++c)
      spec.informative_modality.push_back(c % spec.modalities);
  }
  if (spec.frequencies.size() != spec.classes || spec.amplitudes.size() != spec.classes ||
      spec.informative_modality.size() != spec.classes)
    throw ArgumentError("synthetic spec: per-class fields must have one entry per class");
  for (std::size_t c = 0; c < spec.classes; ++c) {
    if (!(spec.frequencies[c] > 0.0)) throw ArgumentError("synthetic spec: frequencies must be positive");
    if (spec.amplitudes[c] == 0.0) throw ArgumentError("synthetic spec: amplitudes must be non-zero");
    if (spec.informative_modality[c] >= spec.modalities)
      throw ArgumentError("synthetic spec: informative modality out of range");
  }
  return spec;
}

SyntheticData gen_synthetic(const SyntheticSpec& raw) {
  const SyntheticSpec spec = resolve_spec(raw);
  const std::size_t t_len = spec.length;
  const std::size_t d = spec.channels;
  const std::size_t m = spec.modalities;

  std::vector<std::size_t> modality_map(d);
  for (std::size_t c = 0; c < d; ++c) modality_map[c] = c * m / d;

  DatasetManifest manifest;
  manifest.sample_rate = 1.0;
  manifest.windowed = true;
  manifest.window_length = t_len;
  manifest.modality_map = modality_map;
  for (std::size_t c = 0; c < d; ++c) manifest.channels.push_back("ch" + std::to_string(c));
  for (std::size_t c = 0; c < spec.classes; ++c)
    manifest.class_names.push_back("class" + std::to_string(c));
  for (std::size_t mm = 0; mm < m; ++mm)
    manifest.modality_names.push_back("mod" + std::to_string(mm));

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

  std::vector<SequenceWindow> windows;
  windows.reserve(spec.n_windows);
  for (std::size_t w = 0; w < spec.n_windows; ++w) {
    const std::size_t cls = w % spec.classes;
    std::uniform_int_distribution<std::size_t> dur_dist(spec.motif_min, spec.motif_max);
    const std::size_t duration = dur_dist(rng);
    std::uniform_int_distribution<std::size_t> start_dist(0, t_len - duration);
    const std::size_t start = start_dist(rng);

    SequenceWindow win;
    win.x = Matrix(t_len, d);
    win.label = static_cast<int>(cls);
    win.id = w;
    win.recording = w;
    if (spec.noise_std > 0.0) {
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t c = 0; c < d; ++c) win.x(t, c) = noise(rng);
    }
    const std::size_t informative = spec.informative_modality[cls];
    const double amp = spec.amplitudes[cls];
    const double freq = spec.frequencies[cls];
    for (std::size_t t = start; t < start + duration; ++t) {
      // phase offset keeps every in-motif sample strictly non-zero
      const double v =
          amp * std::sin(2.0 * M_PI * freq * static_cast<double>(t - start) + 0.3);
      for (std::size_t c = 0; c < d; ++c)
        if (modality_map[c] == informative) win.x(t, c) += v;
    }
    win.truth = MotifTruth{start, start + duration, informative};
    windows.push_back(std::move(win));
  }

  std::vector<std::size_t> order(spec.n_windows);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = spec.n_windows * 70 / 100;
  const std::size_t n_val = spec.n_windows * 15 / 100;

  SyntheticData out;
  out.manifest = std::move(manifest);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.push_back(std::move(windows[order[i]]));
  }
  return out;
}

}  // namespace attnhar
