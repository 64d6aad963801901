#include "attnhar/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

#include "attnhar/errors.hpp"

namespace attnhar {

namespace {

std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Strided worker split; fn(i) must be independent across i.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::min(resolve_threads(threads), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr error;
  std::mutex error_mu;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        std::scoped_lock lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::size_t modality_count(const std::vector<std::size_t>& map) {
  if (map.empty()) return 1;
  return 1 + *std::max_element(map.begin(), map.end());
}

}  // namespace

ModelParams init_params(std::uint64_t seed, const Dims& dims, Variant variant,
                        const InitOptions& opts) {
  ModelParams p = make_params(dims, variant, opts.stacked, opts.cell_bias, opts.modality_map);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& m, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : m.values()) x = dist(rng);
  };
  auto fill_layer = [&](LstmParams& l) {
    const std::size_t in = l.input_dim();
    const std::size_t h = l.hidden_dim();
    fill(l.w_xi, in);
    fill(l.w_xf, in);
    fill(l.w_xc, in);
    fill(l.w_xo, in);
    fill(l.w_hi, h);
    fill(l.w_hf, h);
    fill(l.w_hc, h);
    fill(l.w_ho, h);
  };
  fill_layer(p.lstm);
  if (p.lstm_top) fill_layer(*p.lstm_top);
  if (p.temporal) fill(p.temporal->w_alpha, dims.hidden);
  if (p.sensor) {
    // these act on column vectors, so fan-in is the column count
    fill(p.sensor->w_beta, p.sensor->w_beta.cols());
    fill(p.sensor->w_x, p.sensor->w_x.cols());
    fill(p.sensor->v_e, p.sensor->v_e.cols());
  }
  fill(p.head.w_y, dims.hidden);
  return p;
}

double global_norm(const ModelParams& grads) {
  double sumsq = 0.0;
  for (const auto& ref : tensor_refs(grads))
    for (std::size_t i = 0; i < ref.size; ++i) sumsq += ref.data[i] * ref.data[i];
  return std::sqrt(sumsq);
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ArgumentError("clip_global_norm: max_norm must be positive");
  double sumsq = 0.0;
  for (const auto& ref : tensor_refs(grads)) {
    double local = 0.0;
    for (std::size_t i = 0; i < ref.size; ++i) local += ref.data[i] * ref.data[i];
    if (!std::isfinite(local)) throw NumericError("non-finite gradient in tensor '" + ref.name + "'");
    sumsq += local;
  }
  const double norm = std::sqrt(sumsq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& ref : tensor_refs(grads))
      for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] *= scale;
  }
  return norm;
}

AdamState adam_init(const ModelParams& params) {
  AdamState st;
  for (const auto& ref : tensor_refs(params)) {
    st.m.emplace_back(ref.size, 0.0);
    st.v.emplace_back(ref.size, 0.0);
  }
  return st;
}

void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads, double lr) {
  if (!(lr > 0.0)) throw ArgumentError("adam_step: learning rate must be positive");
  auto prefs = tensor_refs(params);
  auto grefs = tensor_refs(grads);
  if (prefs.size() != grefs.size() || prefs.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state structure mismatch");

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t ti = 0; ti < prefs.size(); ++ti) {
    if (prefs[ti].size != grefs[ti].size)
      throw ShapeError("adam_step: tensor '" + prefs[ti].name + "' size mismatch");
    Vec& m = state.m[ti];
    Vec& v = state.v[ti];
    double* p = prefs[ti].data;
    const double* g = grefs[ti].data;
    for (std::size_t i = 0; i < prefs[ti].size; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

std::pair<double, ModelParams> batch_gradients(const ModelParams& params,
                                               const LossConfig& cfg,
                                               const std::vector<const SequenceWindow*>& batch,
                                               std::size_t threads) {
  if (batch.empty()) throw ArgumentError("batch_gradients: empty batch");
  std::vector<double> losses(batch.size());
  std::vector<ModelParams> grads(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const SequenceWindow& w = *batch[i];
    ForwardResult fwd = forward(params, cfg, w.x);
    losses[i] = loss(fwd.probs, static_cast<std::size_t>(w.label), fwd.trace, cfg);
    grads[i] = backward(params, cfg, w.x, static_cast<std::size_t>(w.label), fwd);
  });

  // ordered reduction keeps results independent of the thread count
  ModelParams total = std::move(grads[0]);
  double loss_sum = losses[0];
  auto trefs = tensor_refs(total);
  for (std::size_t i = 1; i < batch.size(); ++i) {
    auto srefs = tensor_refs(std::as_const(grads[i]));
    for (std::size_t ti = 0; ti < trefs.size(); ++ti)
      for (std::size_t j = 0; j < trefs[ti].size; ++j)
        trefs[ti].data[j] += srefs[ti].data[j];
    loss_sum += losses[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& ref : trefs)
    for (std::size_t j = 0; j < ref.size; ++j) ref.data[j] *= inv;
  return {loss_sum * inv, std::move(total)};
}

EvalReport evaluate(const ModelParams& params, const LossConfig& cfg,
                    const std::vector<SequenceWindow>& windows, std::size_t classes,
                    std::size_t threads) {
  if (windows.empty()) throw ArgumentError("evaluate: no windows");
  std::vector<std::size_t> predicted(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    ForwardResult fwd = forward(params, cfg, windows[i].x);
    predicted[i] = static_cast<std::size_t>(
        std::max_element(fwd.probs.begin(), fwd.probs.end()) - fwd.probs.begin());
  });
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < windows.size(); ++i)
    cm.add(static_cast<std::size_t>(windows[i].label), predicted[i]);
  return report(cm);
}

std::pair<ModelParams, TrainHistory> train(const TrainConfig& config,
                                           const std::vector<SequenceWindow>& train_set,
                                           const std::vector<SequenceWindow>& val_set) {
  if (train_set.empty() || val_set.empty())
    throw ArgumentError("train: training and validation splits must be non-empty");
  if (config.classes == 0) throw ArgumentError("train: class count not set");
  if (!(config.learning_rate > 0.0)) throw ArgumentError("train: learning rate must be positive");
  if (config.batch_size == 0 || config.max_epochs == 0 || config.hidden == 0)
    throw ArgumentError("train: hidden/batch/epochs must be positive");

  const std::size_t d = train_set[0].x.cols();
  for (const auto* split : {&train_set, &val_set}) {
    for (const auto& w : *split) {
      if (w.x.cols() != d) throw ArgumentError("train: inconsistent channel count across windows");
      if (w.label < 0 || static_cast<std::size_t>(w.label) >= config.classes)
        throw ArgumentError("train: label out of range");
    }
  }

  Dims dims;
  dims.input = d;
  dims.hidden = config.hidden;
  dims.classes = config.classes;
  dims.modalities = modality_count(config.modality_map);
  dims.attn_hidden = config.attn_hidden;

  InitOptions opts;
  opts.stacked = config.stacked;
  opts.cell_bias = config.cell_bias;
  opts.modality_map = config.modality_map;
  if (opts.modality_map.empty() && has_sensor(config.loss.variant))
    opts.modality_map.assign(d, 0);

  ModelParams params = init_params(config.seed, dims, config.loss.variant, opts);
  AdamState adam = adam_init(params);

  TrainHistory history;
  ModelParams best = params;
  double best_f1 = -1.0;
  std::size_t since_improve = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(config.seed + 0x9E3779B97F4A7C15ULL * (epoch + 1));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      std::vector<const SequenceWindow*> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);

      auto [batch_loss, grads] = batch_gradients(params, config.loss, batch, config.threads);
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      clip_global_norm(grads, config.max_grad_norm);
      adam_step(adam, params, grads, config.learning_rate);
      loss_sum += batch_loss;
      ++batches;
    }

    const double val_f1 =
        evaluate(params, config.loss, val_set, config.classes, config.threads).mean_f1;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val_f1, secs});

    if (val_f1 > best_f1) {
      best_f1 = val_f1;
      best = params;
      history.best_epoch = epoch;
      since_improve = 0;
    } else {
      ++since_improve;
      if (since_improve > config.patience) break;
    }
  }
  history.best_val_f1 = best_f1;
  return {std::move(best), std::move(history)};
}

}  // namespace attnhar
