#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "attnhar/data.hpp"
#include "attnhar/metrics.hpp"
#include "attnhar/model.hpp"

namespace attnhar {

struct InitOptions {
  bool stacked = false;
  bool cell_bias = false;
  std::vector<std::size_t> modality_map;  // required when the variant gates sensors
};

// Weights uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero,
// deterministic per seed (fixed draw order over the tensor list).
ModelParams init_params(std::uint64_t seed, const Dims& dims, Variant variant,
                        const InitOptions& opts = {});

// sqrt of the sum of squares over every tensor entry.
double global_norm(const ModelParams& grads);

// Rescales all gradients in place when their global norm exceeds max_norm;
// returns the pre-clip norm. Non-finite entries raise NumericError naming
// the offending tensor.
double clip_global_norm(ModelParams& grads, double max_norm = 1.0);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Vec> m, v;  // per tensor, tensor_refs order
};

AdamState adam_init(const ModelParams& params);

// Bias-corrected Adam update, params mutated in place.
void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads, double lr);

struct TrainConfig {
  std::size_t hidden = 128;
  double learning_rate = 0.05;
  double max_grad_norm = 1.0;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 -> hardware concurrency
  LossConfig loss;

  // model structure
  std::size_t classes = 0;
  std::size_t attn_hidden = 0;  // k, 0 -> M
  bool stacked = false;
  bool cell_bias = false;
  std::vector<std::size_t> modality_map;  // also defines M (empty -> 1 modality)
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Mean loss and mean gradients over the windows, forward/backward per window
// (parallel over windows, reduced in window order so results do not depend on
// the thread count).
std::pair<double, ModelParams> batch_gradients(const ModelParams& params,
                                               const LossConfig& cfg,
                                               const std::vector<const SequenceWindow*>& batch,
                                               std::size_t threads);

EvalReport evaluate(const ModelParams& params, const LossConfig& cfg,
                    const std::vector<SequenceWindow>& windows, std::size_t classes,
                    std::size_t threads = 0);

// Shuffled mini-batch epochs with clip + Adam, validation mean-F1 model
// selection (ties keep the earlier epoch) and patience-based early stop.
std::pair<ModelParams, TrainHistory> train(const TrainConfig& config,
                                           const std::vector<SequenceWindow>& train_set,
                                           const std::vector<SequenceWindow>& val_set);

}  // namespace attnhar
