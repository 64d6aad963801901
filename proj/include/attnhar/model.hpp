#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "attnhar/matrix.hpp"

namespace attnhar {

// The four model flavours: a plain last-hidden-state LSTM classifier,
// optionally augmented with temporal attention over hidden states and/or
// sensor-modality attention gating the inputs.
enum class Variant { plain, temporal, sensor, temporal_sensor };

bool has_temporal(Variant v);
bool has_sensor(Variant v);
std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct Dims {
  std::size_t input = 0;        // D channels
  std::size_t hidden = 0;       // H hidden units
  std::size_t classes = 0;      // C labels
  std::size_t modalities = 1;   // M sensor modality groups
  std::size_t attn_hidden = 0;  // k, sensor-attention hidden width (0 -> M)

  std::size_t sensor_hidden() const { return attn_hidden == 0 ? modalities : attn_hidden; }
};

struct LossConfig {
  Variant variant = Variant::plain;
  double lambda1 = 0.0;  // temporal continuity strength
  double lambda2 = 0.0;  // sensor continuity strength
};

struct LstmParams {
  Matrix w_xi, w_xf, w_xc, w_xo;  // input_dim x H
  Matrix w_hi, w_hf, w_hc, w_ho;  // H x H
  Vec b_i, b_f, b_o;              // H
  Vec b_c;                        // H; empty unless the cell-bias option is on

  std::size_t input_dim() const { return w_xi.rows(); }
  std::size_t hidden_dim() const { return w_xi.cols(); }
};

struct TemporalAttentionParams {
  Matrix w_alpha;  // H x H bilinear score matrix
};

struct SensorAttentionParams {
  Matrix w_beta;  // k x M
  Matrix w_x;     // k x D
  Matrix v_e;     // M x k
  // channel -> modality group, size D; every modality owns >= 1 channel
  std::vector<std::size_t> modality_map;
};

struct ClassifierHead {
  Matrix w_y;  // H x C
  Vec b_y;     // C
};

// Every learnable tensor of one model instance. Gradients reuse the same
// structure (zeros_like) so optimizer code can walk params and grads in
// lockstep via tensor_refs.
struct ModelParams {
  Variant variant = Variant::plain;
  Dims dims;
  LstmParams lstm;
  std::optional<LstmParams> lstm_top;  // optional stacked second layer
  std::optional<TemporalAttentionParams> temporal;
  std::optional<SensorAttentionParams> sensor;
  ClassifierHead head;
};

// Allocates a zero-valued parameter set with all shapes implied by
// dims/variant. modality_map may be empty when the variant has no sensor
// attention; otherwise it must be a surjective channel -> modality map.
ModelParams make_params(const Dims& dims, Variant variant, bool stacked,
                        bool cell_bias, std::vector<std::size_t> modality_map);

ModelParams zeros_like(const ModelParams& p);

// Throws on any structural inconsistency (shapes, missing components,
// degenerate modality map).
void validate_params(const ModelParams& p);

struct TensorRef {
  std::string name;
  double* data;
  std::size_t size;
  std::vector<std::size_t> shape;
};

struct ConstTensorRef {
  std::string name;
  const double* data;
  std::size_t size;
  std::vector<std::size_t> shape;
};

// Stable, documented enumeration order: lstm.{w_xi,w_xf,w_xc,w_xo,w_hi,w_hf,
// w_hc,w_ho,b_i,b_f,b_o[,b_c]}, lstm_top.* (same order), temporal.w_alpha,
// sensor.{w_beta,w_x,v_e}, head.{w_y,b_y}. Optional components are skipped
// when absent.
std::vector<TensorRef> tensor_refs(ModelParams& p);
std::vector<ConstTensorRef> tensor_refs(const ModelParams& p);

// Per-window attention weights and the context vector that reached the
// classifier. alpha is one-hot at T for variants without temporal attention;
// beta rows are uniform for variants without sensor attention.
struct AttentionTrace {
  Vec alpha;    // T, sums to 1
  Matrix beta;  // T x M, each row sums to 1
  Vec context;  // H
};

struct LstmStepOut {
  Vec h, c;           // new state
  Vec i, f, g, o;     // gate activations (g = candidate tanh)
};

// One recurrence step, Eqs.-style gate order i/f/candidate/o.
LstmStepOut lstm_step(const LstmParams& p, std::span<const double> x_t,
                      std::span<const double> h_prev, std::span<const double> c_prev);

struct LstmCache {
  Matrix inputs;                    // T x input_dim, as fed to this layer
  Matrix h, c;                      // T x H
  Matrix gate_i, gate_f, gate_g, gate_o;  // T x H
};

// Runs the recurrence over all T rows of x with zero initial state.
LstmCache lstm_forward(const LstmParams& p, const Matrix& x);

struct TemporalAttentionOut {
  Vec scores;   // T raw bilinear scores against h_T
  Vec alpha;    // softmax(scores)
  Vec context;  // sum_t alpha_t h_t
};

TemporalAttentionOut temporal_attention(const Matrix& h_states,
                                        const TemporalAttentionParams& p);

struct SensorStepOut {
  Vec beta;     // M, softmax of energies
  Vec x_prime;  // D, beta broadcast over each modality's channels times x
  Vec hidden;   // k, tanh of the energy preactivation (cached for backward)
};

SensorStepOut sensor_attention_step(const SensorAttentionParams& p,
                                    std::span<const double> beta_prev,
                                    std::span<const double> x_t);

struct SensorCache {
  Matrix beta;    // (T+1) x M, row 0 is the uniform beta_0
  Matrix hidden;  // T x k
};

// Everything forward() computed: the prediction, the exported trace, and the
// caches backward() replays.
struct ForwardResult {
  Vec probs;   // C
  AttentionTrace trace;

  Matrix x;  // the input this result was computed from
  std::optional<SensorCache> sensor;
  std::vector<LstmCache> layers;  // bottom to top
  Vec scores;                     // temporal attention scores (empty otherwise)
  Vec logits;                     // C
  bool alpha_overridden = false;
};

// Variant dispatch per params.variant. cfg.variant must agree.
// alpha_override (testing hook) replaces the temporal attention weights; a
// result produced with it cannot be fed to backward().
ForwardResult forward(const ModelParams& params, const LossConfig& cfg, const Matrix& x,
                      const Vec* alpha_override = nullptr);

// sum_{t>=2} |alpha_t - alpha_{t-1}|
double temporal_continuity(std::span<const double> alpha);
// sum_{t>=2} sum_m |beta_{t,m} - beta_{t-1,m}| over the T trace rows
double sensor_continuity(const Matrix& beta);

// Cross-entropy -log(probs[label]) with a 1e-12 floor inside the log, plus
// the continuity penalties for whichever attention the variant carries.
double loss(const Vec& probs, std::size_t label, const AttentionTrace& trace,
            const LossConfig& cfg);

// Exact reverse-mode gradients of loss() w.r.t. every learnable tensor.
// fwd must come from forward(params, cfg, x) with no alpha override.
ModelParams backward(const ModelParams& params, const LossConfig& cfg, const Matrix& x,
                     std::size_t label, const ForwardResult& fwd);

}  // namespace attnhar
