#include "attnhar/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "attnhar/errors.hpp"

namespace attnhar {

namespace {

constexpr double kProbFloor = 1e-12;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_prob_vector(std::span<const double> v, const char* what) {
  double total = 0.0;
  for (double x : v) {
    if (!(x >= -1e-12)) throw ArgumentError(std::string(what) + ": negative entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ArgumentError(std::string(what) + ": entries sum to " + std::to_string(total));
  }
}

Vec gate_preact(std::span<const double> x, const Matrix& wx,
                std::span<const double> h, const Matrix& wh, const Vec* b) {
  Vec z(wx.cols(), 0.0);
  if (b != nullptr && !b->empty()) z = *b;
  vecmat_add(x, wx, z);
  vecmat_add(h, wh, z);
  return z;
}

void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

bool has_temporal(Variant v) {
  return v == Variant::temporal || v == Variant::temporal_sensor;
}

bool has_sensor(Variant v) {
  return v == Variant::sensor || v == Variant::temporal_sensor;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::temporal: return "temporal";
    case Variant::sensor: return "sensor";
    case Variant::temporal_sensor: return "temporal_sensor";
  }
  throw ArgumentError("variant_name: bad enum value");
}

Variant variant_from_name(const std::string& name) {
  if (name == "plain") return Variant::plain;
  if (name == "temporal") return Variant::temporal;
  if (name == "sensor") return Variant::sensor;
  if (name == "temporal_sensor") return Variant::temporal_sensor;
  throw ArgumentError("unknown variant '" + name + "'");
}

ModelParams make_params(const Dims& dims, Variant variant, bool stacked,
                        bool cell_bias, std::vector<std::size_t> modality_map) {
  if (dims.input == 0 || dims.hidden == 0 || dims.classes == 0)
    throw ArgumentError("make_params: dims must be positive");
  ModelParams p;
  p.variant = variant;
  p.dims = dims;
  const std::size_t d = dims.input;
  const std::size_t h = dims.hidden;

  auto make_layer = [&](std::size_t in) {
    LstmParams l;
    l.w_xi = Matrix(in, h);
    l.w_xf = Matrix(in, h);
    l.w_xc = Matrix(in, h);
    l.w_xo = Matrix(in, h);
    l.w_hi = Matrix(h, h);
    l.w_hf = Matrix(h, h);
    l.w_hc = Matrix(h, h);
    l.w_ho = Matrix(h, h);
    l.b_i.assign(h, 0.0);
    l.b_f.assign(h, 0.0);
    l.b_o.assign(h, 0.0);
    if (cell_bias) l.b_c.assign(h, 0.0);
    return l;
  };

  p.lstm = make_layer(d);
  if (stacked) p.lstm_top = make_layer(h);
  if (has_temporal(variant)) p.temporal = TemporalAttentionParams{Matrix(h, h)};
  if (has_sensor(variant)) {
    const std::size_t m = dims.modalities;
    const std::size_t k = dims.sensor_hidden();
    if (modality_map.empty() && m == 1) modality_map.assign(d, 0);
    SensorAttentionParams s;
    s.w_beta = Matrix(k, m);
    s.w_x = Matrix(k, d);
    s.v_e = Matrix(m, k);
    s.modality_map = std::move(modality_map);
    p.sensor = std::move(s);
  }
  p.head.w_y = Matrix(h, dims.classes);
  p.head.b_y.assign(dims.classes, 0.0);
  validate_params(p);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& ref : tensor_refs(z)) std::fill(ref.data, ref.data + ref.size, 0.0);
  return z;
}

void validate_params(const ModelParams& p) {
  const std::size_t d = p.dims.input;
  const std::size_t h = p.dims.hidden;
  const std::size_t c = p.dims.classes;

  auto check_layer = [&](const LstmParams& l, std::size_t in) {
    require(l.w_xi.rows() == in && l.w_xi.cols() == h, "lstm: w_xi shape");
    require(l.w_xf.rows() == in && l.w_xf.cols() == h, "lstm: w_xf shape");
    require(l.w_xc.rows() == in && l.w_xc.cols() == h, "lstm: w_xc shape");
    require(l.w_xo.rows() == in && l.w_xo.cols() == h, "lstm: w_xo shape");
    for (const Matrix* w : {&l.w_hi, &l.w_hf, &l.w_hc, &l.w_ho})
      require(w->rows() == h && w->cols() == h, "lstm: recurrent weight shape");
    require(l.b_i.size() == h && l.b_f.size() == h && l.b_o.size() == h,
            "lstm: bias length");
    require(l.b_c.empty() || l.b_c.size() == h, "lstm: cell bias length");
  };

  check_layer(p.lstm, d);
  if (p.lstm_top) check_layer(*p.lstm_top, h);

  if (has_temporal(p.variant)) {
    if (!p.temporal) throw ConfigError("variant needs temporal attention parameters");
    require(p.temporal->w_alpha.rows() == h && p.temporal->w_alpha.cols() == h,
            "temporal: w_alpha shape");
  }
  if (has_sensor(p.variant)) {
    if (!p.sensor) throw ConfigError("variant needs sensor attention parameters");
    const std::size_t m = p.dims.modalities;
    const std::size_t k = p.dims.sensor_hidden();
    require(p.sensor->w_beta.rows() == k && p.sensor->w_beta.cols() == m,
            "sensor: w_beta shape");
    require(p.sensor->w_x.rows() == k && p.sensor->w_x.cols() == d, "sensor: w_x shape");
    require(p.sensor->v_e.rows() == m && p.sensor->v_e.cols() == k, "sensor: v_e shape");
    const auto& map = p.sensor->modality_map;
    if (map.size() != d) throw ArgumentError("sensor: modality_map must cover every channel");
    std::vector<bool> seen(m, false);
    for (std::size_t mm : map) {
      if (mm >= m) throw ArgumentError("sensor: modality index out of range");
      seen[mm] = true;
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
      throw ArgumentError("sensor: every modality needs at least one channel");
  }
  require(p.head.w_y.rows() == h && p.head.w_y.cols() == c, "head: w_y shape");
  require(p.head.b_y.size() == c, "head: b_y length");
}

namespace {

template <typename Params, typename Ref, typename MatPtr, typename VecPtr>
std::vector<Ref> refs_impl(Params& p) {
  std::vector<Ref> out;
  auto add_mat = [&](const std::string& name, MatPtr m) {
    out.push_back(Ref{name, m->data(), m->size(), {m->rows(), m->cols()}});
  };
  auto add_vec = [&](const std::string& name, VecPtr v) {
    if (v->empty()) return;
    out.push_back(Ref{name, v->data(), v->size(), {v->size()}});
  };
  auto add_layer = [&](const std::string& prefix, auto& l) {
    add_mat(prefix + ".w_xi", &l.w_xi);
    add_mat(prefix + ".w_xf", &l.w_xf);
    add_mat(prefix + ".w_xc", &l.w_xc);
    add_mat(prefix + ".w_xo", &l.w_xo);
    add_mat(prefix + ".w_hi", &l.w_hi);
    add_mat(prefix + ".w_hf", &l.w_hf);
    add_mat(prefix + ".w_hc", &l.w_hc);
    add_mat(prefix + ".w_ho", &l.w_ho);
    add_vec(prefix + ".b_i", &l.b_i);
    add_vec(prefix + ".b_f", &l.b_f);
    add_vec(prefix + ".b_o", &l.b_o);
    add_vec(prefix + ".b_c", &l.b_c);
  };
  add_layer("lstm", p.lstm);
  if (p.lstm_top) add_layer("lstm_top", *p.lstm_top);
  if (p.temporal) add_mat("temporal.w_alpha", &p.temporal->w_alpha);
  if (p.sensor) {
    add_mat("sensor.w_beta", &p.sensor->w_beta);
    add_mat("sensor.w_x", &p.sensor->w_x);
    add_mat("sensor.v_e", &p.sensor->v_e);
  }
  add_mat("head.w_y", &p.head.w_y);
  add_vec("head.b_y", &p.head.b_y);
  return out;
}

}  // namespace

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  return refs_impl<ModelParams, TensorRef, Matrix*, Vec*>(p);
}

std::vector<ConstTensorRef> tensor_refs(const ModelParams& p) {
  return refs_impl<const ModelParams, ConstTensorRef, const Matrix*, const Vec*>(p);
}

LstmStepOut lstm_step(const LstmParams& p, std::span<const double> x_t,
                      std::span<const double> h_prev, std::span<const double> c_prev) {
  const std::size_t h = p.hidden_dim();
  if (x_t.size() != p.input_dim())
    throw ShapeError("lstm_step: input length " + std::to_string(x_t.size()) +
                     ", expected " + std::to_string(p.input_dim()));
  if (h_prev.size() != h || c_prev.size() != h)
    throw ShapeError("lstm_step: state length mismatch");

  const Vec zi = gate_preact(x_t, p.w_xi, h_prev, p.w_hi, &p.b_i);
  const Vec zf = gate_preact(x_t, p.w_xf, h_prev, p.w_hf, &p.b_f);
  const Vec zg = gate_preact(x_t, p.w_xc, h_prev, p.w_hc, p.b_c.empty() ? nullptr : &p.b_c);
  const Vec zo = gate_preact(x_t, p.w_xo, h_prev, p.w_ho, &p.b_o);

  LstmStepOut out;
  out.i.resize(h);
  out.f.resize(h);
  out.g.resize(h);
  out.o.resize(h);
  out.c.resize(h);
  out.h.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    out.i[j] = sigmoid(zi[j]);
    out.f[j] = sigmoid(zf[j]);
    out.g[j] = std::tanh(zg[j]);
    out.o[j] = sigmoid(zo[j]);
    out.c[j] = out.f[j] * c_prev[j] + out.i[j] * out.g[j];
    out.h[j] = out.o[j] * std::tanh(out.c[j]);
  }
  return out;
}

LstmCache lstm_forward(const LstmParams& p, const Matrix& x) {
  if (x.rows() == 0) throw ArgumentError("lstm_forward: empty sequence");
  if (x.cols() != p.input_dim())
    throw ShapeError("lstm_forward: " + std::to_string(x.cols()) + " channels, expected " +
                     std::to_string(p.input_dim()));
  const std::size_t t_len = x.rows();
  const std::size_t h = p.hidden_dim();

  LstmCache cache;
  cache.inputs = x;
  cache.h = Matrix(t_len, h);
  cache.c = Matrix(t_len, h);
  cache.gate_i = Matrix(t_len, h);
  cache.gate_f = Matrix(t_len, h);
  cache.gate_g = Matrix(t_len, h);
  cache.gate_o = Matrix(t_len, h);

  Vec h_prev(h, 0.0), c_prev(h, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    LstmStepOut s = lstm_step(p, x.row(t), h_prev, c_prev);
    std::copy(s.h.begin(), s.h.end(), cache.h.row(t).begin());
    std::copy(s.c.begin(), s.c.end(), cache.c.row(t).begin());
    std::copy(s.i.begin(), s.i.end(), cache.gate_i.row(t).begin());
    std::copy(s.f.begin(), s.f.end(), cache.gate_f.row(t).begin());
    std::copy(s.g.begin(), s.g.end(), cache.gate_g.row(t).begin());
    std::copy(s.o.begin(), s.o.end(), cache.gate_o.row(t).begin());
    h_prev = std::move(s.h);
    c_prev = std::move(s.c);
  }
  return cache;
}

TemporalAttentionOut temporal_attention(const Matrix& h_states,
                                        const TemporalAttentionParams& p) {
  const std::size_t t_len = h_states.rows();
  const std::size_t h = h_states.cols();
  if (t_len == 0) throw ArgumentError("temporal_attention: empty state sequence");
  if (p.w_alpha.rows() != h || p.w_alpha.cols() != h)
    throw ShapeError("temporal_attention: w_alpha shape");

  // score_t = h_T^T W h_t for every t including t = T
  Vec query(h, 0.0);  // h_T^T W
  vecmat_add(h_states.row(t_len - 1), p.w_alpha, query);

  TemporalAttentionOut out;
  out.scores.resize(t_len);
  for (std::size_t t = 0; t < t_len; ++t) out.scores[t] = dot(query, h_states.row(t));
  out.alpha = softmax(out.scores);
  out.context.assign(h, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto row = h_states.row(t);
    const double a = out.alpha[t];
    for (std::size_t j = 0; j < h; ++j) out.context[j] += a * row[j];
  }
  return out;
}

SensorStepOut sensor_attention_step(const SensorAttentionParams& p,
                                    std::span<const double> beta_prev,
                                    std::span<const double> x_t) {
  const std::size_t m = p.v_e.rows();
  const std::size_t k = p.w_beta.rows();
  if (beta_prev.size() != m) throw ShapeError("sensor_attention_step: beta length");
  if (x_t.size() != p.w_x.cols()) throw ShapeError("sensor_attention_step: input length");
  check_prob_vector(beta_prev, "sensor_attention_step: beta_prev");

  Vec u(k, 0.0);
  matvec_add(p.w_beta, beta_prev, u);
  matvec_add(p.w_x, x_t, u);

  SensorStepOut out;
  out.hidden.resize(k);
  for (std::size_t j = 0; j < k; ++j) out.hidden[j] = std::tanh(u[j]);

  Vec energy(m, 0.0);
  matvec_add(p.v_e, out.hidden, energy);
  out.beta = softmax(energy);

  out.x_prime.resize(x_t.size());
  for (std::size_t d = 0; d < x_t.size(); ++d)
    out.x_prime[d] = out.beta[p.modality_map[d]] * x_t[d];
  return out;
}

ForwardResult forward(const ModelParams& params, const LossConfig& cfg, const Matrix& x,
                      const Vec* alpha_override) {
  validate_params(params);
  if (cfg.variant != params.variant)
    throw ConfigError("forward: loss config variant '" + variant_name(cfg.variant) +
                      "' does not match model variant '" + variant_name(params.variant) + "'");
  if (x.rows() == 0) throw ArgumentError("forward: empty window");
  if (x.cols() != params.dims.input)
    throw ShapeError("forward: window has " + std::to_string(x.cols()) +
                     " channels, model expects " + std::to_string(params.dims.input));

  const std::size_t t_len = x.rows();
  const std::size_t m = params.dims.modalities;

  ForwardResult res;
  res.x = x;

  // Sensor attention rescales the raw inputs before the recurrence.
  const Matrix* lstm_input = &x;
  Matrix gated;
  if (has_sensor(params.variant)) {
    const auto& sp = *params.sensor;
    SensorCache sc;
    sc.beta = Matrix(t_len + 1, m);
    sc.hidden = Matrix(t_len, params.dims.sensor_hidden());
    gated = Matrix(t_len, x.cols());
    for (std::size_t j = 0; j < m; ++j) sc.beta(0, j) = 1.0 / static_cast<double>(m);
    for (std::size_t t = 0; t < t_len; ++t) {
      SensorStepOut step = sensor_attention_step(sp, sc.beta.row(t), x.row(t));
      std::copy(step.beta.begin(), step.beta.end(), sc.beta.row(t + 1).begin());
      std::copy(step.hidden.begin(), step.hidden.end(), sc.hidden.row(t).begin());
      std::copy(step.x_prime.begin(), step.x_prime.end(), gated.row(t).begin());
    }
    res.sensor = std::move(sc);
    lstm_input = &gated;
  }

  res.layers.push_back(lstm_forward(params.lstm, *lstm_input));
  if (params.lstm_top) res.layers.push_back(lstm_forward(*params.lstm_top, res.layers[0].h));
  const Matrix& top_h = res.layers.back().h;

  Vec alpha;
  Vec context;
  if (has_temporal(params.variant)) {
    TemporalAttentionOut att = temporal_attention(top_h, *params.temporal);
    res.scores = std::move(att.scores);
    if (alpha_override != nullptr) {
      if (alpha_override->size() != t_len)
        throw ShapeError("forward: alpha override length");
      check_prob_vector(*alpha_override, "forward: alpha override");
      alpha = *alpha_override;
      context.assign(top_h.cols(), 0.0);
      for (std::size_t t = 0; t < t_len; ++t) {
        const auto row = top_h.row(t);
        for (std::size_t j = 0; j < row.size(); ++j) context[j] += alpha[t] * row[j];
      }
      res.alpha_overridden = true;
    } else {
      alpha = std::move(att.alpha);
      context = std::move(att.context);
    }
  } else {
    if (alpha_override != nullptr)
      throw ArgumentError("forward: alpha override requires temporal attention");
    alpha.assign(t_len, 0.0);
    alpha.back() = 1.0;
    const auto last = top_h.row(t_len - 1);
    context.assign(last.begin(), last.end());
  }

  res.logits = params.head.b_y;
  vecmat_add(context, params.head.w_y, res.logits);
  res.probs = softmax(res.logits);

  res.trace.alpha = std::move(alpha);
  res.trace.context = std::move(context);
  if (res.sensor) {
    res.trace.beta = Matrix(t_len, m);
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto src = res.sensor->beta.row(t + 1);
      std::copy(src.begin(), src.end(), res.trace.beta.row(t).begin());
    }
  } else {
    res.trace.beta = Matrix(t_len, m);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < m; ++j) res.trace.beta(t, j) = 1.0 / static_cast<double>(m);
  }
  return res;
}

double temporal_continuity(std::span<const double> alpha) {
  double total = 0.0;
  for (std::size_t t = 1; t < alpha.size(); ++t) total += std::abs(alpha[t] - alpha[t - 1]);
  return total;
}

double sensor_continuity(const Matrix& beta) {
  double total = 0.0;
  for (std::size_t t = 1; t < beta.rows(); ++t)
    for (std::size_t j = 0; j < beta.cols(); ++j)
      total += std::abs(beta(t, j) - beta(t - 1, j));
  return total;
}

double loss(const Vec& probs, std::size_t label, const AttentionTrace& trace,
            const LossConfig& cfg) {
  if (label >= probs.size()) throw ArgumentError("loss: label out of range");
  if (!(cfg.lambda1 >= 0.0) || !(cfg.lambda2 >= 0.0))
    throw ArgumentError("loss: lambda must be finite and non-negative");
  double total = -std::log(std::max(probs[label], kProbFloor));
  if (has_temporal(cfg.variant)) total += cfg.lambda1 * temporal_continuity(trace.alpha);
  if (has_sensor(cfg.variant)) total += cfg.lambda2 * sensor_continuity(trace.beta);
  return total;
}

namespace {

// BPTT through one layer. dh_in holds the externally injected per-timestep
// hidden gradients; returns d(inputs) and accumulates parameter grads into g.
Matrix lstm_backward(const LstmParams& p, const LstmCache& cache, const Matrix& dh_in,
                     LstmParams& g) {
  const std::size_t t_len = cache.h.rows();
  const std::size_t h = p.hidden_dim();
  const std::size_t in_dim = p.input_dim();

  Matrix dx(t_len, in_dim);
  Vec dh_rec(h, 0.0), dc_rec(h, 0.0);
  Vec dzi(h), dzf(h), dzg(h), dzo(h);
  const Vec zero_state(h, 0.0);

  for (std::size_t ti = t_len; ti-- > 0;) {
    const auto i = cache.gate_i.row(ti);
    const auto f = cache.gate_f.row(ti);
    const auto gg = cache.gate_g.row(ti);
    const auto o = cache.gate_o.row(ti);
    const auto c = cache.c.row(ti);
    const std::span<const double> c_prev =
        ti > 0 ? cache.c.row(ti - 1) : std::span<const double>(zero_state);
    const std::span<const double> h_prev =
        ti > 0 ? cache.h.row(ti - 1) : std::span<const double>(zero_state);

    for (std::size_t j = 0; j < h; ++j) {
      const double dh = dh_in(ti, j) + dh_rec[j];
      const double tc = std::tanh(c[j]);
      const double dov = dh * tc;
      dzo[j] = dov * o[j] * (1.0 - o[j]);
      const double dc = dc_rec[j] + dh * o[j] * (1.0 - tc * tc);
      dzi[j] = dc * gg[j] * i[j] * (1.0 - i[j]);
      dzf[j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
      dzg[j] = dc * i[j] * (1.0 - gg[j] * gg[j]);
      dc_rec[j] = dc * f[j];
    }

    const auto x_t = cache.inputs.row(ti);
    outer_add(x_t, dzi, g.w_xi);
    outer_add(x_t, dzf, g.w_xf);
    outer_add(x_t, dzg, g.w_xc);
    outer_add(x_t, dzo, g.w_xo);
    if (ti > 0) {
      outer_add(h_prev, dzi, g.w_hi);
      outer_add(h_prev, dzf, g.w_hf);
      outer_add(h_prev, dzg, g.w_hc);
      outer_add(h_prev, dzo, g.w_ho);
    }
    for (std::size_t j = 0; j < h; ++j) {
      g.b_i[j] += dzi[j];
      g.b_f[j] += dzf[j];
      g.b_o[j] += dzo[j];
      if (!g.b_c.empty()) g.b_c[j] += dzg[j];
    }

    auto dx_row = dx.row(ti);
    matvec_add(p.w_xi, dzi, dx_row);
    matvec_add(p.w_xf, dzf, dx_row);
    matvec_add(p.w_xc, dzg, dx_row);
    matvec_add(p.w_xo, dzo, dx_row);

    std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    matvec_add(p.w_hi, dzi, dh_rec);
    matvec_add(p.w_hf, dzf, dh_rec);
    matvec_add(p.w_hc, dzg, dh_rec);
    matvec_add(p.w_ho, dzo, dh_rec);
  }
  return dx;
}

}  // namespace

ModelParams backward(const ModelParams& params, const LossConfig& cfg, const Matrix& x,
                     std::size_t label, const ForwardResult& fwd) {
  if (fwd.alpha_overridden)
    throw ArgumentError("backward: result was produced with an alpha override");
  if (!fwd.x.same_shape(x) || fwd.x.values() != x.values())
    throw InternalError("backward: forward cache does not match the given input");
  if (cfg.variant != params.variant)
    throw ConfigError("backward: loss config variant does not match model");
  if (label >= params.dims.classes) throw ArgumentError("backward: label out of range");
  if (fwd.layers.empty() || fwd.layers[0].h.cols() != params.dims.hidden)
    throw InternalError("backward: forward cache does not match the model");

  const std::size_t t_len = x.rows();
  const std::size_t h = params.dims.hidden;
  ModelParams grads = zeros_like(params);

  // Softmax + clamped cross-entropy. The floor only binds in pathological
  // cases; inside the clamp the CE contribution is locally constant.
  Vec dlogits(params.dims.classes, 0.0);
  if (fwd.probs[label] > kProbFloor) {
    dlogits = fwd.probs;
    dlogits[label] -= 1.0;
  }

  outer_add(fwd.trace.context, dlogits, grads.head.w_y);
  for (std::size_t j = 0; j < dlogits.size(); ++j) grads.head.b_y[j] += dlogits[j];
  Vec dcontext(h, 0.0);
  matvec_add(params.head.w_y, dlogits, dcontext);

  const Matrix& top_h = fwd.layers.back().h;
  Matrix dtop_h(t_len, h);

  if (has_temporal(params.variant)) {
    const Vec& alpha = fwd.trace.alpha;
    Vec dalpha(t_len, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto row = top_h.row(t);
      auto drow = dtop_h.row(t);
      dalpha[t] = dot(dcontext, row);
      for (std::size_t j = 0; j < h; ++j) drow[j] += alpha[t] * dcontext[j];
    }
    if (cfg.lambda1 != 0.0) {
      for (std::size_t t = 1; t < t_len; ++t) {
        const double s = cfg.lambda1 * sign(alpha[t] - alpha[t - 1]);
        dalpha[t] += s;
        dalpha[t - 1] -= s;
      }
    }
    const Vec dscore = softmax_vjp(alpha, dalpha);

    // score_t = h_T^T W h_t; fold the rank-1 sum over t into one outer product.
    const auto h_last = top_h.row(t_len - 1);
    Vec weighted(h, 0.0);  // sum_t dscore_t h_t
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto row = top_h.row(t);
      for (std::size_t j = 0; j < h; ++j) weighted[j] += dscore[t] * row[j];
    }
    outer_add(h_last, weighted, grads.temporal->w_alpha);

    Vec query(h, 0.0);  // h_T^T W, shared by every d h_t term
    vecmat_add(h_last, params.temporal->w_alpha, query);
    for (std::size_t t = 0; t < t_len; ++t) {
      auto drow = dtop_h.row(t);
      for (std::size_t j = 0; j < h; ++j) drow[j] += dscore[t] * query[j];
    }
    auto dlast = dtop_h.row(t_len - 1);
    matvec_add(params.temporal->w_alpha, weighted, dlast);
  } else {
    auto dlast = dtop_h.row(t_len - 1);
    for (std::size_t j = 0; j < h; ++j) dlast[j] += dcontext[j];
  }

  // BPTT, top layer down; each layer's input gradient feeds the layer below.
  Matrix dinputs;
  if (params.lstm_top) {
    Matrix dmid = lstm_backward(*params.lstm_top, fwd.layers[1], dtop_h, *grads.lstm_top);
    dinputs = lstm_backward(params.lstm, fwd.layers[0], dmid, grads.lstm);
  } else {
    dinputs = lstm_backward(params.lstm, fwd.layers[0], dtop_h, grads.lstm);
  }

  if (has_sensor(params.variant)) {
    const auto& sp = *params.sensor;
    const auto& sc = *fwd.sensor;
    auto& sg = *grads.sensor;
    const std::size_t m = params.dims.modalities;
    const std::size_t k = params.dims.sensor_hidden();

    // Reverse recurrence: beta_t feeds both the input gating at t and the
    // energy preactivation at t+1. Continuity subgradients join on the way.
    Vec dbeta(m, 0.0);
    Vec denergy, da(k), du(k);
    for (std::size_t ti = t_len; ti-- > 0;) {
      const auto beta_t = sc.beta.row(ti + 1);
      const auto beta_prev = sc.beta.row(ti);
      const auto x_t = x.row(ti);

      for (std::size_t d = 0; d < x.cols(); ++d)
        dbeta[sp.modality_map[d]] += dinputs(ti, d) * x_t[d];
      if (cfg.lambda2 != 0.0 && ti >= 1) {
        for (std::size_t j = 0; j < m; ++j)
          dbeta[j] += cfg.lambda2 * sign(beta_t[j] - beta_prev[j]);
      }

      denergy = softmax_vjp(beta_t, dbeta);
      const auto a = sc.hidden.row(ti);
      outer_add(denergy, a, sg.v_e);
      std::fill(da.begin(), da.end(), 0.0);
      vecmat_add(denergy, sp.v_e, da);
      for (std::size_t j = 0; j < k; ++j) du[j] = da[j] * (1.0 - a[j] * a[j]);
      outer_add(du, beta_prev, sg.w_beta);
      outer_add(du, x_t, sg.w_x);

      std::fill(dbeta.begin(), dbeta.end(), 0.0);
      vecmat_add(du, sp.w_beta, dbeta);
      if (cfg.lambda2 != 0.0 && ti >= 1) {
        for (std::size_t j = 0; j < m; ++j)
          dbeta[j] -= cfg.lambda2 * sign(beta_t[j] - beta_prev[j]);
      }
    }
    // dbeta now targets the constant beta_0; nothing to propagate.
  }

  return grads;
}

}  // namespace attnhar
