#include "adprog/recurrent.hpp"

#include <algorithm>

#include "adprog/error.hpp"
#include "adprog/ops.hpp"

namespace adprog {
namespace {

// The four gate matrices stacked and transposed once per call so each step
// is a single [B x (H+I)] . [(H+I) x 4H] product. Column blocks are f, i, c~, o.
struct FusedGates {
  Tensor weight_t;
  Tensor bias;
};

FusedGates fuse(const LstmCellParams& p) {
  const std::size_t h = p.hidden();
  return {transpose(concat_rows({p.w_f, p.w_i, p.w_c, p.w_o})),
          reshape(concat_cols({reshape(p.b_f, {1, h}), reshape(p.b_i, {1, h}), reshape(p.b_c, {1, h}),
                               reshape(p.b_o, {1, h})}),
                  {4 * h})};
}

LstmState fused_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev, const FusedGates& gates,
                     std::size_t hidden) {
  const Tensor z = add_bias(matmul(concat_cols({h_prev, x_t}), gates.weight_t), gates.bias);
  const Tensor f = sigmoid(slice_cols(z, 0, hidden));
  const Tensor i = sigmoid(slice_cols(z, hidden, 2 * hidden));
  const Tensor candidate = tanh(slice_cols(z, 2 * hidden, 3 * hidden));
  const Tensor o = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden));
  Tensor c = add(mul(f, c_prev), mul(i, candidate));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

void check_step_shapes(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev, const LstmCellParams& p) {
  const std::size_t hidden = p.hidden(), input = p.input();
  if (x_t.rank() != 2 || x_t.dim(1) != input) {
    throw DimensionError("lstm: input " + shape_str(x_t.shape()) + " does not have width " + std::to_string(input));
  }
  const Shape state{x_t.dim(0), hidden};
  if (h_prev.shape() != state || c_prev.shape() != state) {
    throw DimensionError("lstm: states " + shape_str(h_prev.shape()) + ", " + shape_str(c_prev.shape()) +
                         " must both be " + shape_str(state));
  }
}

std::vector<Tensor> split_rows(const Tensor& seq) {
  if (seq.rank() != 2) throw DimensionError("lstm: sequence must be [T x I], got " + shape_str(seq.shape()));
  std::vector<Tensor> steps;
  for (std::size_t t = 0; t < seq.dim(0); ++t) steps.push_back(slice_rows(seq, t, t + 1));
  return steps;
}

}  // namespace

LstmCellParams LstmCellParams::random(std::size_t input, std::size_t hidden, double stddev, double forget_bias,
                                      Rng& rng, bool requires_grad) {
  if (input == 0 || hidden == 0) throw ConfigError("lstm: input and hidden widths must be at least 1");
  const Shape w{hidden, hidden + input};
  LstmCellParams p;
  p.w_f = normal_tensor(w, stddev, rng, requires_grad);
  p.w_i = normal_tensor(w, stddev, rng, requires_grad);
  p.w_c = normal_tensor(w, stddev, rng, requires_grad);
  p.w_o = normal_tensor(w, stddev, rng, requires_grad);
  p.b_f = Tensor::full({hidden}, forget_bias, requires_grad);
  p.b_i = Tensor::zeros({hidden}, requires_grad);
  p.b_c = Tensor::zeros({hidden}, requires_grad);
  p.b_o = Tensor::zeros({hidden}, requires_grad);
  return p;
}

LstmCellParams LstmCellParams::zeros(std::size_t input, std::size_t hidden, bool requires_grad) {
  if (input == 0 || hidden == 0) throw ConfigError("lstm: input and hidden widths must be at least 1");
  const Shape w{hidden, hidden + input};
  LstmCellParams p;
  p.w_f = Tensor::zeros(w, requires_grad);
  p.w_i = Tensor::zeros(w, requires_grad);
  p.w_c = Tensor::zeros(w, requires_grad);
  p.w_o = Tensor::zeros(w, requires_grad);
  p.b_f = Tensor::zeros({hidden}, requires_grad);
  p.b_i = Tensor::zeros({hidden}, requires_grad);
  p.b_c = Tensor::zeros({hidden}, requires_grad);
  p.b_o = Tensor::zeros({hidden}, requires_grad);
  return p;
}

void LstmCellParams::validate() const {
  if (w_f.rank() != 2 || w_f.dim(1) <= w_f.dim(0)) {
    throw DimensionError("lstm: W_f " + shape_str(w_f.shape()) + " is not [H x (H + I)]");
  }
  for (const Tensor* w : {&w_i, &w_c, &w_o})
    if (w->shape() != w_f.shape()) throw DimensionError("lstm: gate weights differ in shape");
  for (const Tensor* b : {&b_f, &b_i, &b_c, &b_o})
    if (b->shape() != Shape{w_f.dim(0)}) throw DimensionError("lstm: gate bias " + shape_str(b->shape()));
}

void LstmCellParams::append_params(ParamList& out, const std::string& prefix) const {
  const std::string group = prefix;
  out.push_back({prefix + ".W_f", group, w_f});
  out.push_back({prefix + ".W_i", group, w_i});
  out.push_back({prefix + ".W_c", group, w_c});
  out.push_back({prefix + ".W_o", group, w_o});
  out.push_back({prefix + ".b_f", group, b_f});
  out.push_back({prefix + ".b_i", group, b_i});
  out.push_back({prefix + ".b_c", group, b_c});
  out.push_back({prefix + ".b_o", group, b_o});
}

LstmState lstm_cell_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev, const LstmCellParams& p) {
  p.validate();
  check_step_shapes(x_t, h_prev, c_prev, p);
  return fused_step(x_t, h_prev, c_prev, fuse(p), p.hidden());
}

std::vector<Tensor> lstm_forward(std::span<const Tensor> steps, const LstmCellParams& p, const Tensor& h0,
                                 const Tensor& c0) {
  if (steps.empty()) throw InputError("lstm: empty sequence");
  p.validate();
  const std::size_t batch = steps.front().rank() == 2 ? steps.front().dim(0) : 0;
  LstmState state{h0.defined() ? h0 : Tensor::zeros({batch, p.hidden()}),
                  c0.defined() ? c0 : Tensor::zeros({batch, p.hidden()})};
  const FusedGates gates = fuse(p);
  std::vector<Tensor> hidden;
  hidden.reserve(steps.size());
  for (const Tensor& x : steps) {
    check_step_shapes(x, state.h, state.c, p);
    state = fused_step(x, state.h, state.c, gates, p.hidden());
    hidden.push_back(state.h);
  }
  return hidden;
}

Tensor lstm_forward(const Tensor& seq, const LstmCellParams& p, const Tensor& h0, const Tensor& c0) {
  if (seq.rank() == 2 && seq.dim(0) == 0) throw InputError("lstm: empty sequence");
  const std::vector<Tensor> steps = split_rows(seq);
  return concat_rows(lstm_forward(std::span<const Tensor>(steps), p, h0, c0));
}

BiLstmStates bilstm_states(std::span<const Tensor> steps, const LstmCellParams& fwd, const LstmCellParams& bwd) {
  if (steps.empty()) throw InputError("bilstm: empty sequence");
  BiLstmStates out;
  out.forward = lstm_forward(steps, fwd);
  std::vector<Tensor> reversed(steps.rbegin(), steps.rend());
  out.backward = lstm_forward(std::span<const Tensor>(reversed), bwd);
  std::reverse(out.backward.begin(), out.backward.end());
  return out;
}

Tensor bilstm_forward(const Tensor& seq, const LstmCellParams& fwd, const LstmCellParams& bwd) {
  if (seq.rank() == 2 && seq.dim(0) == 0) throw InputError("bilstm: empty sequence");
  const std::vector<Tensor> steps = split_rows(seq);
  const BiLstmStates states = bilstm_states(steps, fwd, bwd);
  std::vector<Tensor> rows;
  for (std::size_t t = 0; t < steps.size(); ++t) rows.push_back(concat_cols({states.forward[t], states.backward[t]}));
  return concat_rows(rows);
}

BiLstmConfig BiLstmConfig::paper_scale() {
  BiLstmConfig cfg;
  cfg.hidden = 256;
  return cfg;
}

void BiLstmConfig::validate() const {
  if (input_width == 0 || hidden == 0) throw ConfigError("bilstm: input and hidden widths must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("bilstm: dropout must lie in [0, 1)");
}

std::size_t count_recurrent_params(const BiLstmConfig& cfg, bool include_head) {
  cfg.validate();
  const std::size_t h = cfg.hidden, i = cfg.input_width;
  std::size_t total = 4 * (h * (h + i) + h);
  if (cfg.bidirectional) total *= 2;
  if (include_head) total += cfg.encoder_width() * cfg.output_width() + cfg.output_width();
  return total;
}

Tensor predictor_head(const BiLstmStates& states, bool bidirectional, Readout readout, const Tensor& weight,
                      const Tensor& bias, double dropout_rate, bool training, Rng* rng) {
  if (states.forward.empty()) throw InputError("predictor head: no timesteps");
  Tensor pooled;
  if (readout == Readout::final_state) {
    pooled = bidirectional ? concat_cols({states.forward.back(), states.backward.front()}) : states.forward.back();
  } else {
    const std::size_t steps = states.forward.size();
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor row = bidirectional ? concat_cols({states.forward[t], states.backward[t]}) : states.forward[t];
      pooled = pooled.defined() ? add(pooled, row) : row;
    }
    pooled = scale(pooled, 1.0 / static_cast<double>(steps));
  }
  if (training && dropout_rate > 0.0) {
    if (rng == nullptr) throw ConfigError("predictor head: training with dropout needs a random stream");
    pooled = dropout(pooled, dropout_rate, true, *rng);
  } else if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("predictor head: dropout must lie in [0, 1)");
  }
  return add_bias(matmul_nt(pooled, weight), bias);
}

SequenceClassifier::SequenceClassifier(const BiLstmConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(seed, {0x4C53544D});
  fwd_ = LstmCellParams::random(cfg_.input_width, cfg_.hidden, cfg_.init_std, cfg_.forget_bias, rng);
  if (cfg_.bidirectional) {
    bwd_ = LstmCellParams::random(cfg_.input_width, cfg_.hidden, cfg_.init_std, cfg_.forget_bias, rng);
  }
  head_w_ = normal_tensor({cfg_.output_width(), cfg_.encoder_width()}, cfg_.init_std, rng, true);
  head_b_ = Tensor::zeros({cfg_.output_width()}, true);
}

Tensor SequenceClassifier::forward(std::span<const Tensor> steps, bool training, Rng* rng) const {
  BiLstmStates states;
  if (cfg_.bidirectional) {
    states = bilstm_states(steps, fwd_, bwd_);
  } else {
    if (steps.empty()) throw InputError("lstm: empty sequence");
    states.forward = lstm_forward(steps, fwd_);
  }
  return predictor_head(states, cfg_.bidirectional, cfg_.readout, head_w_, head_b_, cfg_.dropout, training, rng);
}

Tensor SequenceClassifier::probabilities(const Tensor& logits) const {
  if (cfg_.output == OutputMode::single_logit) return binary_probabilities(sigmoid(logits));
  return softmax(logits, 1);
}

ParamList SequenceClassifier::parameters() const {
  ParamList out;
  fwd_.append_params(out, "lstm_fwd");
  if (cfg_.bidirectional) bwd_.append_params(out, "lstm_bwd");
  out.push_back({"head.W", "head", head_w_});
  out.push_back({"head.b", "head", head_b_});
  return out;
}

Tensor binary_probabilities(const Tensor& p) {
  if (p.rank() != 2 || p.dim(1) != 1) throw DimensionError("binary_probabilities: expected [B x 1], got " + shape_str(p.shape()));
  return concat_cols({add_scalar(scale(p, -1.0), 1.0), p});
}

}  // namespace adprog
