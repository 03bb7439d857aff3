#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "adprog/params.hpp"
#include "adprog/random.hpp"
#include "adprog/tensor.hpp"

namespace adprog {

/// Gate weights over the concatenation [h_{t-1}, x_t]: each W is
/// [H x (H + I)], each b is [H].
struct LstmCellParams {
  Tensor w_f, w_i, w_c, w_o;
  Tensor b_f, b_i, b_c, b_o;

  // Gaussian weights, zero biases except the forget gate.
  static LstmCellParams random(std::size_t input, std::size_t hidden, double stddev, double forget_bias, Rng& rng,
                               bool requires_grad = true);
  static LstmCellParams zeros(std::size_t input, std::size_t hidden, bool requires_grad = false);

  std::size_t hidden() const { return w_f.dim(0); }
  std::size_t input() const { return w_f.dim(1) - w_f.dim(0); }
  void validate() const;
  void append_params(ParamList& out, const std::string& prefix) const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One step of the LSTM recurrence for a batch of rows:
///   f = sigma(W_f[h,x] + b_f), i = sigma(W_i[h,x] + b_i),
///   c~ = tanh(W_c[h,x] + b_c), c = f*c_prev + i*c~,
///   o = sigma(W_o[h,x] + b_o), h = o*tanh(c).
/// x_t is [B x I]; h_prev, c_prev are [B x H].
LstmState lstm_cell_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev, const LstmCellParams& p);

/// Runs the cell left to right over steps (each [B x I]) from (h0, c0),
/// zeros when undefined. Returns every hidden state.
std::vector<Tensor> lstm_forward(std::span<const Tensor> steps, const LstmCellParams& p, const Tensor& h0 = {},
                                 const Tensor& c0 = {});

// Single sequence form: seq[T x I] -> [T x H].
Tensor lstm_forward(const Tensor& seq, const LstmCellParams& p, const Tensor& h0 = {}, const Tensor& c0 = {});

struct BiLstmStates {
  std::vector<Tensor> forward;   // forward[t] saw steps 0..t
  std::vector<Tensor> backward;  // backward[t] saw steps t..T-1
};

BiLstmStates bilstm_states(std::span<const Tensor> steps, const LstmCellParams& fwd, const LstmCellParams& bwd);

// seq[T x I] -> [T x 2H], row t = [h_fwd(t) ; h_bwd(t)].
Tensor bilstm_forward(const Tensor& seq, const LstmCellParams& fwd, const LstmCellParams& bwd);

enum class Readout { final_state, mean_pool };
enum class OutputMode { single_logit, two_logit };

struct BiLstmConfig {
  std::size_t input_width = 273;
  std::size_t hidden = 32;
  double dropout = 0.5;
  bool bidirectional = true;
  Readout readout = Readout::final_state;
  OutputMode output = OutputMode::single_logit;
  double init_std = 0.1;
  double forget_bias = 1.0;

  static BiLstmConfig paper_scale();
  void validate() const;
  std::size_t encoder_width() const { return bidirectional ? 2 * hidden : hidden; }
  std::size_t output_width() const { return output == OutputMode::single_logit ? 1 : 2; }
};

/// Per direction 4*(H*(H+I) + H), doubled when bidirectional; the dense head
/// is added only when include_head is set.
std::size_t count_recurrent_params(const BiLstmConfig& cfg, bool include_head = false);

/// Final-timestep readout [h_fwd(T) ; h_bwd(1)] (or the mean over time) ->
/// dropout -> dense. `states` holds the encoder outputs per step, each
/// [B x encoder_width].
Tensor predictor_head(const BiLstmStates& states, bool bidirectional, Readout readout, const Tensor& weight,
                      const Tensor& bias, double dropout_rate, bool training, Rng* rng);

/// BiLSTM (or vanilla LSTM) encoder plus dense head.
class SequenceClassifier {
 public:
  SequenceClassifier(const BiLstmConfig& cfg, std::uint64_t seed);

  // steps: T tensors of [B x I]. Returns logits [B x output_width].
  Tensor forward(std::span<const Tensor> steps, bool training, Rng* rng) const;
  // logits -> [B x 2] class probabilities (sMCI, pMCI).
  Tensor probabilities(const Tensor& logits) const;

  const BiLstmConfig& config() const { return cfg_; }
  ParamList parameters() const;

  LstmCellParams& forward_cell() { return fwd_; }
  LstmCellParams& backward_cell() { return bwd_; }
  Tensor& head_weight() { return head_w_; }
  Tensor& head_bias() { return head_b_; }

 private:
  BiLstmConfig cfg_;
  LstmCellParams fwd_;
  LstmCellParams bwd_;
  Tensor head_w_;
  Tensor head_b_;
};

// Row-wise [1 - p, p] from p[B x 1].
Tensor binary_probabilities(const Tensor& p);

}  // namespace adprog
