#pragma once

#include <cstddef>
#include <string>

#include "cordcpd/nn.hpp"

namespace cordcpd {

enum class OutKind { mlp, rnn };
/// How the node function sees incoming messages: x_i + sum(e) or [x_i; sum(e)].
enum class CombineKind { sum, concat };

std::string to_string(OutKind kind);
std::string to_string(CombineKind kind);
OutKind parse_out_kind(const std::string& text);
CombineKind parse_combine_kind(const std::string& text);

struct DecoderConfig {
  OutKind out_kind = OutKind::rnn;
  CombineKind combine = CombineKind::sum;
  std::size_t hidden_dim = 256;
  double sigma_sq = 5e-5;
  double lambda_smooth = 1.0;

  void validate() const;
};

/// Correlation-conditioned dynamics model. Predicts the per-step change of
/// every variable; x_hat^{t+1} = x^t + delta^t, with the edge weights A^t in
/// force during step t driving the transition out of t.
class Decoder {
 public:
  struct StepOut {
    ad::Var delta;
    ad::Var prediction;
    ad::Var hidden;  // invalid for the MLP head
  };

  Decoder() = default;
  Decoder(ParamStore& store, const DecoderConfig& config, std::size_t feature_dim, Rng& rng);

  /// Message passing on `graphs` graphs: x rows are (graph, node), edge
  /// weights one per ordered pair (pairs x 1) in nn::pair_index order.
  ad::Var embed(const nn::Ctx& ctx, ad::Var x, ad::Var edge_weights, const nn::PairIndex& pairs) const;

  /// g_out applied to one block of embedded rows.
  StepOut output_step(const nn::Ctx& ctx, ad::Var x, ad::Var embedded, ad::Var hidden) const;

  /// One autoregressive step from x^t under A^t.
  StepOut decode_step(const nn::Ctx& ctx, ad::Var x, ad::Var edge_weights, ad::Var hidden,
                      const nn::PairIndex& pairs) const;

  /// Predictions x_hat^2..x^T (rows (step, batch, node), T-1 steps), each from
  /// the observed previous step. `edge_weights` covers all T steps.
  ad::Var teacher_forced(const nn::Ctx& ctx, ad::Var x, ad::Var edge_weights, const nn::Layout& layout) const;

  /// Zero recurrent state for `rows` rows (or an invalid Var for the MLP head).
  ad::Var initial_hidden(const nn::Ctx& ctx, std::size_t rows) const;

  const DecoderConfig& config() const noexcept { return config_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  const nn::Linear& output_layer() const noexcept { return out_linear_; }

 private:
  DecoderConfig config_;
  std::size_t feature_dim_ = 0;
  nn::PairMlp edge_fn_;
  nn::Mlp node_fn_;
  nn::Gru out_gru_;
  nn::Linear out_linear_;
  nn::Linear out_hidden_;
};

/// sum_i sum_t ||x - x_hat||^2 / (2 sigma^2).
ad::Var reconstruction_loss(ad::Var target, ad::Var prediction, double sigma_sq);

/// Mean over consecutive steps of the squared Frobenius difference of the
/// per-step edge matrices. `edge_probs` holds one value per ordered pair
/// (diagonal excluded), rows (step, batch, pair); the result is summed over
/// the batch.
ad::Var smoothness_loss(ad::Var edge_probs, std::size_t steps, std::size_t batch, std::size_t pairs_per_graph);

}  // namespace cordcpd
