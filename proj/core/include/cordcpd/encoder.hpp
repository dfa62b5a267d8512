#pragma once

#include <cstddef>
#include <string>

#include "cordcpd/nn.hpp"
#include "cordcpd/rng.hpp"

namespace cordcpd {

enum class TelKind { rnn, transformer };
enum class SelKind { gnn, transformer };
/// Pairwise posterior head on [h_i; h_j]: one linear layer, or a two-layer
/// perceptron so that the logit is not additive in i and j.
enum class EdgeHeadKind { linear, mlp };

std::string to_string(TelKind kind);
std::string to_string(SelKind kind);
TelKind parse_tel_kind(const std::string& text);
SelKind parse_sel_kind(const std::string& text);
std::string to_string(EdgeHeadKind kind);
EdgeHeadKind parse_edge_head_kind(const std::string& text);

/// Edge type 0 is "no edge", type 1 is "connected".
inline constexpr std::size_t kConnectedEdgeType = 1;

struct EncoderConfig {
  TelKind tel_kind = TelKind::rnn;
  SelKind sel_kind = SelKind::gnn;
  EdgeHeadKind edge_head = EdgeHeadKind::linear;
  std::size_t hidden_dim = 256;
  std::size_t n_edge_types = 2;
  std::size_t n_attention_heads = 4;
  double gumbel_temperature = 0.5;

  void validate() const;
};

/// Temporal encoding layer: mixes information across time, separately for
/// every variable.
class TemporalLayer {
 public:
  TemporalLayer() = default;
  TemporalLayer(ParamStore& store, const std::string& name, TelKind kind, std::size_t in_dim, std::size_t width,
                std::size_t heads, Rng& rng);

  /// h rows are in (step, batch, node) order.
  ad::Var operator()(const nn::Ctx& ctx, ad::Var h, const nn::Layout& layout, Tensor* attention_out = nullptr) const;

  std::size_t out_dim() const noexcept { return width_; }
  TelKind kind() const noexcept { return kind_; }

 private:
  TelKind kind_ = TelKind::rnn;
  std::size_t width_ = 0;
  nn::Gru forward_, backward_;
  nn::Linear input_proj_;
  nn::TransformerBlock block_;
};

/// Spatial encoding layer: mixes information across variables, separately for
/// every time step.
class SpatialLayer {
 public:
  SpatialLayer() = default;
  SpatialLayer(ParamStore& store, const std::string& name, SelKind kind, std::size_t in_dim, std::size_t width,
               std::size_t heads, Rng& rng);

  ad::Var operator()(const nn::Ctx& ctx, ad::Var h, const nn::Layout& layout, const nn::PairIndex& pairs,
                     Tensor* attention_out = nullptr) const;

  std::size_t out_dim() const noexcept { return width_; }

 private:
  SelKind kind_ = SelKind::gnn;
  std::size_t width_ = 0;
  nn::PairMlp edge_fn_;
  nn::Mlp node_fn_;
  nn::Linear input_proj_;
  nn::TransformerBlock block_;
};

/// TEL -> SEL -> TEL stack followed by the pairwise edge posterior head.
class Encoder {
 public:
  struct Output {
    ad::Var logits;  // pairs x K
    ad::Var probs;   // pairs x K, softmax over edge types
  };

  Encoder() = default;
  Encoder(ParamStore& store, const EncoderConfig& config, std::size_t input_dim, Rng& rng);

  /// x rows are (step, batch, node); pair rows follow nn::pair_index over the
  /// layout's graphs.
  Output operator()(const nn::Ctx& ctx, ad::Var x, const nn::Layout& layout, const nn::PairIndex& pairs) const;

  /// Gumbel-Softmax relaxed sample of the edge types.
  ad::Var sample(const Output& out, Rng& rng, bool hard) const;

  const EncoderConfig& config() const noexcept { return config_; }
  const TemporalLayer& tel1() const noexcept { return tel1_; }
  const SpatialLayer& sel() const noexcept { return sel_; }
  const TemporalLayer& tel2() const noexcept { return tel2_; }

 private:
  EncoderConfig config_;
  TemporalLayer tel1_;
  SpatialLayer sel_;
  TemporalLayer tel2_;
  nn::PairLinear edge_head_;
  nn::PairMlp edge_mlp_;
};

}  // namespace cordcpd
