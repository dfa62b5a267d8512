#include "cordcpd/encoder.hpp"

#include <stdexcept>

#include "cordcpd/optim.hpp"

namespace cordcpd {

std::string to_string(TelKind kind) { return kind == TelKind::rnn ? "rnn" : "transformer"; }
std::string to_string(SelKind kind) { return kind == SelKind::gnn ? "gnn" : "transformer"; }

TelKind parse_tel_kind(const std::string& text) {
  if (text == "rnn") return TelKind::rnn;
  if (text == "transformer" || text == "trans") return TelKind::transformer;
  throw std::invalid_argument("unknown temporal layer kind '" + text + "' (expected rnn or transformer)");
}

SelKind parse_sel_kind(const std::string& text) {
  if (text == "gnn") return SelKind::gnn;
  if (text == "transformer" || text == "trans") return SelKind::transformer;
  throw std::invalid_argument("unknown spatial layer kind '" + text + "' (expected gnn or transformer)");
}

std::string to_string(EdgeHeadKind kind) { return kind == EdgeHeadKind::linear ? "linear" : "mlp"; }

EdgeHeadKind parse_edge_head_kind(const std::string& text) {
  if (text == "linear") return EdgeHeadKind::linear;
  if (text == "mlp") return EdgeHeadKind::mlp;
  throw std::invalid_argument("unknown edge head kind '" + text + "' (expected linear or mlp)");
}

void EncoderConfig::validate() const {
  if (hidden_dim == 0) throw std::invalid_argument("encoder hidden_dim must be positive");
  if (n_edge_types != 2) throw std::invalid_argument("only two edge types (none, connected) are supported");
  if (tel_kind == TelKind::rnn && hidden_dim % 2 != 0) {
    throw std::invalid_argument("rnn temporal layer needs an even hidden_dim (two directions)");
  }
  const bool uses_transformer = tel_kind == TelKind::transformer || sel_kind == SelKind::transformer;
  if (uses_transformer && (n_attention_heads == 0 || hidden_dim % n_attention_heads != 0)) {
    throw std::invalid_argument("hidden_dim must be divisible by the number of attention heads");
  }
  if (!(gumbel_temperature > 0.0)) throw std::invalid_argument("gumbel temperature must be positive");
}

TemporalLayer::TemporalLayer(ParamStore& store, const std::string& name, TelKind kind, std::size_t in_dim,
                             std::size_t width, std::size_t heads, Rng& rng)
    : kind_(kind), width_(width) {
  if (kind_ == TelKind::rnn) {
    forward_ = nn::Gru(store, name + ".gru_fwd", in_dim, width / 2, rng);
    backward_ = nn::Gru(store, name + ".gru_bwd", in_dim, width / 2, rng);
  } else {
    input_proj_ = nn::Linear(store, name + ".input", in_dim, width, rng);
    block_ = nn::TransformerBlock(store, name + ".block", width, heads, 4 * width, rng);
  }
}

ad::Var TemporalLayer::operator()(const nn::Ctx& ctx, ad::Var h, const nn::Layout& layout,
                                  Tensor* attention_out) const {
  const std::size_t group = layout.rows_per_step();
  if (kind_ == TelKind::rnn) {
    ad::Var fwd = forward_.sequence(ctx, h, layout.steps, group, false);
    ad::Var bwd = backward_.sequence(ctx, h, layout.steps, group, true);
    const ad::Var parts[] = {fwd, bwd};
    return ad::concat_cols(parts);
  }
  ad::Var x = input_proj_(ctx, h);
  x = ad::add(x, ctx.tape.constant(nn::positional_encoding(layout.steps, group, width_)));
  const auto perm = nn::sequence_permutation(layout.steps, group);
  return block_(ctx, x, group, layout.steps, &perm, attention_out);
}

SpatialLayer::SpatialLayer(ParamStore& store, const std::string& name, SelKind kind, std::size_t in_dim,
                           std::size_t width, std::size_t heads, Rng& rng)
    : kind_(kind), width_(width) {
  if (kind_ == SelKind::gnn) {
    edge_fn_ = nn::PairMlp(store, name + ".f_edge", in_dim, width, in_dim, rng);
    node_fn_ = nn::Mlp(store, name + ".f_node", in_dim, width, width, rng);
  } else {
    input_proj_ = nn::Linear(store, name + ".input", in_dim, width, rng);
    block_ = nn::TransformerBlock(store, name + ".block", width, heads, 4 * width, rng);
  }
}

ad::Var SpatialLayer::operator()(const nn::Ctx& ctx, ad::Var h, const nn::Layout& layout,
                                 const nn::PairIndex& pairs, Tensor* attention_out) const {
  if (layout.nodes < 2 && kind_ == SelKind::gnn) throw std::invalid_argument("spatial GNN layer needs N >= 2");
  if (kind_ == SelKind::gnn) {
    ad::Var messages = edge_fn_(ctx, h, pairs);
    ad::Var incoming = ad::scatter_add_rows(messages, pairs.receiver, layout.rows());
    return node_fn_(ctx, ad::add(h, incoming));
  }
  // Rows of one time step and series are already contiguous; no positional
  // encoding since variables carry no order.
  ad::Var x = input_proj_(ctx, h);
  return block_(ctx, x, layout.graphs(), layout.nodes, nullptr, attention_out);
}

Encoder::Encoder(ParamStore& store, const EncoderConfig& config, std::size_t input_dim, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.hidden_dim;
  tel1_ = TemporalLayer(store, "encoder.tel1", config_.tel_kind, input_dim, d, config_.n_attention_heads, rng);
  sel_ = SpatialLayer(store, "encoder.sel", config_.sel_kind, d, d, config_.n_attention_heads, rng);
  tel2_ = TemporalLayer(store, "encoder.tel2", config_.tel_kind, d, d, config_.n_attention_heads, rng);
  if (config_.edge_head == EdgeHeadKind::linear) {
    edge_head_ = nn::PairLinear(store, "encoder.edge_head", d, config_.n_edge_types, rng);
  } else {
    edge_mlp_ = nn::PairMlp(store, "encoder.edge_head", d, d, config_.n_edge_types, rng);
  }
}

Encoder::Output Encoder::operator()(const nn::Ctx& ctx, ad::Var x, const nn::Layout& layout,
                                    const nn::PairIndex& pairs) const {
  ad::Var h = tel1_(ctx, x, layout);
  h = sel_(ctx, h, layout, pairs);
  h = tel2_(ctx, h, layout);
  ad::Var logits =
      config_.edge_head == EdgeHeadKind::linear ? edge_head_(ctx, h, pairs) : edge_mlp_(ctx, h, pairs);
  return {logits, ad::softmax_rows(logits)};
}

ad::Var Encoder::sample(const Output& out, Rng& rng, bool hard) const {
  return gumbel_softmax(out.logits, config_.gumbel_temperature, rng, hard);
}

}  // namespace cordcpd
