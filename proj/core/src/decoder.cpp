#include "cordcpd/decoder.hpp"

#include <stdexcept>
#include <vector>

namespace cordcpd {

std::string to_string(OutKind kind) { return kind == OutKind::rnn ? "rnn" : "mlp"; }
std::string to_string(CombineKind kind) { return kind == CombineKind::sum ? "sum" : "concat"; }

OutKind parse_out_kind(const std::string& text) {
  if (text == "rnn") return OutKind::rnn;
  if (text == "mlp") return OutKind::mlp;
  throw std::invalid_argument("unknown decoder output kind '" + text + "' (expected rnn or mlp)");
}

CombineKind parse_combine_kind(const std::string& text) {
  if (text == "sum") return CombineKind::sum;
  if (text == "concat") return CombineKind::concat;
  throw std::invalid_argument("unknown decoder combine kind '" + text + "' (expected sum or concat)");
}

void DecoderConfig::validate() const {
  if (hidden_dim == 0) throw std::invalid_argument("decoder hidden_dim must be positive");
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("sigma_sq must be positive");
  if (!(lambda_smooth >= 0.0)) throw std::invalid_argument("lambda_smooth must be non-negative");
}

Decoder::Decoder(ParamStore& store, const DecoderConfig& config, std::size_t feature_dim, Rng& rng)
    : config_(config), feature_dim_(feature_dim) {
  config_.validate();
  const std::size_t h = config_.hidden_dim;
  const std::size_t message_dim = feature_dim;
  edge_fn_ = nn::PairMlp(store, "decoder.g_edge", feature_dim, h, message_dim, rng);
  const std::size_t node_in = config_.combine == CombineKind::sum ? feature_dim : feature_dim + message_dim;
  node_fn_ = nn::Mlp(store, "decoder.g_node", node_in, h, h, rng);
  if (config_.out_kind == OutKind::rnn) {
    out_gru_ = nn::Gru(store, "decoder.g_out.gru", h, h, rng);
  } else {
    out_hidden_ = nn::Linear(store, "decoder.g_out.fc1", h, h, rng);
  }
  out_linear_ = nn::Linear(store, "decoder.g_out.head", h, feature_dim, rng);
}

ad::Var Decoder::embed(const nn::Ctx& ctx, ad::Var x, ad::Var edge_weights, const nn::PairIndex& pairs) const {
  ad::Var messages = ad::row_scale(edge_fn_(ctx, x, pairs), edge_weights);
  ad::Var incoming = ad::scatter_add_rows(messages, pairs.receiver, x.rows());
  if (config_.combine == CombineKind::sum) return node_fn_(ctx, ad::add(x, incoming));
  const ad::Var parts[] = {x, incoming};
  return node_fn_(ctx, ad::concat_cols(parts));
}

ad::Var Decoder::initial_hidden(const nn::Ctx& ctx, std::size_t rows) const {
  if (config_.out_kind != OutKind::rnn) return {};
  return ctx.tape.constant(Tensor(Shape{rows, config_.hidden_dim}, 0.0));
}

Decoder::StepOut Decoder::output_step(const nn::Ctx& ctx, ad::Var x, ad::Var embedded, ad::Var hidden) const {
  StepOut out;
  if (config_.out_kind == OutKind::rnn) {
    out.hidden = out_gru_.cell(ctx, embedded, hidden);
    out.delta = out_linear_(ctx, out.hidden);
  } else {
    out.delta = out_linear_(ctx, ad::elu(out_hidden_(ctx, embedded)));
  }
  out.prediction = ad::add(x, out.delta);
  return out;
}

Decoder::StepOut Decoder::decode_step(const nn::Ctx& ctx, ad::Var x, ad::Var edge_weights, ad::Var hidden,
                                      const nn::PairIndex& pairs) const {
  return output_step(ctx, x, embed(ctx, x, edge_weights, pairs), hidden);
}

ad::Var Decoder::teacher_forced(const nn::Ctx& ctx, ad::Var x, ad::Var edge_weights,
                                const nn::Layout& layout) const {
  if (layout.steps < 2) throw std::invalid_argument("teacher forcing needs at least two steps");
  const std::size_t group = layout.rows_per_step();
  const std::size_t in_steps = layout.steps - 1;
  const nn::Layout inputs{in_steps, layout.batch, layout.nodes};
  const auto pairs = nn::pair_index(inputs.graphs(), layout.nodes);

  ad::Var x_in = ad::slice_rows(x, 0, in_steps * group);
  ad::Var w_in = ad::slice_rows(edge_weights, 0, inputs.pairs());
  ad::Var embedded = embed(ctx, x_in, w_in, pairs);

  ad::Var delta;
  if (config_.out_kind == OutKind::rnn) {
    ad::Var hs = out_gru_.sequence(ctx, embedded, in_steps, group, false);
    delta = out_linear_(ctx, hs);
  } else {
    delta = out_linear_(ctx, ad::elu(out_hidden_(ctx, embedded)));
  }
  return ad::add(x_in, delta);
}

ad::Var reconstruction_loss(ad::Var target, ad::Var prediction, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("sigma_sq must be positive");
  return ad::affine(ad::sum_squares(ad::sub(target, prediction)), 1.0 / (2.0 * sigma_sq), 0.0);
}

ad::Var smoothness_loss(ad::Var edge_probs, std::size_t steps, std::size_t batch, std::size_t pairs_per_graph) {
  if (steps < 2) throw std::invalid_argument("smoothness loss needs at least two steps");
  const std::size_t per_step = batch * pairs_per_graph;
  if (edge_probs.rows() != steps * per_step) throw ShapeError("smoothness loss: edge rows do not match layout");
  ad::Var later = ad::slice_rows(edge_probs, per_step, steps * per_step);
  ad::Var earlier = ad::slice_rows(edge_probs, 0, (steps - 1) * per_step);
  return ad::affine(ad::sum_squares(ad::sub(later, earlier)), 1.0 / static_cast<double>(steps - 1), 0.0);
}

}  // namespace cordcpd
