#include "cordcpd/nn.hpp"

#include <cmath>
#include <vector>

namespace cordcpd::nn {

PairIndex pair_index(std::size_t graphs, std::size_t nodes) {
  ad::Index sender, receiver;
  sender.reserve(graphs * nodes * (nodes - 1));
  receiver.reserve(graphs * nodes * (nodes - 1));
  for (std::size_t g = 0; g < graphs; ++g) {
    for (std::size_t i = 0; i < nodes; ++i) {
      for (std::size_t j = 0; j < nodes; ++j) {
        if (i == j) continue;
        sender.push_back(static_cast<std::uint32_t>(g * nodes + i));
        receiver.push_back(static_cast<std::uint32_t>(g * nodes + j));
      }
    }
  }
  return {ad::make_index(std::move(sender)), ad::make_index(std::move(receiver))};
}

SequencePermutation sequence_permutation(std::size_t steps, std::size_t groups) {
  ad::Index fwd(steps * groups), back(steps * groups);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t t = 0; t < steps; ++t) {
      const auto step_major = static_cast<std::uint32_t>(t * groups + g);
      const auto group_major = static_cast<std::uint32_t>(g * steps + t);
      fwd[group_major] = step_major;
      back[step_major] = group_major;
    }
  }
  return {ad::make_index(std::move(fwd)), ad::make_index(std::move(back))};
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : in(in_dim), out(out_dim) {
  weight = store.add_uniform(name + ".weight", {in, out}, in, rng);
  bias = store.add_uniform(name + ".bias", {out}, in, rng);
}

Var Linear::operator()(const Ctx& ctx, Var x) const { return ad::linear(x, ctx.p(weight), ctx.p(bias)); }

Mlp::Mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t mid, std::size_t out, Rng& rng)
    : hidden(store, name + ".fc1", in, mid, rng), output(store, name + ".fc2", mid, out, rng) {}

Var Mlp::operator()(const Ctx& ctx, Var x) const { return output(ctx, ad::elu(hidden(ctx, x))); }

PairLinear::PairLinear(ParamStore& store, const std::string& name, std::size_t in_dim, std::size_t out_dim,
                       Rng& rng)
    : in(in_dim), out(out_dim) {
  // Fan-in of the concatenated input.
  w_sender = store.add_uniform(name + ".weight_sender", {in, out}, 2 * in, rng);
  w_receiver = store.add_uniform(name + ".weight_receiver", {in, out}, 2 * in, rng);
  bias = store.add_uniform(name + ".bias", {out}, 2 * in, rng);
}

Var PairLinear::operator()(const Ctx& ctx, Var nodes, const PairIndex& pairs) const {
  Var from_sender = ad::matmul(nodes, ctx.p(w_sender));
  Var from_receiver = ad::matmul(nodes, ctx.p(w_receiver));
  Var combined = ad::add(ad::gather_rows(from_sender, pairs.sender), ad::gather_rows(from_receiver, pairs.receiver));
  return ad::add_row(combined, ctx.p(bias));
}

PairMlp::PairMlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t mid, std::size_t out,
                 Rng& rng)
    : hidden(store, name + ".fc1", in, mid, rng), output(store, name + ".fc2", mid, out, rng) {}

Var PairMlp::operator()(const Ctx& ctx, Var nodes, const PairIndex& pairs) const {
  return output(ctx, ad::elu(hidden(ctx, nodes, pairs)));
}

Gru::Gru(ParamStore& store, const std::string& name, std::size_t in_dim, std::size_t hidden_dim, Rng& rng)
    : in(in_dim), hidden(hidden_dim) {
  w_input = store.add_uniform(name + ".weight_input", {in, 3 * hidden}, hidden, rng);
  b_input = store.add_constant(name + ".bias_input", {3 * hidden}, 0.0);
  w_hidden = store.add_uniform(name + ".weight_hidden", {hidden, 3 * hidden}, hidden, rng);
  b_hidden = store.add_constant(name + ".bias_hidden", {3 * hidden}, 0.0);
}

Var Gru::project_input(const Ctx& ctx, Var x) const { return ad::linear(x, ctx.p(w_input), ctx.p(b_input)); }

Var Gru::cell_from_projection(const Ctx& ctx, Var x_projected, Var h_prev) const {
  Var hh = ad::linear(h_prev, ctx.p(w_hidden), ctx.p(b_hidden));
  return ad::gru_gates(x_projected, hh, h_prev);
}

Var Gru::cell(const Ctx& ctx, Var x, Var h_prev) const {
  return cell_from_projection(ctx, project_input(ctx, x), h_prev);
}

Var Gru::sequence(const Ctx& ctx, Var x, std::size_t steps, std::size_t group, bool reverse) const {
  Var projected = project_input(ctx, x);
  Var h = ctx.tape.constant(Tensor(Shape{group, hidden}, 0.0));
  std::vector<Var> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    h = cell_from_projection(ctx, ad::slice_rows(projected, t * group, (t + 1) * group), h);
    outputs[t] = h;
  }
  return ad::concat_rows(outputs);
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name, std::size_t width_,
                                   std::size_t heads_, std::size_t ff_width_, Rng& rng)
    : width(width_), heads(heads_), ff_width(ff_width_) {
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("transformer width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  query = Linear(store, name + ".query", width, width, rng);
  key = Linear(store, name + ".key", width, width, rng);
  value = Linear(store, name + ".value", width, width, rng);
  proj = Linear(store, name + ".proj", width, width, rng);
  ln1_gain = store.add_constant(name + ".ln1.gain", {width}, 1.0);
  ln1_bias = store.add_constant(name + ".ln1.bias", {width}, 0.0);
  ff1 = Linear(store, name + ".ff1", width, ff_width, rng);
  ff2 = Linear(store, name + ".ff2", ff_width, width, rng);
  ln2_gain = store.add_constant(name + ".ln2.gain", {width}, 1.0);
  ln2_bias = store.add_constant(name + ".ln2.bias", {width}, 0.0);
}

Var TransformerBlock::operator()(const Ctx& ctx, Var x, std::size_t groups, std::size_t seq_len,
                                 const SequencePermutation* perm, Tensor* attention_out) const {
  if (x.rows() != groups * seq_len || x.cols() != width) {
    throw ShapeError("transformer block expects " + std::to_string(groups * seq_len) + "x" + std::to_string(width) +
                     " input, got " + shape_string(x.shape()));
  }
  Var q = query(ctx, x), k = key(ctx, x), v = value(ctx, x);
  if (perm != nullptr) {
    q = ad::gather_rows(q, perm->to_group_major);
    k = ad::gather_rows(k, perm->to_group_major);
    v = ad::gather_rows(v, perm->to_group_major);
  }
  const std::size_t dk = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * dk, (h + 1) * dk);
    Var kh = ad::slice_cols(k, h * dk, (h + 1) * dk);
    Var vh = ad::slice_cols(v, h * dk, (h + 1) * dk);
    Var attn = ad::softmax_rows(ad::affine(ad::batched_matmul(qh, kh, groups, true), scale, 0.0));
    if (h == 0 && attention_out != nullptr) *attention_out = attn.value();
    head_out.push_back(ad::batched_matmul(attn, vh, groups, false));
  }
  Var mixed = heads == 1 ? head_out[0] : ad::concat_cols(head_out);
  if (perm != nullptr) mixed = ad::gather_rows(mixed, perm->to_step_major);
  Var attended = proj(ctx, mixed);

  Var y = ad::layer_norm_rows(ad::add(x, attended));
  y = ad::add_row(ad::mul_row(y, ctx.p(ln1_gain)), ctx.p(ln1_bias));
  Var ff = ff2(ctx, ad::relu(ff1(ctx, y)));
  Var z = ad::layer_norm_rows(ad::add(y, ff));
  return ad::add_row(ad::mul_row(z, ctx.p(ln2_gain)), ctx.p(ln2_bias));
}

Tensor positional_encoding(std::size_t steps, std::size_t groups, std::size_t width) {
  Tensor pe(Shape{steps * groups, width});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < width; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(width));
      const double value = (c % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
      for (std::size_t g = 0; g < groups; ++g) pe.at(t * groups + g, c) = value;
    }
  }
  return pe;
}

}  // namespace cordcpd::nn
