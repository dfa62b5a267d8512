#pragma once

#include <cstddef>
#include <string>

#include "cordcpd/autodiff.hpp"
#include "cordcpd/params.hpp"

namespace cordcpd::nn {

using ad::Var;

/// Forward-pass context: the tape being recorded and the weights to bind.
struct Ctx {
  ad::Tape& tape;
  const ParamStore& params;

  Var p(std::size_t id) const { return tape.param(params, id); }
};

/// Row layout shared by encoder and decoder: rows ordered (step, batch, node),
/// so the rows of one time step are contiguous and so are the nodes of one graph.
struct Layout {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::size_t nodes = 0;

  std::size_t graphs() const noexcept { return steps * batch; }
  std::size_t rows() const noexcept { return steps * batch * nodes; }
  std::size_t rows_per_step() const noexcept { return batch * nodes; }
  std::size_t pairs_per_graph() const noexcept { return nodes * (nodes - 1); }
  std::size_t pairs() const noexcept { return graphs() * pairs_per_graph(); }
};

/// Ordered pairs (i, j), i != j, of every graph: pair row g*N(N-1) + k holds
/// sender g*N + i and receiver g*N + j with k enumerating (i, j) row-major.
struct PairIndex {
  ad::IndexPtr sender;
  ad::IndexPtr receiver;
};
PairIndex pair_index(std::size_t graphs, std::size_t nodes);

/// Permutation from (step, group) row order to (group, step) order and back.
struct SequencePermutation {
  ad::IndexPtr to_group_major;
  ad::IndexPtr to_step_major;
};
SequencePermutation sequence_permutation(std::size_t steps, std::size_t groups);

struct Linear {
  std::size_t in = 0, out = 0;
  std::size_t weight = 0, bias = 0;

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(const Ctx& ctx, Var x) const;
};

/// Two-layer perceptron, elu hidden activation, linear output.
struct Mlp {
  Linear hidden, output;

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t mid, std::size_t out, Rng& rng);
  Var operator()(const Ctx& ctx, Var x) const;
};

/// Linear map of the concatenation [x_sender; x_receiver] for every ordered
/// pair, computed as W_s x_sender + W_r x_receiver + b without materialising
/// the concatenation.
struct PairLinear {
  std::size_t in = 0, out = 0;
  std::size_t w_sender = 0, w_receiver = 0, bias = 0;

  PairLinear() = default;
  PairLinear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(const Ctx& ctx, Var nodes, const PairIndex& pairs) const;
};

/// Two-layer perceptron over pair concatenations.
struct PairMlp {
  PairLinear hidden;
  Linear output;

  PairMlp() = default;
  PairMlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t mid, std::size_t out, Rng& rng);
  Var operator()(const Ctx& ctx, Var nodes, const PairIndex& pairs) const;
};

struct Gru {
  std::size_t in = 0, hidden = 0;
  std::size_t w_input = 0, b_input = 0, w_hidden = 0, b_hidden = 0;

  Gru() = default;
  Gru(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);

  /// Single update for a block of rows.
  Var cell(const Ctx& ctx, Var x, Var h_prev) const;
  Var cell_from_projection(const Ctx& ctx, Var x_projected, Var h_prev) const;
  Var project_input(const Ctx& ctx, Var x) const;

  /// Runs over `steps` blocks of `group` contiguous rows each, from a zero
  /// initial state. Output rows keep the input order.
  Var sequence(const Ctx& ctx, Var x, std::size_t steps, std::size_t group, bool reverse) const;
};

/// Post-norm transformer encoder block: multi-head attention, residual, layer
/// norm, position-wise feed-forward, residual, layer norm.
struct TransformerBlock {
  std::size_t width = 0, heads = 0, ff_width = 0;
  Linear query, key, value, proj, ff1, ff2;
  std::size_t ln1_gain = 0, ln1_bias = 0, ln2_gain = 0, ln2_bias = 0;

  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads,
                   std::size_t ff_width, Rng& rng);

  /// x rows are grouped into `groups` sequences of `seq_len` rows. When
  /// `perm` is given, x is in (step, group) order and attention runs on the
  /// permuted (group, step) order. `attention_out` receives the first head's
  /// attention probabilities in (group, step) order.
  Var operator()(const Ctx& ctx, Var x, std::size_t groups, std::size_t seq_len,
                 const SequencePermutation* perm, Tensor* attention_out = nullptr) const;
};

/// Sinusoidal positional encoding, rows (step, group) order.
Tensor positional_encoding(std::size_t steps, std::size_t groups, std::size_t width);

}  // namespace cordcpd::nn
