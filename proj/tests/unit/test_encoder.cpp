#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cordcpd/encoder.hpp"
#include "oracles.hpp"

namespace cordcpd {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;

/// Node rows of one (step, batch) graph permuted: row g*N + perm[n] of the
/// result is row g*N + n of x.
Tensor permute_nodes(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t N = perm.size(), graphs = x.rows() / N, C = x.cols();
  Tensor out(x.shape());
  for (std::size_t g = 0; g < graphs; ++g)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) out.at(g * N + perm[n], c) = x.at(g * N + n, c);
  return out;
}

TEST(GruCell, ZeroWeightsHalveHiddenState) {
  ParamStore store;
  Rng rng(1);
  nn::Gru gru(store, "g", 2, 3, rng);
  for (double& v : store.values()) v = 0.0;
  Tape tape;
  const nn::Ctx ctx{tape, store};
  const Tensor h = random_tensor({1, 3}, rng);
  const Tensor out = gru.cell(ctx, tape.constant(random_tensor({1, 2}, rng)), tape.constant(h)).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out[j], 0.5 * h[j]);
  const Tensor zero = gru.cell(ctx, tape.constant(Tensor({1, 2})), tape.constant(Tensor({1, 3}))).value();
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

struct LayerFixture {
  ParamStore store;
  Rng rng{7};
  Tape tape;
  nn::Ctx ctx{tape, store};
};

TEST(TemporalRnn, SingleStepConcatenatesDirections) {
  LayerFixture f;
  TemporalLayer tel(f.store, "tel", TelKind::rnn, 3, 8, 4, f.rng);
  const nn::Layout layout{1, 1, 2};
  const Tensor x = random_tensor({2, 3}, f.rng);
  const Tensor y = tel(f.ctx, f.tape.constant(x), layout).value();
  ASSERT_EQ(y.rows(), 2u);
  ASSERT_EQ(y.cols(), 8u);
  const auto param = [&](const std::string& dir, const char* part) {
    return f.store.tensor(f.store.find("tel.gru_" + dir + "." + part)).storage();
  };
  for (std::size_t n = 0; n < 2; ++n) {
    const std::vector<double> xn{x.at(n, 0), x.at(n, 1), x.at(n, 2)}, h0(4, 0.0);
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string dir = d == 0 ? "fwd" : "bwd";
      const auto ref = testing::gru_step_ref(xn, h0, param(dir, "weight_input"), param(dir, "bias_input"),
                                             param(dir, "weight_hidden"), param(dir, "bias_hidden"));
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at(n, 4 * d + j), ref[j], 1e-14);
    }
  }
}

TEST(TemporalRnn, NodePermutationPermutesOutputs) {
  LayerFixture f;
  TemporalLayer tel(f.store, "tel", TelKind::rnn, 3, 8, 4, f.rng);
  const nn::Layout layout{5, 1, 4};
  const Tensor x = random_tensor({20, 3}, f.rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const Tensor a = permute_nodes(tel(f.ctx, f.tape.constant(x), layout).value(), perm);
  const Tensor b = tel(f.ctx, f.tape.constant(permute_nodes(x, perm)), layout).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(TemporalRnn, TimeReversalSwapsDirections) {
  LayerFixture f;
  TemporalLayer tel(f.store, "tel", TelKind::rnn, 3, 8, 4, f.rng);
  const std::size_t T = 6, N = 2;
  const nn::Layout layout{T, 1, N};
  const Tensor x = random_tensor({T * N, 3}, f.rng);
  Tensor reversed(x.shape());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t r = 0; r < N * 3; ++r) reversed[(T - 1 - t) * N * 3 + r] = x[t * N * 3 + r];
  const Tensor a = tel(f.ctx, f.tape.constant(x), layout).value();
  // With the two directions' weights swapped, the reversed series mirrors
  // the original.
  ParamStore& s = f.store;
  for (const char* part : {"weight_input", "bias_input", "weight_hidden", "bias_hidden"}) {
    auto p = s.values(s.find(std::string("tel.gru_fwd.") + part));
    auto q = s.values(s.find(std::string("tel.gru_bwd.") + part));
    std::swap_ranges(p.begin(), p.end(), q.begin());
  }
  Tape tape;
  const nn::Ctx ctx{tape, s};
  const Tensor b = tel(ctx, tape.constant(reversed), layout).value();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_NEAR(a.at(t * N + n, c), b.at((T - 1 - t) * N + n, 4 + c), 1e-14);
        EXPECT_NEAR(a.at(t * N + n, 4 + c), b.at((T - 1 - t) * N + n, c), 1e-14);
      }
}

TEST(TemporalTransformer, PositionalEncodingBreaksConstantInput) {
  LayerFixture f;
  TemporalLayer tel(f.store, "tel", TelKind::transformer, 3, 8, 4, f.rng);
  const nn::Layout layout{4, 1, 1};
  const Tensor x(Shape{4, 3}, 0.7);
  const Tensor y = tel(f.ctx, f.tape.constant(x), layout).value();
  EXPECT_GT(std::abs(y.at(0, 0) - y.at(3, 0)), 1e-6);
}

TEST(TemporalTransformer, AttentionRowsSumToOne) {
  LayerFixture f;
  TemporalLayer tel(f.store, "tel", TelKind::transformer, 3, 8, 4, f.rng);
  const nn::Layout layout{5, 1, 2};
  Tensor attn;
  tel(f.ctx, f.tape.constant(random_tensor({10, 3}, f.rng)), layout, &attn);
  ASSERT_EQ(attn.cols(), 5u);
  for (std::size_t r = 0; r < attn.rows(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += attn.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(TransformerBlock, ConstantSequenceWithoutPositionsIsConstant) {
  LayerFixture f;
  nn::TransformerBlock blk(f.store, "b", 8, 4, 32, f.rng);
  Tensor x(Shape{5, 8});
  const Tensor row = random_tensor({8}, f.rng);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 8; ++c) x.at(t, c) = row[c];
  const Tensor y = blk(f.ctx, f.tape.constant(x), 1, 5, nullptr).value();
  for (std::size_t t = 1; t < 5; ++t)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(t, c), y.at(0, c), 1e-13);
}

class SpatialEquivariance : public ::testing::TestWithParam<SelKind> {};

TEST_P(SpatialEquivariance, NodePermutationPermutesOutputs) {
  LayerFixture f;
  SpatialLayer sel(f.store, "sel", GetParam(), 8, 8, 4, f.rng);
  const std::size_t N = 4;
  const nn::Layout layout{3, 2, N};
  const auto pairs = nn::pair_index(layout.graphs(), N);
  const Tensor x = random_tensor({layout.rows(), 8}, f.rng);
  const std::vector<std::size_t> perm{3, 1, 0, 2};
  const Tensor a = permute_nodes(sel(f.ctx, f.tape.constant(x), layout, pairs).value(), perm);
  const Tensor b = sel(f.ctx, f.tape.constant(permute_nodes(x, perm)), layout, pairs).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Kinds, SpatialEquivariance, ::testing::Values(SelKind::gnn, SelKind::transformer),
                         [](const auto& info) { return to_string(info.param); });

TEST(SpatialGnn, TwoNodesReceiveOneMessageEach) {
  const auto pairs = nn::pair_index(1, 2);
  EXPECT_EQ(*pairs.receiver, (ad::Index{1, 0}));
}

TEST(SpatialGnn, ZeroMessagesReduceToNodeFunction) {
  LayerFixture f;
  SpatialLayer sel(f.store, "sel", SelKind::gnn, 4, 6, 1, f.rng);
  for (double& v : f.store.values(f.store.find("sel.f_edge.fc2.weight"))) v = 0.0;
  for (double& v : f.store.values(f.store.find("sel.f_edge.fc2.bias"))) v = 0.0;
  nn::Mlp node;
  node.hidden.in = 4;
  node.hidden.out = 6;
  node.hidden.weight = f.store.find("sel.f_node.fc1.weight");
  node.hidden.bias = f.store.find("sel.f_node.fc1.bias");
  node.output.in = 6;
  node.output.out = 6;
  node.output.weight = f.store.find("sel.f_node.fc2.weight");
  node.output.bias = f.store.find("sel.f_node.fc2.bias");
  const nn::Layout layout{2, 1, 3};
  const Tensor x = random_tensor({6, 4}, f.rng);
  const Tensor a = sel(f.ctx, f.tape.constant(x), layout, nn::pair_index(2, 3)).value();
  const Tensor b = node(f.ctx, f.tape.constant(x)).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

class EncoderVariants : public ::testing::TestWithParam<std::tuple<TelKind, SelKind, EdgeHeadKind>> {};

TEST_P(EncoderVariants, PosteriorRowsAreDistributions) {
  EncoderConfig cfg;
  std::tie(cfg.tel_kind, cfg.sel_kind, cfg.edge_head) = GetParam();
  cfg.hidden_dim = 8;
  cfg.n_attention_heads = 2;
  ParamStore store;
  Rng rng(3);
  Encoder enc(store, cfg, 2, rng);
  const nn::Layout layout{6, 2, 3};
  const auto pairs = nn::pair_index(layout.graphs(), 3);
  Tape tape;
  const nn::Ctx ctx{tape, store};
  const auto out = enc(ctx, tape.constant(random_tensor({layout.rows(), 2}, rng)), layout, pairs);
  ASSERT_EQ(out.probs.rows(), layout.pairs());
  ASSERT_EQ(out.probs.cols(), 2u);
  for (std::size_t r = 0; r < layout.pairs(); ++r) EXPECT_NEAR(out.probs.value().at(r, 0) + out.probs.value().at(r, 1), 1.0, 1e-10);
  Rng noise(4);
  const Tensor s = enc.sample(out, noise, false).value();
  for (std::size_t r = 0; r < layout.pairs(); ++r) EXPECT_NEAR(s.at(r, 0) + s.at(r, 1), 1.0, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(
    All, EncoderVariants,
    ::testing::Combine(::testing::Values(TelKind::rnn, TelKind::transformer),
                       ::testing::Values(SelKind::gnn, SelKind::transformer),
                       ::testing::Values(EdgeHeadKind::linear, EdgeHeadKind::mlp)),
    [](const auto& info) {
      return to_string(std::get<0>(info.param)) + "_" + to_string(std::get<1>(info.param)) + "_" +
             to_string(std::get<2>(info.param));
    });

TEST(EncoderConfig, Validation) {
  EncoderConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_edge_types = 3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.tel_kind = TelKind::transformer;
  cfg.hidden_dim = 66;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.gumbel_temperature = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(parse_tel_kind("lstm"), std::invalid_argument);
  EXPECT_EQ(parse_sel_kind("trans"), SelKind::transformer);
  EXPECT_EQ(parse_edge_head_kind("mlp"), EdgeHeadKind::mlp);
}

}  // namespace
}  // namespace cordcpd
