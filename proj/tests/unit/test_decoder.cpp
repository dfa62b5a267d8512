#include <gtest/gtest.h>

#include <cmath>

#include "cordcpd/decoder.hpp"
#include "cordcpd/model.hpp"
#include "cordcpd/simulator.hpp"
#include "oracles.hpp"
#include "spring_decoder.hpp"

namespace cordcpd {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;

double elu_ref(double v) { return v > 0 ? v : std::expm1(v); }

/// y = act(x W + b) for one row.
std::vector<double> dense(const std::vector<double>& x, const Tensor& w, const Tensor& b, bool act) {
  std::vector<double> y(w.cols());
  for (std::size_t c = 0; c < w.cols(); ++c) {
    double s = b[c];
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * w.at(k, c);
    y[c] = act ? elu_ref(s) : s;
  }
  return y;
}

struct DecoderRig {
  ParamStore store;
  Decoder decoder;
  DecoderRig(OutKind out, CombineKind combine, std::size_t hidden = 6) {
    DecoderConfig cfg;
    cfg.out_kind = out;
    cfg.combine = combine;
    cfg.hidden_dim = hidden;
    Rng rng(31);
    decoder = Decoder(store, cfg, 4, rng);
  }
  Tensor t(const std::string& name) const { return store.tensor(store.find(name)); }
};

/// Scalar-loop decode step: messages A_ji g_e([x_j; x_i]) summed at i, then
/// g_v on x_i + sum (or the concatenation), then the output head.
std::vector<double> decode_step_ref(const DecoderRig& rig, const Tensor& x, const Tensor& a, const Tensor& h,
                                    std::vector<double>* h_out) {
  const std::size_t N = x.rows(), M = x.cols();
  const auto& cfg = rig.decoder.config();
  const std::size_t H = cfg.hidden_dim;
  std::vector<double> pred(N * M);
  if (h_out) h_out->assign(N * H, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> incoming(M, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      if (j == i) continue;
      const Tensor ws = rig.t("decoder.g_edge.fc1.weight_sender"), wr = rig.t("decoder.g_edge.fc1.weight_receiver");
      const Tensor b1 = rig.t("decoder.g_edge.fc1.bias");
      std::vector<double> hid(H);
      for (std::size_t c = 0; c < H; ++c) {
        double s = b1[c];
        for (std::size_t d = 0; d < M; ++d) s += x.at(j, d) * ws.at(d, c) + x.at(i, d) * wr.at(d, c);
        hid[c] = elu_ref(s);
      }
      const auto msg = dense(hid, rig.t("decoder.g_edge.fc2.weight"), rig.t("decoder.g_edge.fc2.bias"), false);
      for (std::size_t d = 0; d < M; ++d) incoming[d] += a.at(j, i) * msg[d];
    }
    std::vector<double> node_in;
    for (std::size_t d = 0; d < M; ++d) node_in.push_back(x.at(i, d));
    if (cfg.combine == CombineKind::sum) {
      for (std::size_t d = 0; d < M; ++d) node_in[d] += incoming[d];
    } else {
      node_in.insert(node_in.end(), incoming.begin(), incoming.end());
    }
    const auto mid = dense(node_in, rig.t("decoder.g_node.fc1.weight"), rig.t("decoder.g_node.fc1.bias"), true);
    const auto emb = dense(mid, rig.t("decoder.g_node.fc2.weight"), rig.t("decoder.g_node.fc2.bias"), false);
    std::vector<double> delta;
    if (cfg.out_kind == OutKind::rnn) {
      std::vector<double> hi(h.data().begin() + static_cast<std::ptrdiff_t>(i * H),
                             h.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * H));
      const auto hn = testing::gru_step_ref(emb, hi, rig.t("decoder.g_out.gru.weight_input").storage(),
                                            rig.t("decoder.g_out.gru.bias_input").storage(),
                                            rig.t("decoder.g_out.gru.weight_hidden").storage(),
                                            rig.t("decoder.g_out.gru.bias_hidden").storage());
      std::copy(hn.begin(), hn.end(), h_out->begin() + static_cast<std::ptrdiff_t>(i * H));
      delta = dense(hn, rig.t("decoder.g_out.head.weight"), rig.t("decoder.g_out.head.bias"), false);
    } else {
      const auto o = dense(emb, rig.t("decoder.g_out.fc1.weight"), rig.t("decoder.g_out.fc1.bias"), true);
      delta = dense(o, rig.t("decoder.g_out.head.weight"), rig.t("decoder.g_out.head.bias"), false);
    }
    for (std::size_t d = 0; d < M; ++d) pred[i * M + d] = x.at(i, d) + delta[d];
  }
  return pred;
}

Tensor random_adjacency(std::size_t N, Rng& rng) {
  Tensor a(Shape{N, N}, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      if (i != j) a.at(i, j) = rng.uniform();
  return a;
}

Tensor to_pairs(const Tensor& a) {
  const std::size_t N = a.rows();
  Tensor w(Shape{N * (N - 1), 1});
  std::size_t r = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      if (i != j) w[r++] = a.at(i, j);
  return w;
}

class DecodeStepReference : public ::testing::TestWithParam<std::tuple<OutKind, CombineKind>> {};

TEST_P(DecodeStepReference, MatchesScalarLoop) {
  const auto [out, combine] = GetParam();
  DecoderRig rig(out, combine);
  Rng rng(5);
  const std::size_t N = 4;
  const Tensor x = random_tensor({N, 4}, rng), a = random_adjacency(N, rng);
  const Tensor h = random_tensor({N, 6}, rng);
  Tape tape;
  const nn::Ctx ctx{tape, rig.store};
  Var hv = out == OutKind::rnn ? tape.constant(h) : Var();
  const auto step = rig.decoder.decode_step(ctx, tape.constant(x), tape.constant(to_pairs(a)), hv, nn::pair_index(1, N));
  std::vector<double> h_ref;
  const auto ref = decode_step_ref(rig, x, a, h, &h_ref);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(step.prediction.value()[i], ref[i], 1e-13);
  if (out == OutKind::rnn) {
    for (std::size_t i = 0; i < h_ref.size(); ++i) EXPECT_NEAR(step.hidden.value()[i], h_ref[i], 1e-13);
  }
}

INSTANTIATE_TEST_SUITE_P(All, DecodeStepReference,
                         ::testing::Combine(::testing::Values(OutKind::mlp, OutKind::rnn),
                                            ::testing::Values(CombineKind::sum, CombineKind::concat)),
                         [](const auto& info) {
                           return to_string(std::get<0>(info.param)) + "_" + to_string(std::get<1>(info.param));
                         });

TEST(Decoder, ZeroEdgesIsolateNodes) {
  DecoderRig rig(OutKind::mlp, CombineKind::sum);
  Rng rng(6);
  const std::size_t N = 3;
  Tensor x = random_tensor({N, 4}, rng);
  const Tensor zero(Shape{N * (N - 1), 1}, 0.0);
  Tape tape;
  const nn::Ctx ctx{tape, rig.store};
  const auto pairs = nn::pair_index(1, N);
  const Tensor a = rig.decoder.decode_step(ctx, tape.constant(x), tape.constant(zero), {}, pairs).prediction.value();
  for (std::size_t d = 0; d < 4; ++d) x.at(2, d) += 1.0;
  const Tensor b = rig.decoder.decode_step(ctx, tape.constant(x), tape.constant(zero), {}, pairs).prediction.value();
  for (std::size_t i = 0; i < 2 * 4; ++i) EXPECT_EQ(a[i], b[i]);
}

void zero_head(ParamStore& store) {
  for (const char* name : {"decoder.g_out.head.weight", "decoder.g_out.head.bias"})
    for (double& v : store.values(store.find(name))) v = 0.0;
}

TEST(Decoder, ZeroHeadIsIdentityStep) {
  for (OutKind out : {OutKind::mlp, OutKind::rnn}) {
    DecoderRig rig(out, CombineKind::sum);
    zero_head(rig.store);
    Rng rng(7);
    const Tensor x = random_tensor({3, 4}, rng);
    Tape tape;
    const nn::Ctx ctx{tape, rig.store};
    const auto step = rig.decoder.decode_step(ctx, tape.constant(x), tape.constant(Tensor({6, 1}, 0.5)),
                                              rig.decoder.initial_hidden(ctx, 3), nn::pair_index(1, 3));
    EXPECT_EQ(step.prediction.value(), x);
  }
}

ModelConfig tiny_config(OutKind out) {
  ModelConfig cfg;
  cfg.n_nodes = 3;
  cfg.n_features = 2;
  cfg.encoder.hidden_dim = 4;
  cfg.decoder.hidden_dim = 5;
  cfg.decoder.out_kind = out;
  return cfg;
}

Tensor random_edges(std::size_t T, std::size_t N, Rng& rng) {
  Tensor e(Shape{T, N, N}, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        if (i != j) e[(t * N + i) * N + j] = rng.uniform();
  return e;
}

TEST(TeacherForced, ShapeAndSingleStep) {
  CordModel model(tiny_config(OutKind::rnn));
  Rng rng(8);
  const Tensor x = random_tensor({2, 3, 2}, rng);
  const Tensor pred = model.teacher_forced(x, random_edges(2, 3, rng));
  EXPECT_EQ(pred.shape(), (Shape{1, 3, 2}));
  const Tensor x10 = random_tensor({10, 3, 2}, rng);
  EXPECT_EQ(model.teacher_forced(x10, random_edges(10, 3, rng)).shape(), (Shape{9, 3, 2}));
}

TEST(TeacherForced, ZeroHeadGivesStepDifferenceLoss) {
  CordModel model(tiny_config(OutKind::rnn));
  zero_head(model.params());
  Rng rng(9);
  const Tensor x = random_tensor({6, 3, 2}, rng);
  const Tensor pred = model.teacher_forced(x, random_edges(6, 3, rng));
  double direct = 0.0;
  for (std::size_t i = 0; i < 5 * 6; ++i) {
    EXPECT_EQ(pred[i], x[i]);
    const double d = x[i + 6] - x[i];
    direct += d * d;
  }
  Tape tape;
  const SeriesBatch batch = SeriesBatch::single(x);
  Var target = ad::slice_rows(tape.constant(batch.x), 3, 18);
  Var p = tape.constant(pred.reshaped({15, 2}));
  EXPECT_NEAR(reconstruction_loss(target, p, 5e-5).value().item(), direct / 1e-4, 1e-6);
}

TEST(TeacherForced, NeverSeesItsOwnPredictions) {
  // Changing a later observation must not alter earlier predictions, and the
  // prediction of x^{t+1} depends on the observed x^t.
  CordModel model(tiny_config(OutKind::rnn));
  Rng rng(10);
  Tensor x = random_tensor({6, 3, 2}, rng);
  const Tensor e = random_edges(6, 3, rng);
  const Tensor a = model.teacher_forced(x, e);
  x[4 * 6] += 1.0;
  const Tensor b = model.teacher_forced(x, e);
  for (std::size_t i = 0; i < 4 * 6; ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a[4 * 6], b[4 * 6]);
}

TEST(FreeRollout, FirstStepEqualsTeacherForcing) {
  for (OutKind out : {OutKind::mlp, OutKind::rnn}) {
    CordModel model(tiny_config(out));
    Rng rng(11);
    const Tensor x = random_tensor({8, 3, 2}, rng), e = random_edges(8, 3, rng);
    const Tensor tf = model.teacher_forced(x, e);
    for (std::size_t start : {0u, 3u, 6u}) {
      const Tensor r = model.free_rollout(x, e, start, 1);
      ASSERT_EQ(r.shape(), (Shape{1, 3, 2}));
      for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(r[i], tf[start * 6 + i], 1e-13);
    }
  }
}

TEST(FreeRollout, ZeroHeadRepeatsStart) {
  CordModel model(tiny_config(OutKind::rnn));
  zero_head(model.params());
  Rng rng(12);
  const Tensor x = random_tensor({8, 3, 2}, rng), e = random_edges(8, 3, rng);
  const Tensor r = model.free_rollout(x, e, 2, 4);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r[j * 6 + i], x[2 * 6 + i]);
}

TEST(FreeRollout, WindowTruncatesAtSeriesEnd) {
  CordModel model(tiny_config(OutKind::mlp));
  Rng rng(13);
  const Tensor x = random_tensor({8, 3, 2}, rng), e = random_edges(8, 3, rng);
  EXPECT_EQ(model.free_rollout(x, e, 5, 10).dim(0), 2u);
  EXPECT_THROW(model.free_rollout(x, e, 7, 1), std::invalid_argument);
  EXPECT_THROW(model.free_rollout(x, e, 2, 0), std::invalid_argument);
}

TEST(FreeRollout, RolloutErrorsMatchExplicitRollouts) {
  for (OutKind out : {OutKind::mlp, OutKind::rnn}) {
    CordModel model(tiny_config(out));
    Rng rng(14);
    const std::size_t T = 9, k = 3;
    const Tensor x = random_tensor({T, 3, 2}, rng), e = random_edges(T, 3, rng);
    const auto errors = model.rollout_errors(x, e, k);
    ASSERT_EQ(errors.size(), T - 1);
    for (std::size_t s = 0; s + 1 < T; ++s) {
      const Tensor r = model.free_rollout(x, e, s, k);
      double acc = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - x[(s + 1) * 6 + i];
        acc += d * d;
      }
      EXPECT_NEAR(errors[s], acc / static_cast<double>(r.size()), 1e-13) << to_string(out) << " start " << s;
    }
  }
}

Tensor edges_from(const ConnectionMatrix& c, std::size_t T) {
  const std::size_t N = c.size();
  Tensor e(Shape{T, N, N}, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) e[(t * N + i) * N + j] = c(i, j) ? 1.0 : 0.0;
  return e;
}

TEST(SpringOracle, PostChangeEdgesTrackBetterAfterConnectionChange) {
  const SimConfig sim;
  const auto model = testing::make_spring_model(sim.n_particles, sim.spring_constant,
                                                sim.fine_dt * static_cast<double>(sim.sample_every));
  std::size_t better = 0;
  const std::size_t n = 20, k = 10;
  for (std::size_t s = 0; s < n; ++s) {
    const auto series = generate_series(ChangeType::connection, Rng::derive(77, s, "oracle"), sim);
    const std::size_t T = series.values.dim(0);
    auto mse = [&](const ConnectionMatrix& c) {
      const Tensor r = model->free_rollout(series.values, edges_from(c, T), series.change_step, k);
      double acc = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - series.values[(series.change_step + 1) * sim.n_particles * 4 + i];
        acc += d * d;
      }
      return acc;
    };
    better += mse(series.connections_after) < mse(series.connections_before);
  }
  EXPECT_GE(better, n * 9 / 10);
}

double median_of(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

TEST(SpringOracle, GroundTruthEdgesShowNoErrorSpikeAtConnectionChange) {
  // The oracle's residual error level depends on how many springs act, so the
  // reference is the larger of the two regime medians.
  const SimConfig sim;
  const auto model = testing::make_spring_model(sim.n_particles, sim.spring_constant,
                                                sim.fine_dt * static_cast<double>(sim.sample_every));
  for (std::size_t s = 0; s < 10; ++s) {
    const auto series = generate_series(ChangeType::connection, Rng::derive(78, s, "oracle"), sim);
    const std::size_t cs = series.change_step, T = series.values.dim(0);
    const auto err = model->rollout_errors(series.values, series.adjacency(), 5);
    const double before = median_of({err.begin(), err.begin() + static_cast<std::ptrdiff_t>(cs - 1)});
    const double after = median_of({err.begin() + static_cast<std::ptrdiff_t>(cs - 1), err.end()});
    auto window_mean = [&](const std::vector<double>& e) {
      double acc = 0.0;
      for (std::size_t t = cs - 3; t <= cs + 3; ++t) acc += e[t - 1];
      return acc / 7.0;
    };
    EXPECT_LE(window_mean(err), 2.0 * std::max(before, after)) << "series " << s;
    // Keeping the stale connections instead produces a clear spike.
    const auto stale = model->rollout_errors(series.values, edges_from(series.connections_before, T), 5);
    EXPECT_GT(window_mean(stale), 100.0 * window_mean(err)) << "series " << s;
  }
}

TEST(Losses, ReconstructionSpotValues) {
  Tape tape;
  Rng rng(1);
  const Tensor x = random_tensor({3, 2}, rng);
  EXPECT_EQ(reconstruction_loss(tape.constant(x), tape.constant(x), 5e-5).value().item(), 0.0);
  const Tensor e(Shape{1, 1}, 0.3);
  EXPECT_NEAR(reconstruction_loss(tape.constant(e), tape.constant(Tensor(Shape{1, 1}, 0.0)), 0.5).value().item(),
              0.09, 1e-15);
  EXPECT_THROW(reconstruction_loss(tape.constant(x), tape.constant(x), 0.0), std::invalid_argument);
}

TEST(Losses, SmoothnessSpotValues) {
  Tape tape;
  const std::size_t T = 100, P = 6;
  EXPECT_EQ(smoothness_loss(tape.constant(Tensor({T * P, 1}, 0.4)), T, 1, P).value().item(), 0.0);
  Tensor flip(Shape{T * P, 1}, 0.0);
  for (std::size_t t = 40; t < T; ++t) flip[t * P + 2] = 1.0;
  EXPECT_NEAR(smoothness_loss(tape.constant(flip), T, 1, P).value().item(), 1.0 / 99.0, 1e-15);
  for (std::size_t t = 40; t < T; ++t) flip[t * P + 4] = 1.0;
  EXPECT_NEAR(smoothness_loss(tape.constant(flip), T, 1, P).value().item(), 2.0 / 99.0, 1e-15);
  EXPECT_THROW(smoothness_loss(tape.constant(Tensor({P, 1})), 1, 1, P), std::invalid_argument);
}

TEST(DecoderConfig, Validation) {
  DecoderConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.sigma_sq = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda_smooth = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(parse_out_kind("lstm"), std::invalid_argument);
  EXPECT_EQ(parse_combine_kind("concat"), CombineKind::concat);
}

}  // namespace
}  // namespace cordcpd
