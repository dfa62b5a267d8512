#include <gtest/gtest.h>

#include <cmath>

#include "cordcpd/metrics.hpp"
#include "cordcpd/scoring.hpp"
#include "cordcpd/simulator.hpp"
#include "oracles.hpp"

namespace cordcpd {
namespace {

TEST(CorrelationScore, ConstantEdgesScoreZero) {
  const Tensor a(Shape{10, 4, 4}, 0.3);
  for (double s : correlation_change_score(a)) EXPECT_EQ(s, 0.0);
  EXPECT_THROW(correlation_change_score(Tensor(Shape{1, 4, 4})), std::invalid_argument);
}

TEST(CorrelationScore, SymmetricFlipScoresTwo) {
  Tensor a(Shape{10, 3, 3}, 0.0);
  for (std::size_t t = 6; t < 10; ++t) {
    a[(t * 3 + 0) * 3 + 2] = 1.0;
    a[(t * 3 + 2) * 3 + 0] = 1.0;
  }
  const auto s = correlation_change_score(a);
  ASSERT_EQ(s.size(), 9u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], ScoreTriple::step_of(i) == 6 ? 2.0 : 0.0);
}

TEST(CorrelationScore, MatchesLoopOracleAndIgnoresDiagonal) {
  Rng rng(1);
  Tensor a = testing::random_tensor({7, 4, 4}, rng);
  const auto s = correlation_change_score(a);
  for (std::size_t t = 1; t < 7; ++t) {
    double ref = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j) ref += std::abs(a[(t * 4 + i) * 4 + j] - a[((t - 1) * 4 + i) * 4 + j]);
    EXPECT_NEAR(s[t - 1], ref, 1e-12);
  }
  for (std::size_t t = 0; t < 7; ++t) a[(t * 4 + 1) * 4 + 1] = rng.normal();
  EXPECT_EQ(correlation_change_score(a), s);
}

TEST(CorrelationScore, InvariantToEdgeTypeRelabelling) {
  Rng rng(2);
  Tensor a(Shape{6, 3, 3});
  for (double& v : a.data()) v = rng.uniform();
  Tensor b = a;
  for (double& v : b.data()) v = 1.0 - v;
  const auto sa = correlation_change_score(a), sb = correlation_change_score(b);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_NEAR(sa[i], sb[i], 1e-12);
}

TEST(Normalize, SpotValues) {
  const std::vector<double> c(5, 3.0);
  for (double v : normalize_score(c)) EXPECT_EQ(v, 0.0);
  const std::vector<double> two{0.0, 2.0};
  EXPECT_EQ(normalize_score(two), (std::vector<double>{-1.0, 1.0}));
}

TEST(Normalize, ZeroMeanUnitStd) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(50);
    for (double& v : s) v = rng.normal(3.0, 10.0);
    const auto n = normalize_score(s);
    double m = 0, m2 = 0;
    for (double v : n) m += v, m2 += v * v;
    EXPECT_NEAR(m / 50, 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt(m2 / 50), 1.0, 1e-10);
  }
}

TEST(Ensemble, SpotValuesAndLoopOracle) {
  Rng rng(4);
  std::vector<double> r(20), d(20);
  for (double& v : r) v = rng.uniform();
  for (double& v : d) v = rng.uniform();
  const std::vector<double> flat(20, 1.0);
  EXPECT_EQ(ensemble_score(flat, d), normalize_score(d));
  const auto twice = ensemble_score(r, r);
  const auto nr = normalize_score(r);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(twice[i], 2.0 * nr[i], 1e-15);
  // Independent loop oracle for mean/std normalization.
  auto norm_ref = [](const std::vector<double>& s) {
    double m = 0;
    for (double v : s) m += v;
    m /= static_cast<double>(s.size());
    double var = 0;
    for (double v : s) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / static_cast<double>(s.size()));
    std::vector<double> out;
    for (double v : s) out.push_back((v - m) / sd);
    return out;
  };
  const auto en = ensemble_score(r, d);
  const auto a = norm_ref(r), b = norm_ref(d);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(en[i], a[i] + b[i], 1e-12);
  EXPECT_THROW(ensemble_score(r, std::vector<double>(3)), std::invalid_argument);
}

TEST(PredictChangePoint, PeakTiesAndMonotone) {
  EXPECT_EQ(predict_change_point(std::vector<double>{0, 1, 5, 1}), 3u);
  EXPECT_EQ(predict_change_point(std::vector<double>{0, 4, 1, 4}), 2u);
  EXPECT_EQ(predict_change_point(std::vector<double>{1, 2, 3, 4, 5}), 5u);
}

TEST(PredictChangePoint, InvariantToPositiveAffineRescaling) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(30), d(30), r2(30), d2(30);
    const double a1 = rng.uniform(0.1, 10), b1 = rng.normal(), a2 = rng.uniform(0.1, 10), b2 = rng.normal();
    for (std::size_t i = 0; i < 30; ++i) {
      r[i] = rng.uniform();
      d[i] = rng.uniform();
      r2[i] = a1 * r[i] + b1;
      d2[i] = a2 * d[i] + b2;
    }
    EXPECT_EQ(predict_change_point(ensemble_score(r, d)), predict_change_point(ensemble_score(r2, d2)));
  }
}

/// Score vector whose normalized value at index `at` is `target` (others equal).
std::vector<double> spike(std::size_t n, std::size_t at, double height) {
  std::vector<double> s(n, 0.0);
  s[at] = height;
  return s;
}

TEST(Classify, RulePlugIn) {
  // With one spike in n entries, Norm at the spike is sqrt(n - 1).
  const std::size_t n = 10;
  const auto r = spike(n, 4, 1.0);
  const std::vector<double> flat(n, 0.0);
  auto d1 = classify_change_type(r, flat, 5, 0.75, 0.0);
  EXPECT_NEAR(d1.discriminant, 3.0, 1e-12);
  EXPECT_EQ(d1.label, ChangeLabel::correlation);
  EXPECT_EQ(d1.mode, DecisionMode::with_label);
  auto d2 = classify_change_type(flat, r, 5, 0.75, 0.0);
  EXPECT_NEAR(d2.discriminant, -2.25, 1e-12);
  EXPECT_EQ(d2.label, ChangeLabel::independent);
  auto d3 = classify_change_type(flat, r, std::nullopt, 0.75, 0.0);
  EXPECT_EQ(d3.predicted_step, 5u);
  EXPECT_EQ(d3.mode, DecisionMode::without_label);
  EXPECT_THROW(classify_change_type(r, flat, 11, 0.75, 0.0), std::out_of_range);
  EXPECT_THROW(classify_change_type(r, flat, 0, 0.75, 0.0), std::out_of_range);
  EXPECT_THROW(classify_change_type(r, flat, 3, -1.0, 0.0), std::invalid_argument);
}

TEST(Classify, AlphaZeroThresholdsNormalizedSr) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(20), d(20);
    for (double& v : r) v = rng.uniform();
    for (double& v : d) v = rng.uniform();
    const std::size_t step = static_cast<std::size_t>(rng.uniform_int(1, 20));
    const double tau = rng.normal();
    const auto dec = classify_change_type(r, d, step, 0.0, tau);
    EXPECT_EQ(dec.discriminant, normalize_score(r)[step - 1]);
    EXPECT_EQ(dec.label == ChangeLabel::correlation, dec.discriminant >= tau);
  }
}

TEST(GroundTruthCeiling, ConnectionChangeArgmaxIsExact) {
  const SimConfig cfg;
  std::vector<double> aucs, tris;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto s = generate_series(ChangeType::connection, Rng::derive(20, i, "ceiling"), cfg);
    const auto sr = correlation_change_score(s.adjacency());
    EXPECT_EQ(predict_change_point(sr), s.change_step);
    aucs.push_back(step_auc(sr, s.change_step, 0));
    tris.push_back(tri(static_cast<double>(predict_change_point(sr)), static_cast<double>(s.change_step), 15));
  }
  EXPECT_EQ(mean(aucs), 1.0);
  EXPECT_EQ(mean(tris), 1.0);
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.n_nodes = 3;
  cfg.n_features = 2;
  cfg.encoder.hidden_dim = 4;
  cfg.decoder.hidden_dim = 4;
  return cfg;
}

TEST(IndependentScore, ZeroHeadOnConstantSeriesIsZero) {
  CordModel model(tiny_model());
  for (const char* name : {"decoder.g_out.head.weight", "decoder.g_out.head.bias"})
    for (double& v : model.params().values(model.params().find(name))) v = 0.0;
  const Tensor x(Shape{12, 3, 2}, 0.4);
  const auto s = independent_change_score(model, x, Tensor(Shape{12, 3, 3}, 0.5), 5);
  ASSERT_EQ(s.size(), 11u);
  for (double v : s) EXPECT_EQ(v, 0.0);
}

TEST(IndependentScore, WindowOneIsOneStepError) {
  CordModel model(tiny_model());
  Rng rng(7);
  const Tensor x = testing::random_tensor({12, 3, 2}, rng);
  Tensor e(Shape{12, 3, 3});
  for (double& v : e.data()) v = rng.uniform();
  const auto s = independent_change_score(model, x, e, 1);
  const Tensor tf = model.teacher_forced(x, e);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double acc = 0;
    for (std::size_t q = 0; q < 6; ++q) {
      const double d = tf[i * 6 + q] - x[(i + 1) * 6 + q];
      acc += d * d;
    }
    EXPECT_NEAR(s[i], acc / 6.0, 1e-14);
  }
}

TEST(ScoreSeries, TripleShapesAndSigns) {
  CordModel model(tiny_model());
  Rng rng(8);
  const Tensor x = testing::random_tensor({15, 3, 2}, rng);
  const auto sc = score_series(model, x, 5);
  EXPECT_EQ(sc.s_r.size(), 14u);
  EXPECT_EQ(sc.s_d.size(), 14u);
  EXPECT_EQ(sc.s_en.size(), 14u);
  for (std::size_t i = 0; i < 14; ++i) {
    EXPECT_GE(sc.s_r[i], 0.0);
    EXPECT_GE(sc.s_d[i], 0.0);
  }
  EXPECT_EQ(sc.s_en, ensemble_score(sc.s_r, sc.s_d));
  const Tensor a = correlation_matrices(model, x);
  for (std::size_t t = 0; t < 15; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a[(t * 3 + i) * 3 + j], a[(t * 3 + j) * 3 + i]);
}

}  // namespace
}  // namespace cordcpd
