#include "cordcpd/scoring.hpp"

#include <cmath>
#include <stdexcept>

namespace cordcpd {

std::string to_string(ChangeLabel label) {
  return label == ChangeLabel::correlation ? "correlation" : "independent";
}

std::string to_string(DecisionMode mode) {
  return mode == DecisionMode::with_label ? "with_label" : "without_label";
}

std::vector<double> correlation_change_score(const Tensor& edges) {
  if (edges.rank() != 3 || edges.dim(1) != edges.dim(2)) throw ShapeError("edges must be T x N x N");
  const std::size_t T = edges.dim(0), N = edges.dim(1);
  if (T < 2) throw std::invalid_argument("correlation change score needs T >= 2");
  std::vector<double> s(T - 1, 0.0);
  for (std::size_t t = 1; t < T; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        if (i == j) continue;
        acc += std::abs(edges[(t * N + i) * N + j] - edges[((t - 1) * N + i) * N + j]);
      }
    s[t - 1] = acc;
  }
  return s;
}

std::vector<double> independent_change_score(const CordModel& model, const Tensor& series, const Tensor& edges,
                                             std::size_t k) {
  return model.rollout_errors(series, edges, k);
}

std::vector<double> normalize_score(std::span<const double> s) {
  if (s.empty()) throw std::invalid_argument("cannot normalize an empty score vector");
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(s.size(), 0.0);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - mean) / sd;
  return out;
}

std::vector<double> ensemble_score(std::span<const double> s_r, std::span<const double> s_d) {
  if (s_r.size() != s_d.size()) throw std::invalid_argument("s_r and s_d lengths differ");
  std::vector<double> a = normalize_score(s_r);
  const std::vector<double> b = normalize_score(s_d);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

std::size_t predict_change_point(std::span<const double> s_en) {
  if (s_en.empty()) throw std::invalid_argument("cannot predict a change-point from an empty score");
  std::size_t best = 0;
  for (std::size_t i = 1; i < s_en.size(); ++i)
    if (s_en[i] > s_en[best]) best = i;
  return ScoreTriple::step_of(best);
}

ChangeTypeDecision classify_change_type(std::span<const double> s_r, std::span<const double> s_d,
                                        std::optional<std::size_t> step, double alpha, double tau) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  if (s_r.size() != s_d.size()) throw std::invalid_argument("s_r and s_d lengths differ");
  const std::vector<double> nr = normalize_score(s_r);
  const std::vector<double> nd = normalize_score(s_d);
  ChangeTypeDecision d;
  if (step) {
    if (*step < 1 || *step > s_r.size()) {
      throw std::out_of_range("change step " + std::to_string(*step) + " outside the scored range 1.." +
                              std::to_string(s_r.size()));
    }
    d.predicted_step = *step;
    d.mode = DecisionMode::with_label;
  } else {
    std::vector<double> en(nr.size());
    for (std::size_t i = 0; i < en.size(); ++i) en[i] = nr[i] + nd[i];
    d.predicted_step = predict_change_point(en);
    d.mode = DecisionMode::without_label;
  }
  const std::size_t i = d.predicted_step - 1;
  d.discriminant = nr[i] - alpha * nd[i];
  d.label = d.discriminant >= tau ? ChangeLabel::correlation : ChangeLabel::independent;
  return d;
}

Tensor correlation_matrices(const CordModel& model, const Tensor& series) {
  return symmetrize(connected_probabilities(model.edge_posterior(series)));
}

ScoreTriple score_series(const CordModel& model, const Tensor& series, std::size_t k) {
  ScoreTriple out;
  out.k = k;
  // The decoder was trained on per-direction edge weights, so the rollout uses
  // them unsymmetrized; s_r uses the symmetrized matrix.
  const Tensor directed = connected_probabilities(model.edge_posterior(series));
  out.s_r = correlation_change_score(symmetrize(directed));
  out.s_d = independent_change_score(model, series, directed, k);
  out.s_en = ensemble_score(out.s_r, out.s_d);
  return out;
}

}  // namespace cordcpd
