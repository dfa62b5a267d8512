#include "cordcpd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cordcpd {

void EvalConfig::validate() const {
  if (!(tri_margin > 0.0)) throw std::invalid_argument("tri margin must be positive");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
}

double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auc_roc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of mid-ranks (1-based) of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t q = i; q < j; ++q)
      if (positive[order[q]]) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc_roc: labels must contain both classes");
  const double p = static_cast<double>(n_pos), q = static_cast<double>(n_neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double step_auc(std::span<const double> scores, std::size_t label_step, std::size_t tolerance) {
  if (label_step < 1 || label_step > scores.size()) {
    throw std::out_of_range("label step " + std::to_string(label_step) + " outside the scored range");
  }
  std::vector<std::uint8_t> positive(scores.size(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t step = ScoreTriple::step_of(i);
    const std::size_t gap = step > label_step ? step - label_step : label_step - step;
    positive[i] = gap <= tolerance ? 1 : 0;
  }
  return auc_roc(scores, positive);
}

double tri(double predicted_step, double label_step, double w) {
  if (!(w > 0.0)) throw std::invalid_argument("tri margin must be positive");
  return std::max(0.0, 1.0 - std::abs(predicted_step - label_step) / w);
}

double correlation_accuracy(const Tensor& a_hat, const Tensor& a_true) {
  if (a_hat.shape() != a_true.shape() || a_hat.rank() != 3 || a_hat.dim(1) != a_hat.dim(2)) {
    throw ShapeError("correlation_accuracy: expected matching T x N x N tensors, got " + shape_string(a_hat.shape()) +
                     " and " + shape_string(a_true.shape()));
  }
  const std::size_t T = a_hat.dim(0), N = a_hat.dim(1);
  std::size_t agree = 0, total = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        if (i == j) continue;
        const std::size_t idx = (t * N + i) * N + j;
        const bool predicted = a_hat[idx] >= 0.5;
        const bool actual = a_true[idx] >= 0.5;
        agree += predicted == actual;
        ++total;
      }
  if (total == 0) throw std::invalid_argument("correlation_accuracy: no off-diagonal entries");
  return static_cast<double>(agree) / static_cast<double>(total);
}

ClassificationReport classification_report(std::span<const ChangeTypeDecision> decisions,
                                           std::span<const ChangeLabel> truth, std::span<const std::string> groups) {
  if (decisions.empty()) throw std::invalid_argument("classification_report: no decisions");
  if (decisions.size() != truth.size() || decisions.size() != groups.size()) {
    throw std::invalid_argument("classification_report: decisions, labels and groups differ in length");
  }
  ClassificationReport report;
  std::vector<double> disc(decisions.size());
  std::vector<std::uint8_t> positive(decisions.size());
  std::map<std::string, std::size_t> correct;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    disc[i] = decisions[i].discriminant;
    positive[i] = truth[i] == ChangeLabel::correlation ? 1 : 0;
    report.count[groups[i]] += 1;
    correct[groups[i]] += decisions[i].label == truth[i] ? 1 : 0;
  }
  report.roc_auc = auc_roc(disc, positive);
  for (const auto& [group, n] : report.count) {
    report.accuracy[group] = static_cast<double>(correct[group]) / static_cast<double>(n);
  }
  return report;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty set");
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

}  // namespace cordcpd
