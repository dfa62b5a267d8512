#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cordcpd/scoring.hpp"
#include "cordcpd/tensor.hpp"

namespace cordcpd {

struct EvalConfig {
  double tri_margin = 15.0;
  std::size_t auc_tolerance = 0;
  double alpha = 0.75;
  double tau = 0.0;

  void validate() const;
};

/// Mann-Whitney ROC AUC with half credit for ties. Throws when either class
/// is empty.
double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Per-step AUC of a score vector indexed as ScoreTriple (element i is step
/// i+1); steps within +-tolerance of label_step are positive.
double step_auc(std::span<const double> scores, std::size_t label_step, std::size_t tolerance);

/// max(0, 1 - |y - l| / w).
double tri(double predicted_step, double label_step, double w);

/// Fraction of (t, i != j) with 1{A_hat >= 0.5} == A_true; both T x N x N.
double correlation_accuracy(const Tensor& a_hat, const Tensor& a_true);

struct ClassificationReport {
  double roc_auc = 0.0;
  /// Accuracy at the decision threshold, keyed by data type name.
  std::map<std::string, double> accuracy;
  std::map<std::string, std::size_t> count;
};

/// ROC AUC over discriminants with correlation as the positive class, and
/// per-group accuracy of the decisions' labels.
ClassificationReport classification_report(std::span<const ChangeTypeDecision> decisions,
                                           std::span<const ChangeLabel> truth, std::span<const std::string> groups);

double mean(std::span<const double> values);

}  // namespace cordcpd
