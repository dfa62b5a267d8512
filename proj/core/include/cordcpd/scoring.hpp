#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cordcpd/model.hpp"
#include "cordcpd/tensor.hpp"

namespace cordcpd {

/// Score vectors over t = 1..T-1 (0-based time); element i belongs to step i+1.
struct ScoreTriple {
  std::vector<double> s_r;
  std::vector<double> s_d;
  std::vector<double> s_en;
  std::size_t k = 5;

  std::size_t size() const noexcept { return s_en.size(); }
  static constexpr std::size_t step_of(std::size_t index) noexcept { return index + 1; }
};

enum class ChangeLabel { correlation, independent };
enum class DecisionMode { with_label, without_label };

std::string to_string(ChangeLabel label);
std::string to_string(DecisionMode mode);

struct ChangeTypeDecision {
  std::size_t predicted_step = 0;
  double discriminant = 0.0;
  ChangeLabel label = ChangeLabel::independent;
  DecisionMode mode = DecisionMode::without_label;
};

/// s_r^t = sum over i != j of |A^t_ij - A^{t-1}_ij| for a T x N x N tensor.
std::vector<double> correlation_change_score(const Tensor& edges);

/// Windowed free-rollout MSE; rollouts start from the observed x^{t-1}.
std::vector<double> independent_change_score(const CordModel& model, const Tensor& series, const Tensor& edges,
                                             std::size_t k);

/// (s - mean) / std with the population std; all zeros when std < 1e-12.
std::vector<double> normalize_score(std::span<const double> s);

std::vector<double> ensemble_score(std::span<const double> s_r, std::span<const double> s_d);

/// Time step of the maximum, earliest on ties. Returns ScoreTriple::step_of.
std::size_t predict_change_point(std::span<const double> s_en);

/// Discriminant Norm(s_r)^t - alpha * Norm(s_d)^t at the labelled step when
/// given, otherwise at the argmax of s_en; correlation iff >= tau.
ChangeTypeDecision classify_change_type(std::span<const double> s_r, std::span<const double> s_d,
                                        std::optional<std::size_t> step, double alpha, double tau);

/// Symmetrized connected-type posterior, T x N x N.
Tensor correlation_matrices(const CordModel& model, const Tensor& series);

ScoreTriple score_series(const CordModel& model, const Tensor& series, std::size_t k);

}  // namespace cordcpd
