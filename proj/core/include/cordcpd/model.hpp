#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cordcpd/decoder.hpp"
#include "cordcpd/encoder.hpp"
#include "cordcpd/params.hpp"

namespace cordcpd {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::size_t n_nodes = 5;
  std::size_t n_features = 4;
  std::uint64_t init_seed = 1;

  void validate() const;
  /// Stable key=value rendering of every field; the fingerprint hashes it.
  std::string canonical() const;
  std::uint64_t fingerprint() const;
  static ModelConfig from_canonical(const std::string& text);
};

/// Several series stacked with rows in (step, batch, node) order.
struct SeriesBatch {
  Tensor x;  // (T*B*N) x M
  nn::Layout layout;

  /// Every series must be T x N x M with identical shape.
  static SeriesBatch stack(std::span<const Tensor* const> series);
  static SeriesBatch single(const Tensor& series);
};

struct LossTerms {
  ad::Var total;
  double reconstruction = 0.0;  // summed over the batch
  double smoothness = 0.0;      // summed over the batch
};

/// Encoder plus decoder sharing one parameter store.
class CordModel {
 public:
  explicit CordModel(const ModelConfig& config);

  CordModel(const CordModel&) = delete;
  CordModel& operator=(const CordModel&) = delete;

  /// Batch-mean of L_obj + lambda * L_smooth. With a generator the decoder
  /// consumes a Gumbel-Softmax sample of the edges; without one it consumes
  /// the soft posterior (deterministic).
  LossTerms loss(ad::Tape& tape, const SeriesBatch& batch, Rng* gumbel) const;

  /// T x N x N x K edge-type probabilities; diagonal entries are zero.
  Tensor edge_posterior(const Tensor& series) const;

  /// Teacher-forced predictions x_hat^2..x_hat^T as (T-1) x N x M, under the
  /// T x N x N edge weights `edges` (edges[t][s][r] weights sender s to r).
  Tensor teacher_forced(const Tensor& series, const Tensor& edges) const;

  /// Autoregressive rollout from the observed step `start` (0-based): returns
  /// predictions for start+1 .. min(start+k, T-1) as len x N x M.
  Tensor free_rollout(const Tensor& series, const Tensor& edges, std::size_t start, std::size_t k) const;

  /// Windowed rollout error for every t = 1..T-1 (0-based), rollouts starting
  /// from the observed step t-1 and compared with x^t..x^{t+k-1}.
  std::vector<double> rollout_errors(const Tensor& series, const Tensor& edges, std::size_t k) const;

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  const Decoder& decoder() const noexcept { return decoder_; }

 private:
  void check_series(const Tensor& series) const;
  /// Hidden state of the output GRU after consuming steps 0..t for every t,
  /// rows (t, node); invalid for the MLP head.
  Tensor observed_hidden_states(const Tensor& series, const Tensor& edges) const;

  ModelConfig config_;
  ParamStore params_;
  Encoder encoder_;
  Decoder decoder_;
};

/// Connected-type probabilities, T x N x N, from a T x N x N x K posterior.
Tensor connected_probabilities(const Tensor& posterior);
/// (p_ij + p_ji) / 2 of a T x N x N tensor.
Tensor symmetrize(const Tensor& edges);
/// T x N x N weights to pair rows (T*N*(N-1)) x 1 in nn::pair_index order.
Tensor edges_to_pairs(const Tensor& edges);

}  // namespace cordcpd
