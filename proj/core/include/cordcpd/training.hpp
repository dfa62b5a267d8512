#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cordcpd/model.hpp"
#include "cordcpd/optim.hpp"

namespace cordcpd {

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;

  void validate() const;
  /// 128 for the GNN spatial layer, 32 when any transformer is used.
  static std::size_t default_batch_size(const EncoderConfig& encoder);
};

struct Checkpoint {
  ModelConfig config;
  std::vector<double> params;
  std::size_t epoch = 0;
  double validation_loss = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  Checkpoint best;
  std::vector<EpochStats> history;
};

/// One pass over `data` in a shuffled order drawn from (seed, epoch); each batch
/// runs forward with a Gumbel-Softmax edge sample, backward and one Adam step.
/// Returns the mean per-series loss.
double train_epoch(CordModel& model, std::span<const Tensor> data, AdamState& opt, const TrainConfig& cfg,
                   std::size_t epoch);

/// Mean per-series loss with the soft posterior in place of a sample.
double evaluate_loss(const CordModel& model, std::span<const Tensor> data, std::size_t batch_size);

/// Trains for cfg.epochs with early stopping once the validation loss has not
/// improved for cfg.patience epochs; returns the best-validation checkpoint.
FitResult fit(const ModelConfig& model_config, std::span<const Tensor> train, std::span<const Tensor> validation,
              const TrainConfig& cfg, const std::function<void(const EpochStats&)>& progress = {});

Checkpoint snapshot(const CordModel& model, std::size_t epoch, double validation_loss);
std::unique_ptr<CordModel> restore(const Checkpoint& checkpoint);

/// Binary parameter file plus a `<path>.config` key=value sidecar holding the model
/// configuration, epoch and validation loss.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cordcpd
