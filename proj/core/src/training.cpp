#include "cordcpd/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace cordcpd {

namespace {

constexpr char kCheckpointMagic[5] = "CPDM";
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::size_t> shuffled_order(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

SeriesBatch gather_batch(std::span<const Tensor> data, std::span<const std::size_t> indices) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(indices.size());
  for (std::size_t i : indices) ptrs.push_back(&data[i]);
  return SeriesBatch::stack(ptrs);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path out = path;
  out += ".config";
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and non-negative");
}

std::size_t TrainConfig::default_batch_size(const EncoderConfig& encoder) {
  const bool transformer = encoder.tel_kind == TelKind::transformer || encoder.sel_kind == SelKind::transformer;
  return transformer ? 32 : 128;
}

double train_epoch(CordModel& model, std::span<const Tensor> data, AdamState& opt, const TrainConfig& cfg,
                   std::size_t epoch) {
  if (data.empty()) throw std::invalid_argument("training split is empty");
  cfg.validate();
  const Rng run(cfg.seed);
  const std::vector<std::size_t> order = shuffled_order(data.size(), run.substream(epoch, "shuffle"));
  Rng gumbel = run.substream(epoch, "gumbel");
  double loss_sum = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
    const std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const SeriesBatch batch = gather_batch(data, idx);
    ad::Tape tape;
    LossTerms terms;
    std::vector<double> grads;
    try {
      terms = model.loss(tape, batch, &gumbel);
      tape.backward(terms.total);
      grads = tape.param_gradients(model.params());
      adam_step(model.params().values(), grads, opt);
    } catch (const NumericError& e) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_index) + ": " + e.what());
    }
    loss_sum += terms.total.value().item() * static_cast<double>(idx.size());
  }
  return loss_sum / static_cast<double>(data.size());
}

double evaluate_loss(const CordModel& model, std::span<const Tensor> data, std::size_t batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluation split is empty");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    const std::span<const std::size_t> idx(order.data() + begin, end - begin);
    ad::Tape tape;
    tape.set_grad_enabled(false);
    const LossTerms terms = model.loss(tape, gather_batch(data, idx), nullptr);
    loss_sum += terms.total.value().item() * static_cast<double>(idx.size());
  }
  return loss_sum / static_cast<double>(data.size());
}

FitResult fit(const ModelConfig& model_config, std::span<const Tensor> train, std::span<const Tensor> validation,
              const TrainConfig& cfg, const std::function<void(const EpochStats&)>& progress) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("training split is empty");
  CordModel model(model_config);
  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamState opt(model.params().size(), adam);
  const std::span<const Tensor> val = validation.empty() ? train : validation;

  FitResult result;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_epoch(model, train, opt, cfg, epoch);
    stats.validation_loss = evaluate_loss(model, val, cfg.batch_size);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(stats);
    if (progress) progress(stats);
    if (stats.validation_loss < best) {
      best = stats.validation_loss;
      result.best = snapshot(model, epoch, stats.validation_loss);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  return result;
}

Checkpoint snapshot(const CordModel& model, std::size_t epoch, double validation_loss) {
  Checkpoint c;
  c.config = model.config();
  const auto values = model.params().values();
  c.params.assign(values.begin(), values.end());
  c.epoch = epoch;
  c.validation_loss = validation_loss;
  return c;
}

std::unique_ptr<CordModel> restore(const Checkpoint& checkpoint) {
  auto model = std::make_unique<CordModel>(checkpoint.config);
  if (model->params().size() != checkpoint.params.size()) {
    throw std::invalid_argument("checkpoint holds " + std::to_string(checkpoint.params.size()) +
                                " parameters but the configured model has " +
                                std::to_string(model->params().size()));
  }
  model->params().assign(checkpoint.params);
  return model;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    detail::write_magic(out, kCheckpointMagic);
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint64_t>(out, checkpoint.config.fingerprint());
    detail::write_le<std::uint64_t>(out, checkpoint.params.size());
    out.write(reinterpret_cast<const char*>(checkpoint.params.data()),
              static_cast<std::streamsize>(checkpoint.params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
  }
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw std::runtime_error("cannot open checkpoint sidecar for writing: " + sidecar_path(path).string());
  side << checkpoint.config.canonical() << "checkpoint.epoch=" << checkpoint.epoch << "\n"
       << "checkpoint.validation_loss=" << format_double(checkpoint.validation_loss) << "\n";
  if (!side) throw std::runtime_error("failed writing checkpoint sidecar: " + sidecar_path(path).string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  const std::string what = "checkpoint " + path.string();
  detail::expect_magic(in, kCheckpointMagic, what);
  const auto version = detail::read_le<std::uint32_t>(in, what + " header");
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported format version " + std::to_string(version));
  }
  const auto fingerprint = detail::read_le<std::uint64_t>(in, what + " header");
  const auto count = detail::read_le<std::uint64_t>(in, what + " header");
  Checkpoint c;
  c.params.resize(count);
  in.read(reinterpret_cast<char*>(c.params.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double))) {
    throw FormatError(what + ": truncated parameter payload");
  }

  std::ifstream side(sidecar_path(path));
  if (!side) throw std::runtime_error("cannot open checkpoint sidecar: " + sidecar_path(path).string());
  std::stringstream text;
  text << side.rdbuf();
  c.config = ModelConfig::from_canonical(text.str());
  if (c.config.fingerprint() != fingerprint) {
    throw FormatError(what + ": configuration fingerprint does not match the sidecar");
  }
  std::string line;
  std::istringstream lines(text.str());
  while (std::getline(lines, line)) {
    if (line.rfind("checkpoint.epoch=", 0) == 0) c.epoch = std::stoull(line.substr(17));
    if (line.rfind("checkpoint.validation_loss=", 0) == 0) c.validation_loss = std::stod(line.substr(27));
  }
  return c;
}

}  // namespace cordcpd
