#include "cordcpd/model.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cordcpd {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed config line: " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (n_nodes < 2) throw std::invalid_argument("model needs at least two variables");
  if (n_features == 0) throw std::invalid_argument("model needs at least one feature");
}

std::string ModelConfig::canonical() const {
  std::ostringstream out;
  out << "encoder.tel=" << to_string(encoder.tel_kind) << "\n"
      << "encoder.sel=" << to_string(encoder.sel_kind) << "\n"
      << "encoder.edge_head=" << to_string(encoder.edge_head) << "\n"
      << "encoder.hidden_dim=" << encoder.hidden_dim << "\n"
      << "encoder.n_edge_types=" << encoder.n_edge_types << "\n"
      << "encoder.n_attention_heads=" << encoder.n_attention_heads << "\n"
      << "encoder.gumbel_temperature=" << format_double(encoder.gumbel_temperature) << "\n"
      << "decoder.out=" << to_string(decoder.out_kind) << "\n"
      << "decoder.combine=" << to_string(decoder.combine) << "\n"
      << "decoder.hidden_dim=" << decoder.hidden_dim << "\n"
      << "decoder.sigma_sq=" << format_double(decoder.sigma_sq) << "\n"
      << "decoder.lambda_smooth=" << format_double(decoder.lambda_smooth) << "\n"
      << "model.n_nodes=" << n_nodes << "\n"
      << "model.n_features=" << n_features << "\n"
      << "model.init_seed=" << init_seed << "\n";
  return out.str();
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(canonical()); }

ModelConfig ModelConfig::from_canonical(const std::string& text) {
  const auto kv = parse_key_values(text);
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("model config is missing '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.encoder.tel_kind = parse_tel_kind(get("encoder.tel"));
  c.encoder.sel_kind = parse_sel_kind(get("encoder.sel"));
  c.encoder.edge_head = parse_edge_head_kind(get("encoder.edge_head"));
  c.encoder.hidden_dim = std::stoull(get("encoder.hidden_dim"));
  c.encoder.n_edge_types = std::stoull(get("encoder.n_edge_types"));
  c.encoder.n_attention_heads = std::stoull(get("encoder.n_attention_heads"));
  c.encoder.gumbel_temperature = std::stod(get("encoder.gumbel_temperature"));
  c.decoder.out_kind = parse_out_kind(get("decoder.out"));
  c.decoder.combine = parse_combine_kind(get("decoder.combine"));
  c.decoder.hidden_dim = std::stoull(get("decoder.hidden_dim"));
  c.decoder.sigma_sq = std::stod(get("decoder.sigma_sq"));
  c.decoder.lambda_smooth = std::stod(get("decoder.lambda_smooth"));
  c.n_nodes = std::stoull(get("model.n_nodes"));
  c.n_features = std::stoull(get("model.n_features"));
  c.init_seed = std::stoull(get("model.init_seed"));
  c.validate();
  return c;
}

SeriesBatch SeriesBatch::stack(std::span<const Tensor* const> series) {
  if (series.empty()) throw std::invalid_argument("empty batch");
  const Shape& shape = series[0]->shape();
  if (shape.size() != 3) throw ShapeError("series must be T x N x M, got " + shape_string(shape));
  const std::size_t T = shape[0], N = shape[1], M = shape[2], B = series.size();
  SeriesBatch out;
  out.layout = {T, B, N};
  out.x = Tensor(Shape{T * B * N, M});
  for (std::size_t b = 0; b < B; ++b) {
    if (series[b]->shape() != shape) throw ShapeError("batch series have differing shapes");
    const Tensor& s = *series[b];
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) out.x.at((t * B + b) * N + n, m) = s[(t * N + n) * M + m];
  }
  return out;
}

SeriesBatch SeriesBatch::single(const Tensor& series) {
  const Tensor* one[] = {&series};
  return stack(one);
}

CordModel::CordModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng init(config_.init_seed);
  Rng enc_rng = init.substream(0, "init.encoder");
  Rng dec_rng = init.substream(0, "init.decoder");
  encoder_ = Encoder(params_, config_.encoder, config_.n_features, enc_rng);
  decoder_ = Decoder(params_, config_.decoder, config_.n_features, dec_rng);
}

void CordModel::check_series(const Tensor& series) const {
  if (series.rank() != 3 || series.dim(1) != config_.n_nodes || series.dim(2) != config_.n_features) {
    throw ShapeError("series shape " + shape_string(series.shape()) + " does not match model (N=" +
                     std::to_string(config_.n_nodes) + ", M=" + std::to_string(config_.n_features) + ")");
  }
  if (series.dim(0) < 2) throw ShapeError("series needs at least two steps");
}

LossTerms CordModel::loss(ad::Tape& tape, const SeriesBatch& batch, Rng* gumbel) const {
  const nn::Ctx ctx{tape, params_};
  const nn::Layout& layout = batch.layout;
  const auto pairs = nn::pair_index(layout.graphs(), layout.nodes);

  ad::Var x = tape.constant(batch.x);
  const Encoder::Output enc = encoder_(ctx, x, layout, pairs);
  ad::Var connected = ad::slice_cols(enc.probs, kConnectedEdgeType, kConnectedEdgeType + 1);
  ad::Var weights = connected;
  if (gumbel != nullptr) {
    ad::Var sample = encoder_.sample(enc, *gumbel, false);
    weights = ad::slice_cols(sample, kConnectedEdgeType, kConnectedEdgeType + 1);
  }
  ad::Var prediction = decoder_.teacher_forced(ctx, x, weights, layout);
  ad::Var target = ad::slice_rows(x, layout.rows_per_step(), layout.rows());

  ad::Var recon = reconstruction_loss(target, prediction, config_.decoder.sigma_sq);
  ad::Var smooth = smoothness_loss(connected, layout.steps, layout.batch, layout.pairs_per_graph());
  ad::Var total = ad::affine(ad::add(recon, ad::affine(smooth, config_.decoder.lambda_smooth, 0.0)),
                             1.0 / static_cast<double>(layout.batch), 0.0);
  return {total, recon.value().item(), smooth.value().item()};
}

Tensor CordModel::edge_posterior(const Tensor& series) const {
  check_series(series);
  ad::Tape tape;
  tape.set_grad_enabled(false);
  const nn::Ctx ctx{tape, params_};
  const SeriesBatch batch = SeriesBatch::single(series);
  const auto pairs = nn::pair_index(batch.layout.graphs(), batch.layout.nodes);
  const Encoder::Output enc = encoder_(ctx, tape.constant(batch.x), batch.layout, pairs);
  const std::size_t T = series.dim(0), N = series.dim(1), K = config_.encoder.n_edge_types;
  Tensor out(Shape{T, N, N, K}, 0.0);
  const Tensor& probs = enc.probs.value();
  std::size_t row = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        if (i == j) continue;
        for (std::size_t k = 0; k < K; ++k) out[((t * N + i) * N + j) * K + k] = probs.at(row, k);
        ++row;
      }
  return out;
}

Tensor CordModel::teacher_forced(const Tensor& series, const Tensor& edges) const {
  check_series(series);
  ad::Tape tape;
  tape.set_grad_enabled(false);
  const nn::Ctx ctx{tape, params_};
  const SeriesBatch batch = SeriesBatch::single(series);
  ad::Var pred = decoder_.teacher_forced(ctx, tape.constant(batch.x), tape.constant(edges_to_pairs(edges)),
                                         batch.layout);
  Tensor out = pred.value();
  out.reshape({series.dim(0) - 1, series.dim(1), series.dim(2)});
  return out;
}

Tensor CordModel::observed_hidden_states(const Tensor& series, const Tensor& edges) const {
  const std::size_t T = series.dim(0), N = series.dim(1);
  ad::Tape tape;
  tape.set_grad_enabled(false);
  const nn::Ctx ctx{tape, params_};
  const SeriesBatch batch = SeriesBatch::single(series);
  const auto pairs = nn::pair_index(T, N);
  ad::Var x = tape.constant(batch.x);
  ad::Var w = tape.constant(edges_to_pairs(edges));
  ad::Var embedded = decoder_.embed(ctx, x, w, pairs);
  ad::Var h = decoder_.initial_hidden(ctx, N);
  std::vector<ad::Var> states;
  for (std::size_t t = 0; t < T; ++t) {
    auto step = decoder_.output_step(ctx, ad::slice_rows(x, t * N, (t + 1) * N),
                                     ad::slice_rows(embedded, t * N, (t + 1) * N), h);
    h = step.hidden;
    states.push_back(h);
  }
  return ad::concat_rows(states).value();
}

Tensor CordModel::free_rollout(const Tensor& series, const Tensor& edges, std::size_t start, std::size_t k) const {
  check_series(series);
  const std::size_t T = series.dim(0), N = series.dim(1), M = series.dim(2);
  if (k < 1) throw std::invalid_argument("rollout window must be at least 1");
  if (start + 1 > T - 1) throw std::invalid_argument("rollout start leaves no step to predict");
  const std::size_t len = std::min(k, T - 1 - start);
  const bool recurrent = config_.decoder.out_kind == OutKind::rnn;
  const Tensor hidden_states = recurrent && start > 0 ? observed_hidden_states(series, edges) : Tensor();

  ad::Tape tape;
  tape.set_grad_enabled(false);
  const nn::Ctx ctx{tape, params_};
  const auto pairs = nn::pair_index(1, N);
  const Tensor pair_weights = edges_to_pairs(edges);
  const std::size_t P = N * (N - 1);

  Tensor x0(Shape{N, M});
  for (std::size_t i = 0; i < N * M; ++i) x0[i] = series[start * N * M + i];
  ad::Var x = tape.constant(std::move(x0));
  ad::Var h;
  if (recurrent) {
    if (start == 0) {
      h = decoder_.initial_hidden(ctx, N);
    } else {
      const std::size_t H = config_.decoder.hidden_dim;
      Tensor h0(Shape{N, H});
      for (std::size_t i = 0; i < N * H; ++i) h0[i] = hidden_states[(start - 1) * N * H + i];
      h = tape.constant(std::move(h0));
    }
  }
  Tensor out(Shape{len, N, M});
  for (std::size_t j = 0; j < len; ++j) {
    const std::size_t t = start + j;
    Tensor w(Shape{P, 1});
    for (std::size_t p = 0; p < P; ++p) w[p] = pair_weights[t * P + p];
    auto step = decoder_.decode_step(ctx, x, tape.constant(std::move(w)), h, pairs);
    const Tensor& pred = step.prediction.value();
    std::copy(pred.data().begin(), pred.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(j * N * M));
    x = step.prediction;
    h = step.hidden;
  }
  return out;
}

std::vector<double> CordModel::rollout_errors(const Tensor& series, const Tensor& edges, std::size_t k) const {
  check_series(series);
  if (k < 1) throw std::invalid_argument("rollout window must be at least 1");
  const std::size_t T = series.dim(0), N = series.dim(1), M = series.dim(2);
  const std::size_t P = N * (N - 1);
  const std::size_t starts = T - 1;
  const bool recurrent = config_.decoder.out_kind == OutKind::rnn;

  ad::Tape tape;
  tape.set_grad_enabled(false);
  const nn::Ctx ctx{tape, params_};
  const SeriesBatch batch = SeriesBatch::single(series);
  ad::Var x_all = tape.constant(batch.x);
  ad::Var w_all = tape.constant(edges_to_pairs(edges));

  // Every start s = 0..T-2 rolls out in parallel; at step j the starts that
  // still have a target (s + j + 1 <= T - 1) form the prefix 0..T-2-j.
  ad::Var h;
  if (recurrent) {
    const Tensor states = observed_hidden_states(series, edges);
    const std::size_t H = config_.decoder.hidden_dim;
    Tensor h0(Shape{starts * N, H}, 0.0);
    for (std::size_t i = N * H; i < starts * N * H; ++i) h0[i] = states[i - N * H];
    h = tape.constant(std::move(h0));
  }
  std::vector<double> sq_error(starts, 0.0);
  std::vector<std::size_t> counts(starts, 0);
  ad::Var x = ad::slice_rows(x_all, 0, starts * N);
  for (std::size_t j = 0; j < k && j < starts; ++j) {
    const std::size_t active = starts - j;
    const auto pairs = nn::pair_index(active, N);
    if (j > 0) {
      x = ad::slice_rows(x, 0, active * N);
      if (recurrent) h = ad::slice_rows(h, 0, active * N);
    }
    ad::Var w = ad::slice_rows(w_all, j * P, (j + active) * P);
    auto step = decoder_.decode_step(ctx, x, w, h, pairs);
    const Tensor& pred = step.prediction.value();
    const Tensor& obs = x_all.value();
    for (std::size_t s = 0; s < active; ++s) {
      const std::size_t target_row = (s + j + 1) * N;
      double acc = 0.0;
      for (std::size_t i = 0; i < N * M; ++i) {
        const double d = pred[s * N * M + i] - obs[target_row * M + i];
        acc += d * d;
      }
      sq_error[s] += acc;
      counts[s] += N * M;
    }
    x = step.prediction;
    h = step.hidden;
  }
  std::vector<double> out(starts);
  for (std::size_t s = 0; s < starts; ++s) out[s] = sq_error[s] / static_cast<double>(counts[s]);
  return out;
}

Tensor connected_probabilities(const Tensor& posterior) {
  if (posterior.rank() != 4) throw ShapeError("posterior must be T x N x N x K");
  const std::size_t T = posterior.dim(0), N = posterior.dim(1), K = posterior.dim(3);
  Tensor out(Shape{T, N, N}, 0.0);
  for (std::size_t i = 0; i < T * N * N; ++i) out[i] = posterior[i * K + kConnectedEdgeType];
  return out;
}

Tensor symmetrize(const Tensor& edges) {
  if (edges.rank() != 3 || edges.dim(1) != edges.dim(2)) throw ShapeError("edges must be T x N x N");
  const std::size_t T = edges.dim(0), N = edges.dim(1);
  Tensor out(edges.shape(), 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        if (i == j) continue;
        out[(t * N + i) * N + j] = 0.5 * (edges[(t * N + i) * N + j] + edges[(t * N + j) * N + i]);
      }
  return out;
}

Tensor edges_to_pairs(const Tensor& edges) {
  if (edges.rank() != 3 || edges.dim(1) != edges.dim(2)) throw ShapeError("edges must be T x N x N");
  const std::size_t T = edges.dim(0), N = edges.dim(1);
  Tensor out(Shape{T * N * (N - 1), 1});
  std::size_t row = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        if (i != j) out[row++] = edges[(t * N + i) * N + j];
  return out;
}

}  // namespace cordcpd
