#include "cordcpd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cordcpd {

std::string to_string(ChangeType type) {
  switch (type) {
    case ChangeType::location: return "location";
    case ChangeType::speed: return "speed";
    case ChangeType::connection: return "connection";
  }
  return "unknown";
}

ChangeType parse_change_type(const std::string& text) {
  if (text == "location") return ChangeType::location;
  if (text == "speed") return ChangeType::speed;
  if (text == "connection") return ChangeType::connection;
  throw std::invalid_argument("unknown change type '" + text + "' (expected location, speed or connection)");
}

void SimConfig::validate() const {
  if (n_particles < 2) throw std::invalid_argument("simulation needs at least two particles");
  if (t_steps < 3) throw std::invalid_argument("simulation needs at least three recorded steps");
  if (!(fine_dt > 0.0)) throw std::invalid_argument("fine_dt must be positive");
  if (sample_every == 0) throw std::invalid_argument("sample_every must be positive");
  if (!(box_half_width > 0.0)) throw std::invalid_argument("box_half_width must be positive");
  if (connection_prob < 0.0 || connection_prob > 1.0) throw std::invalid_argument("connection_prob must be in [0,1]");
  if (change_window_lo < 2 || change_window_hi > t_steps - 1 || change_window_lo > change_window_hi) {
    throw std::invalid_argument("change window must lie within [2, t_steps-1]");
  }
  if (loc_noise_sigma < 0.0 || speed_noise_sigma < 0.0 || init_position_sigma < 0.0) {
    throw std::invalid_argument("noise scales must be non-negative");
  }
  const std::size_t pairs = n_particles * (n_particles - 1) / 2;
  if (min_connection_flips > pairs) throw std::invalid_argument("min_connection_flips exceeds the number of pairs");
}

void ConnectionMatrix::set(std::size_t i, std::size_t j, bool connected) {
  if (i == j) throw std::invalid_argument("connection matrix diagonal is fixed at zero");
  bits_[i * n_ + j] = connected ? 1 : 0;
  bits_[j * n_ + i] = connected ? 1 : 0;
}

std::size_t ConnectionMatrix::edge_count() const noexcept {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j) count += bits_[i * n_ + j];
  return count;
}

std::size_t ConnectionMatrix::hamming(const ConnectionMatrix& other) const {
  if (other.n_ != n_) throw std::invalid_argument("connection matrices differ in size");
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j) count += bits_[i * n_ + j] != other.bits_[i * n_ + j];
  return count;
}

Tensor TrajectorySeries::adjacency() const {
  const std::size_t T = values.dim(0), N = values.dim(1);
  Tensor out(Shape{T, N, N}, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const ConnectionMatrix& c = t < change_step ? connections_before : connections_after;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) out[(t * N + i) * N + j] = c(i, j) ? 1.0 : 0.0;
  }
  return out;
}

ConnectionMatrix sample_connections(Rng& rng, const SimConfig& cfg) {
  ConnectionMatrix conn(cfg.n_particles);
  for (std::size_t i = 0; i < cfg.n_particles; ++i)
    for (std::size_t j = i + 1; j < cfg.n_particles; ++j) conn.set(i, j, rng.bernoulli(cfg.connection_prob));
  return conn;
}

ParticleState sample_initial_state(Rng& rng, const SimConfig& cfg) {
  ParticleState s;
  s.pos.resize(2 * cfg.n_particles);
  s.vel.resize(2 * cfg.n_particles);
  const double L = cfg.box_half_width;
  for (double& p : s.pos) p = std::clamp(rng.normal(0.0, cfg.init_position_sigma), -L, L);
  for (std::size_t i = 0; i < cfg.n_particles; ++i) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    s.vel[2 * i] = cfg.init_speed * std::cos(angle);
    s.vel[2 * i + 1] = cfg.init_speed * std::sin(angle);
  }
  return s;
}

namespace {

void spring_forces(const ParticleState& s, const ConnectionMatrix& conn, double k, std::vector<double>& force) {
  const std::size_t n = s.particles();
  std::fill(force.begin(), force.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!conn(i, j)) continue;
      for (std::size_t d = 0; d < 2; ++d) {
        const double f = -k * (s.pos[2 * i + d] - s.pos[2 * j + d]);
        force[2 * i + d] += f;
        force[2 * j + d] -= f;
      }
    }
  }
}

void reflect(ParticleState& s, double L) {
  for (std::size_t c = 0; c < s.pos.size(); ++c) {
    double& p = s.pos[c];
    // A displacement of more than a box width per step is not physical here,
    // but keep folding until inside.
    while (p > L || p < -L) {
      if (p > L) p = 2.0 * L - p;
      else p = -2.0 * L - p;
      s.vel[c] = -s.vel[c];
    }
  }
}

void check_state(const ParticleState& s) {
  for (double v : s.pos)
    if (!std::isfinite(v)) throw NumericError("simulation diverged: non-finite position");
  for (double v : s.vel)
    if (!std::isfinite(v)) throw NumericError("simulation diverged: non-finite velocity");
}

void write_frame(const ParticleState& s, Tensor& frames, std::size_t t) {
  const std::size_t n = s.particles();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = frames.data().data() + (t * n + i) * 4;
    row[0] = s.pos[2 * i];
    row[1] = s.pos[2 * i + 1];
    row[2] = s.vel[2 * i];
    row[3] = s.vel[2 * i + 1];
  }
}

}  // namespace

ParticleState advance(ParticleState s, const ConnectionMatrix& conn, std::size_t fine_steps, const SimConfig& cfg) {
  check_state(s);
  const double dt = cfg.fine_dt;
  std::vector<double> force(s.pos.size());
  spring_forces(s, conn, cfg.spring_constant, force);
  for (std::size_t step = 0; step < fine_steps; ++step) {
    for (std::size_t c = 0; c < s.pos.size(); ++c) {
      s.vel[c] += 0.5 * dt * force[c];
      s.pos[c] += dt * s.vel[c];
    }
    reflect(s, cfg.box_half_width);
    spring_forces(s, conn, cfg.spring_constant, force);
    for (std::size_t c = 0; c < s.pos.size(); ++c) s.vel[c] += 0.5 * dt * force[c];
  }
  check_state(s);
  return s;
}

Segment simulate_segment(const ParticleState& state, const ConnectionMatrix& conn, std::size_t n_recorded,
                         const SimConfig& cfg) {
  Segment seg;
  seg.frames = Tensor(Shape{n_recorded, state.particles(), 4});
  ParticleState s = state;
  for (std::size_t r = 0; r < n_recorded; ++r) {
    s = advance(std::move(s), conn, cfg.sample_every, cfg);
    write_frame(s, seg.frames, r);
  }
  seg.final_state = std::move(s);
  return seg;
}

InjectedChange inject_change(const ParticleState& state, const ConnectionMatrix& conn, ChangeType type, Rng& rng,
                             const SimConfig& cfg) {
  InjectedChange out{state, conn};
  switch (type) {
    case ChangeType::location:
      for (double& p : out.state.pos) p += rng.normal(0.0, cfg.loc_noise_sigma);
      reflect(out.state, cfg.box_half_width);
      break;
    case ChangeType::speed:
      for (double& v : out.state.vel) v += rng.normal(0.0, cfg.speed_noise_sigma);
      break;
    case ChangeType::connection: {
      for (std::size_t attempt = 0; attempt < cfg.connection_retry_budget; ++attempt) {
        ConnectionMatrix candidate = sample_connections(rng, cfg);
        if (candidate.hamming(conn) >= cfg.min_connection_flips) {
          out.connections = std::move(candidate);
          return out;
        }
      }
      throw std::runtime_error("connection resampling exhausted its retry budget of " +
                               std::to_string(cfg.connection_retry_budget));
    }
  }
  return out;
}

TrajectorySeries generate_series(ChangeType type, const Rng& rng, const SimConfig& cfg, bool apply_change) {
  cfg.validate();
  Rng init_rng = rng.substream(0, "initial_state");
  Rng conn_rng = rng.substream(0, "connections");
  Rng step_rng = rng.substream(0, "change_step");
  Rng change_rng = rng.substream(0, "change");

  TrajectorySeries series;
  series.change_type = type;
  series.seed = rng.key();
  series.connections_before = sample_connections(conn_rng, cfg);
  series.change_step = static_cast<std::size_t>(step_rng.uniform_int(static_cast<std::int64_t>(cfg.change_window_lo),
                                                                     static_cast<std::int64_t>(cfg.change_window_hi)));
  const std::size_t T = cfg.t_steps, N = cfg.n_particles, cs = series.change_step;
  series.values = Tensor(Shape{T, N, 4});

  ParticleState state = sample_initial_state(init_rng, cfg);
  write_frame(state, series.values, 0);
  Segment before = simulate_segment(state, series.connections_before, cs - 1, cfg);
  std::copy(before.frames.data().begin(), before.frames.data().end(),
            series.values.data().begin() + static_cast<std::ptrdiff_t>(N * 4));
  state = advance(before.final_state, series.connections_before, cfg.sample_every, cfg);

  InjectedChange change = inject_change(state, series.connections_before, type, change_rng, cfg);
  if (apply_change) {
    state = change.state;
    series.connections_after = change.connections;
  } else {
    series.connections_after = series.connections_before;
  }
  write_frame(state, series.values, cs);
  Segment after = simulate_segment(state, series.connections_after, T - 1 - cs, cfg);
  std::copy(after.frames.data().begin(), after.frames.data().end(),
            series.values.data().begin() + static_cast<std::ptrdiff_t>((cs + 1) * N * 4));
  return series;
}

double kinetic_energy(const ParticleState& state) {
  double e = 0.0;
  for (double v : state.vel) e += 0.5 * v * v;
  return e;
}

double spring_energy(const ParticleState& state, const ConnectionMatrix& conn, double spring_constant) {
  double e = 0.0;
  const std::size_t n = state.particles();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!conn(i, j)) continue;
      const double dx = state.pos[2 * i] - state.pos[2 * j];
      const double dy = state.pos[2 * i + 1] - state.pos[2 * j + 1];
      e += 0.5 * spring_constant * (dx * dx + dy * dy);
    }
  return e;
}

ParticleState frame_state(const Tensor& frames, std::size_t t) {
  const std::size_t n = frames.dim(1);
  ParticleState s;
  s.pos.resize(2 * n);
  s.vel.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = frames.data().data() + (t * n + i) * 4;
    s.pos[2 * i] = row[0];
    s.pos[2 * i + 1] = row[1];
    s.vel[2 * i] = row[2];
    s.vel[2 * i + 1] = row[3];
  }
  return s;
}

}  // namespace cordcpd
