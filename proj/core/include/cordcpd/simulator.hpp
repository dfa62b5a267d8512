#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cordcpd/rng.hpp"
#include "cordcpd/tensor.hpp"

namespace cordcpd {

enum class ChangeType { location, speed, connection };

std::string to_string(ChangeType type);
ChangeType parse_change_type(const std::string& text);
inline constexpr ChangeType kAllChangeTypes[] = {ChangeType::location, ChangeType::speed, ChangeType::connection};

struct SimConfig {
  std::size_t n_particles = 5;
  std::size_t t_steps = 100;
  double box_half_width = 5.0;
  double spring_constant = 0.1;
  double fine_dt = 0.001;
  std::size_t sample_every = 100;
  double connection_prob = 0.5;
  std::size_t change_window_lo = 25;
  std::size_t change_window_hi = 75;
  double loc_noise_sigma = 0.1;
  double speed_noise_sigma = 0.02;
  std::size_t min_connection_flips = 5;
  double init_position_sigma = 0.5;
  double init_speed = 0.5;
  std::size_t connection_retry_budget = 1000;

  void validate() const;
};

/// Symmetric 0/1 spring matrix with zero diagonal.
class ConnectionMatrix {
 public:
  ConnectionMatrix() = default;
  explicit ConnectionMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  bool operator()(std::size_t i, std::size_t j) const noexcept { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool connected);
  std::size_t edge_count() const noexcept;
  /// Number of unordered pairs whose state differs.
  std::size_t hamming(const ConnectionMatrix& other) const;

  friend bool operator==(const ConnectionMatrix&, const ConnectionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Positions and velocities, 2 coordinates per particle, unit masses.
struct ParticleState {
  std::vector<double> pos;
  std::vector<double> vel;

  std::size_t particles() const noexcept { return pos.size() / 2; }
};

struct Segment {
  Tensor frames;  // n_recorded x N x 4 (l_x, l_y, v_x, v_y)
  ParticleState final_state;
};

struct TrajectorySeries {
  Tensor values;  // T x N x 4
  std::size_t change_step = 0;
  ChangeType change_type = ChangeType::location;
  ConnectionMatrix connections_before;
  ConnectionMatrix connections_after;
  std::uint64_t seed = 0;

  /// Ground-truth A^t: before for t < change_step, after from change_step on.
  Tensor adjacency() const;
};

ConnectionMatrix sample_connections(Rng& rng, const SimConfig& cfg);
ParticleState sample_initial_state(Rng& rng, const SimConfig& cfg);

/// Advances `fine_steps` velocity-Verlet steps with elastic wall reflection.
ParticleState advance(ParticleState state, const ConnectionMatrix& conn, std::size_t fine_steps,
                      const SimConfig& cfg);

/// Records one frame every `sample_every` fine steps, n_recorded times; the
/// starting state itself is not recorded.
Segment simulate_segment(const ParticleState& state, const ConnectionMatrix& conn, std::size_t n_recorded,
                         const SimConfig& cfg);

struct InjectedChange {
  ParticleState state;
  ConnectionMatrix connections;
};

/// Location/speed: i.i.d. Gaussian perturbation of every particle's positions
/// or velocities. Connection: redraw until at least min_connection_flips pairs
/// differ.
InjectedChange inject_change(const ParticleState& state, const ConnectionMatrix& conn, ChangeType type, Rng& rng,
                             const SimConfig& cfg);

/// One series with one change-point. With `apply_change` false the same random
/// draws produce the no-change counterfactual.
TrajectorySeries generate_series(ChangeType type, const Rng& rng, const SimConfig& cfg, bool apply_change = true);

double kinetic_energy(const ParticleState& state);
double spring_energy(const ParticleState& state, const ConnectionMatrix& conn, double spring_constant);
ParticleState frame_state(const Tensor& frames, std::size_t t);

}  // namespace cordcpd
