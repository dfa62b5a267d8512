#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cordcpd/rng.hpp"
#include "cordcpd/tensor.hpp"

namespace cordcpd {

struct ParamSlot {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// All learnable weights of a model in one flat vector, addressable by slot.
class ParamStore {
 public:
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
  std::size_t add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
  std::size_t add_constant(std::string name, Shape shape, double value);

  std::size_t count() const noexcept { return slots_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  const ParamSlot& slot(std::size_t id) const { return slots_.at(id); }
  std::size_t find(const std::string& name) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values(std::size_t id);
  std::span<const double> values(std::size_t id) const;
  Tensor tensor(std::size_t id) const;

  void assign(std::span<const double> flat);

 private:
  std::vector<ParamSlot> slots_;
  std::vector<double> values_;
};

}  // namespace cordcpd
