#include "cordcpd/params.hpp"

#include <cmath>
#include <stdexcept>

namespace cordcpd {

std::size_t ParamStore::add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  const std::size_t id = add_constant(std::move(name), std::move(shape), 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (double& v : values(id)) v = rng.uniform(-bound, bound);
  return id;
}

std::size_t ParamStore::add_constant(std::string name, Shape shape, double value) {
  ParamSlot slot;
  slot.name = std::move(name);
  slot.size = shape_size(shape);
  slot.shape = std::move(shape);
  slot.offset = values_.size();
  values_.resize(values_.size() + slot.size, value);
  slots_.push_back(std::move(slot));
  return slots_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::span<double> ParamStore::values(std::size_t id) {
  const auto& s = slots_.at(id);
  return std::span<double>(values_).subspan(s.offset, s.size);
}

std::span<const double> ParamStore::values(std::size_t id) const {
  const auto& s = slots_.at(id);
  return std::span<const double>(values_).subspan(s.offset, s.size);
}

Tensor ParamStore::tensor(std::size_t id) const {
  const auto v = values(id);
  return Tensor(slots_.at(id).shape, std::vector<double>(v.begin(), v.end()));
}

void ParamStore::assign(std::span<const double> flat) {
  if (flat.size() != values_.size()) {
    throw ShapeError("parameter vector length " + std::to_string(flat.size()) + ", expected " +
                     std::to_string(values_.size()));
  }
  std::copy(flat.begin(), flat.end(), values_.begin());
}

}  // namespace cordcpd
