#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "cordcpd/tensor.hpp"

namespace cordcpd {

/// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "CPDT" magic, u32 version, u32 rank, u32 dims, little-endian f64 payload.
void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in, const std::string& source = "stream");

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace cordcpd
