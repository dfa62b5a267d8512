#include "cordcpd/tensor_io.hpp"

#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace cordcpd {

namespace {
constexpr char kTensorMagic[5] = "CPDT";
constexpr std::uint32_t kTensorVersion = 1;
}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
  detail::write_magic(out, kTensorMagic);
  detail::write_le<std::uint32_t>(out, kTensorVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("tensor dimension too large");
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.write(reinterpret_cast<const char*>(tensor.data().data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in, const std::string& source) {
  const std::string what = "tensor file " + source;
  detail::expect_magic(in, kTensorMagic, what);
  const auto version = detail::read_le<std::uint32_t>(in, what + " header");
  if (version != kTensorVersion) throw FormatError(what + ": unsupported format version " + std::to_string(version));
  const auto rank = detail::read_le<std::uint32_t>(in, what + " header");
  if (rank > 16) throw FormatError(what + ": implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = detail::read_le<std::uint32_t>(in, what + " header");
    if (d == 0) throw FormatError(what + ": zero-sized dimension");
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double))) {
    throw FormatError(what + ": truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes after payload");
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open tensor file for writing: " + path.string());
  write_tensor(out, tensor);
  if (!out) throw std::runtime_error("failed writing tensor file: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tensor file: " + path.string());
  return read_tensor(in, path.string());
}

}  // namespace cordcpd
