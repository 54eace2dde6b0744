#include "lrd/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace lrd {

static_assert(std::endian::native == std::endian::little, "tensor files are written in host order");

namespace {

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

}  // namespace

void write_tensor(std::ostream& os, const Tensor4& t) {
  const Dims4& d = t.dims();
  const std::array<std::uint32_t, 4> header{static_cast<std::uint32_t>(d.in), static_cast<std::uint32_t>(d.out),
                                            static_cast<std::uint32_t>(d.kh), static_cast<std::uint32_t>(d.kw)};
  os.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  const auto data = t.data();
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  if (!os) throw FormatError("tensor write failed");
}

Tensor4 read_tensor(std::istream& is) {
  std::array<std::uint32_t, 4> header{};
  is.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(header))) {
    throw FormatError("truncated header: expected 16 bytes, got " + std::to_string(is.gcount()));
  }
  const std::uint64_t count = std::uint64_t{header[0]} * header[1] * header[2] * header[3];
  if (count > kMaxElements) throw FormatError("implausible dims in header");
  std::vector<double> data(count);
  const auto bytes = static_cast<std::streamsize>(count * sizeof(double));
  is.read(reinterpret_cast<char*>(data.data()), bytes);
  if (is.gcount() != bytes) {
    throw FormatError("truncated data: expected " + std::to_string(bytes) + " bytes, got " +
                      std::to_string(is.gcount()));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after tensor data");
  try {
    return Tensor4(Dims4{header[0], header[1], header[2], header[3]}, std::move(data));
  } catch (const NumericalError&) {
    throw FormatError("non-finite value in tensor data");
  }
}

void save_tensor(const std::filesystem::path& path, const Tensor4& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor4 load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor(is);
}

nlohmann::ordered_json tensor_to_json(const Tensor4& t) {
  const Dims4& d = t.dims();
  nlohmann::ordered_json j;
  j["dims"] = {d.in, d.out, d.kh, d.kw};
  j["data"] = std::vector<double>(t.data().begin(), t.data().end());
  return j;
}

Tensor4 tensor_from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw FormatError("tensor json: dims must have 4 entries");
    return Tensor4(Dims4{dims[0], dims[1], dims[2], dims[3]}, j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tensor json: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("tensor json: ") + e.what());
  }
}

}  // namespace lrd
