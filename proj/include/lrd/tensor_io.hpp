#pragma once

#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "lrd/tensor.hpp"

namespace lrd {

// Binary layout: four little-endian u32 dims (C, S, h, w) followed by
// C*S*h*w little-endian f64 values in row-major order.

void write_tensor(std::ostream& os, const Tensor4& t);
Tensor4 read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor4& t);
Tensor4 load_tensor(const std::filesystem::path& path);

/// Debug form {"dims": [C, S, h, w], "data": [...]}.
nlohmann::ordered_json tensor_to_json(const Tensor4& t);
Tensor4 tensor_from_json(const nlohmann::json& j);

}  // namespace lrd
