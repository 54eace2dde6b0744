#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "lrd/layer.hpp"
#include "lrd/nn.hpp"
#include "lrd/tensor.hpp"

namespace lrd {

inline constexpr std::uint64_t kDefaultSeed = 0x5eed'0000'1234'abcdULL;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Per-layer stream: seed mixed with the layer name, so layers are independent
/// of iteration order.
std::mt19937_64 layer_rng(std::uint64_t seed, std::string_view name);

/// Uniform on [lo, hi) from the top 53 bits of one draw (identical on every
/// standard library, unlike std::uniform_real_distribution).
double uniform(std::mt19937_64& rng, double lo, double hi);

/// Kaiming-uniform weights, bound sqrt(6 / fan_in), dims (C / groups) x S x k x k.
Tensor4 seeded_weights(const LayerSpec& spec, std::uint64_t seed);
/// Bias with bound 1 / sqrt(fan_in), or nullopt when the layer has none.
std::optional<Vector> seeded_bias(const LayerSpec& spec, std::uint64_t seed);

nn::FeatureMap random_input(const LayerSpec& spec, std::size_t batch, std::uint64_t seed);
Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols);
Tensor4 random_tensor(std::mt19937_64& rng, const Dims4& dims);

}  // namespace lrd
