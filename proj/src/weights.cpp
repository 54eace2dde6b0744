#include "lrd/weights.hpp"

#include <cmath>

#include "lrd/stacks.hpp"

namespace lrd {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::mt19937_64 layer_rng(std::uint64_t seed, std::string_view name) { return std::mt19937_64(seed ^ fnv1a(name)); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

Tensor4 seeded_weights(const LayerSpec& spec, std::uint64_t seed) {
  auto rng = layer_rng(seed, spec.name);
  const std::size_t fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor4 t(Dims4{spec.in_channels / spec.groups, spec.out_channels, spec.kernel, spec.kernel});
  for (double& x : t.data()) x = uniform(rng, -bound, bound);
  return t;
}

std::optional<Vector> seeded_bias(const LayerSpec& spec, std::uint64_t seed) {
  if (!spec.has_bias) return std::nullopt;
  auto rng = layer_rng(seed, spec.name + ".bias");
  const std::size_t fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Vector b(static_cast<Eigen::Index>(spec.out_channels));
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = uniform(rng, -bound, bound);
  return b;
}

nn::FeatureMap random_input(const LayerSpec& spec, std::size_t batch, std::uint64_t seed) {
  auto rng = layer_rng(seed, spec.name + ".input");
  nn::FeatureMap x = input_for(spec, batch);
  for (double& v : x.data) v = uniform(rng, -1.0, 1.0);
  return x;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  return m;
}

Tensor4 random_tensor(std::mt19937_64& rng, const Dims4& dims) {
  Tensor4 t(dims);
  for (double& x : t.data()) x = uniform(rng, -1.0, 1.0);
  return t;
}

}  // namespace lrd
