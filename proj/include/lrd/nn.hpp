#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "lrd/tensor.hpp"

namespace lrd::nn {

/// NCHW activations.
struct FeatureMap {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  FeatureMap(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::vector<double> values);

  [[nodiscard]] std::size_t size() const { return batch * channels * height * width; }
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data[((n * channels + c) * height + y) * width + x];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data[((n * channels + c) * height + y) * width + x];
  }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Direct cross-correlation. Weight dims are (C / groups) x S x k x k: input
/// channel within its group, then output channel; output channel s belongs to
/// group s / (S / groups).
FeatureMap conv2d(const FeatureMap& x, const Tensor4& w, const ConvParams& params = {},
                  const std::optional<Vector>& bias = std::nullopt);

/// x viewed as batch x (C*H*W) times W (C*H*W x S), plus bias. Output is batch x S x 1 x 1.
FeatureMap linear(const FeatureMap& x, const Matrix& w, const std::optional<Vector>& bias = std::nullopt);

FeatureMap relu(FeatureMap x);

struct ConvOp {
  Tensor4 weight;
  ConvParams params;
  std::optional<Vector> bias;
};
struct LinearOp {
  Matrix weight;
  std::optional<Vector> bias;
};
struct ReluOp {};

using Op = std::variant<ConvOp, LinearOp, ReluOp>;
using Stack = std::vector<Op>;

/// Raised by run_stack with the index of the first incompatible op.
class StackError : public DimensionError {
 public:
  StackError(std::size_t index, const std::string& what);
  [[nodiscard]] std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Applies ops left to right. An empty stack is the identity.
FeatureMap run_stack(const Stack& stack, FeatureMap x);

/// ||a - b|| / max(||b||, tiny).
double relative_difference(const FeatureMap& a, const FeatureMap& b);

}  // namespace lrd::nn
