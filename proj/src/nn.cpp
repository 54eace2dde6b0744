#include "lrd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lrd::nn {

FeatureMap::FeatureMap(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
    : batch(n), channels(c), height(h), width(w), data(n * c * h * w, 0.0) {}

FeatureMap::FeatureMap(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::vector<double> values)
    : batch(n), channels(c), height(h), width(w), data(std::move(values)) {
  if (data.size() != n * c * h * w) throw DimensionError("feature map data length does not match dims");
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericalError("feature map: non-finite entry");
  }
}

FeatureMap conv2d(const FeatureMap& x, const Tensor4& w, const ConvParams& p, const std::optional<Vector>& bias) {
  const Dims4& d = w.dims();
  if (p.groups < 1 || p.stride < 1) throw DimensionError("conv2d: stride and groups must be >= 1");
  if (d.out % p.groups != 0) throw DimensionError("conv2d: groups must divide output channels");
  if (d.in * p.groups != x.channels) {
    throw DimensionError("conv2d: input has " + std::to_string(x.channels) + " channels, weight expects " +
                         std::to_string(d.in * p.groups));
  }
  if (x.height + 2 * p.padding < d.kh || x.width + 2 * p.padding < d.kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  if (bias && static_cast<std::size_t>(bias->size()) != d.out) throw DimensionError("conv2d: bias length mismatch");

  const std::size_t ho = (x.height + 2 * p.padding - d.kh) / p.stride + 1;
  const std::size_t wo = (x.width + 2 * p.padding - d.kw) / p.stride + 1;
  const std::size_t per_group_out = d.out / p.groups;
  FeatureMap y(x.batch, d.out, ho, wo);

  // Valid output range for a kernel offset along one axis.
  auto valid = [&](std::size_t offset, std::size_t in_size, std::size_t out_size) {
    // in = out * stride + offset - padding must land in [0, in_size).
    std::size_t lo = 0;
    if (offset < p.padding) lo = (p.padding - offset + p.stride - 1) / p.stride;
    std::size_t hi = 0;  // exclusive
    if (in_size + p.padding > offset) hi = std::min(out_size, (in_size + p.padding - offset - 1) / p.stride + 1);
    return std::pair{lo, std::max(lo, hi)};
  };

  for (std::size_t n = 0; n < x.batch; ++n) {
    for (std::size_t s = 0; s < d.out; ++s) {
      const std::size_t g = s / per_group_out;
      double* out = &y.data[((n * d.out + s) * ho) * wo];
      if (bias) std::fill(out, out + ho * wo, (*bias)(static_cast<Eigen::Index>(s)));
      for (std::size_t cl = 0; cl < d.in; ++cl) {
        const std::size_t c = g * d.in + cl;
        const double* in = &x.data[((n * x.channels + c) * x.height) * x.width];
        for (std::size_t i = 0; i < d.kh; ++i) {
          const auto [ylo, yhi] = valid(i, x.height, ho);
          for (std::size_t j = 0; j < d.kw; ++j) {
            const double wv = w(cl, s, i, j);
            const auto [xlo, xhi] = valid(j, x.width, wo);
            for (std::size_t oy = ylo; oy < yhi; ++oy) {
              const double* row = in + (oy * p.stride + i - p.padding) * x.width;
              double* orow = out + oy * wo;
              for (std::size_t ox = xlo; ox < xhi; ++ox) orow[ox] += wv * row[ox * p.stride + j - p.padding];
            }
          }
        }
      }
    }
  }
  return y;
}

FeatureMap linear(const FeatureMap& x, const Matrix& w, const std::optional<Vector>& bias) {
  const std::size_t inner = x.channels * x.height * x.width;
  if (static_cast<std::size_t>(w.rows()) != inner) {
    throw DimensionError("linear: input has " + std::to_string(inner) + " features, weight expects " +
                         std::to_string(w.rows()));
  }
  if (bias && bias->size() != w.cols()) throw DimensionError("linear: bias length mismatch");
  const auto outs = static_cast<std::size_t>(w.cols());
  FeatureMap y(x.batch, outs, 1, 1);
  for (std::size_t n = 0; n < x.batch; ++n) {
    const double* in = &x.data[n * inner];
    for (std::size_t s = 0; s < outs; ++s) {
      double acc = bias ? (*bias)(static_cast<Eigen::Index>(s)) : 0.0;
      for (std::size_t c = 0; c < inner; ++c) acc += in[c] * w(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s));
      y.data[n * outs + s] = acc;
    }
  }
  return y;
}

FeatureMap relu(FeatureMap x) {
  for (double& v : x.data) v = std::max(v, 0.0);
  return x;
}

StackError::StackError(std::size_t index, const std::string& what)
    : DimensionError("stack op " + std::to_string(index) + ": " + what), index_(index) {}

FeatureMap run_stack(const Stack& stack, FeatureMap x) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    try {
      const Op& op = stack[i];
      if (const auto* c = std::get_if<ConvOp>(&op)) {
        x = conv2d(x, c->weight, c->params, c->bias);
      } else if (const auto* l = std::get_if<LinearOp>(&op)) {
        x = linear(x, l->weight, l->bias);
      } else {
        x = relu(std::move(x));
      }
    } catch (const DimensionError& e) {
      throw StackError(i, e.what());
    }
  }
  return x;
}

double relative_difference(const FeatureMap& a, const FeatureMap& b) {
  if (a.data.size() != b.data.size()) throw DimensionError("relative_difference: size mismatch");
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    diff += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    ref += b.data[i] * b.data[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

}  // namespace lrd::nn
