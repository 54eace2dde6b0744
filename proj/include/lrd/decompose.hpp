#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "lrd/layer.hpp"
#include "lrd/tensor.hpp"

namespace lrd {

/// W ~ w0 * w1 with w0 = U' sqrt(S'), w1 = sqrt(S') V'^T.
struct SvdFactors {
  Matrix w0;  // C x R
  Matrix w1;  // R x S

  [[nodiscard]] std::size_t rank() const { return static_cast<std::size_t>(w0.cols()); }
  [[nodiscard]] std::size_t param_count() const { return static_cast<std::size_t>(w0.size() + w1.size()); }
};

/// Tucker-2 over the channel modes: a 1x1 conv (C -> r1), a k x k core
/// (r1 -> r2), and a 1x1 conv (r2 -> S).
struct TuckerFactors {
  Matrix first;  // C x r1
  Tensor4 core;  // r1 x r2 x k x k
  Matrix last;   // r2 x S

  [[nodiscard]] std::size_t r1() const { return static_cast<std::size_t>(first.cols()); }
  [[nodiscard]] std::size_t r2() const { return static_cast<std::size_t>(last.rows()); }
  [[nodiscard]] std::size_t param_count() const {
    return static_cast<std::size_t>(first.size() + last.size()) + core.dims().size();
  }
};

/// The layer is kept as is.
struct Passthrough {
  Tensor4 weights;
};

using Factors = std::variant<Passthrough, SvdFactors, TuckerFactors>;

struct DecomposedLayer {
  LayerSpec original;
  Factors factors;
  std::vector<bool> frozen;     // one flag per factor layer
  std::optional<Vector> bias;   // rides on the last factor layer

  [[nodiscard]] std::size_t factor_layer_count() const;
};

SvdFactors decompose_svd(const Matrix& w, std::size_t rank);

struct TuckerOptions {
  std::size_t hooi_sweeps = 0;  // at most 10
  double hooi_tolerance = 1e-9;
};

/// Truncated HOSVD of the two channel modes, optionally refined by HOOI sweeps.
/// Kernel axes are never truncated.
TuckerFactors decompose_tucker2(const Tensor4& w, std::size_t r1, std::size_t r2, const TuckerOptions& options = {});

/// Least-squares core for orthonormal factors: W x_C first^T x_S last.
Tensor4 project_core(const Tensor4& w, const Matrix& first, const Matrix& last);

/// HOSVD subspaces computed once at the largest ranks of interest; truncations
/// at smaller ranks are nested.
class Tucker2Basis {
 public:
  Tucker2Basis(Tensor4 w, std::size_t max_r1, std::size_t max_r2);

  [[nodiscard]] TuckerFactors truncate(std::size_t r1, std::size_t r2) const;
  [[nodiscard]] const Tensor4& weights() const { return weights_; }

 private:
  Tensor4 weights_;
  Matrix in_basis_;   // C x max_r1
  Matrix out_basis_;  // S x max_r2
};

Matrix reconstruct(const SvdFactors& f);
Tensor4 reconstruct(const TuckerFactors& f);
/// Passthrough returns the stored weights; SVD factors come back as C x S x 1 x 1.
Tensor4 reconstruct(const DecomposedLayer& d);

/// ||orig - rec||_F / ||orig||_F; 0 when both are zero, +inf when only orig is.
double relative_error(const Tensor4& original, const Tensor4& reconstructed);
double relative_error(const Matrix& original, const Matrix& reconstructed);

}  // namespace lrd
