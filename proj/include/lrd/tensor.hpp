#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "lrd/errors.hpp"

namespace lrd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shape of a convolution weight: input channels, output channels, kernel rows, kernel cols.
struct Dims4 {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kh = 1;
  std::size_t kw = 1;

  [[nodiscard]] std::size_t size() const { return in * out * kh * kw; }
  friend bool operator==(const Dims4&, const Dims4&) = default;
};

/// Dense C x S x h x w tensor of doubles, row-major (w fastest).
///
/// A fully-connected or 1x1 layer is the h = w = 1 case and converts to and
/// from a C x S matrix.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Dims4 dims);
  Tensor4(Dims4 dims, std::vector<double> data);

  static Tensor4 from_matrix(const Matrix& m);

  [[nodiscard]] const Dims4& dims() const { return dims_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] std::span<double> data() { return data_; }

  [[nodiscard]] std::size_t index(std::size_t c, std::size_t s, std::size_t i, std::size_t j) const {
    return ((c * dims_.out + s) * dims_.kh + i) * dims_.kw + j;
  }
  double operator()(std::size_t c, std::size_t s, std::size_t i, std::size_t j) const {
    return data_[index(c, s, i, j)];
  }
  double& operator()(std::size_t c, std::size_t s, std::size_t i, std::size_t j) {
    return data_[index(c, s, i, j)];
  }

  /// Requires h == w == 1.
  [[nodiscard]] Matrix as_matrix() const;
  [[nodiscard]] double squared_norm() const;
  [[nodiscard]] double norm() const;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Dims4 dims_;
  std::vector<double> data_;
};

enum class Mode { in, out };

/// in-mode: C x (S*h*w), row c ordered by (s, i, j).
/// out-mode: S x (C*h*w), row s ordered by (c, i, j).
Matrix unfold(const Tensor4& t, Mode mode);
Tensor4 fold(const Matrix& m, Mode mode, const Dims4& dims);

/// t x_mode m: replaces the `mode` axis of size n with m.rows(), m is (rows x n).
Tensor4 mode_product(const Tensor4& t, const Matrix& m, Mode mode);

struct SvdResult {
  Matrix u;      // m x r
  Vector sigma;  // r, nonincreasing
  Matrix v;      // n x r

  [[nodiscard]] std::size_t rank() const { return static_cast<std::size_t>(sigma.size()); }
  [[nodiscard]] Matrix reconstruct() const;
};

/// Thin SVD, r = min(rows, cols). The first nonzero entry of every column of U
/// is made nonnegative (V flipped to match).
SvdResult svd(const Matrix& m);

/// Leading `rank` singular triplets of m.
SvdResult truncated_svd(const Matrix& m, std::size_t rank);

/// Leading `count` left singular vectors only; cheaper than a full SVD when
/// one side is wide (HOSVD of an unfolding).
Matrix leading_left_singular_vectors(const Matrix& m, std::size_t count);

void require_finite(const Matrix& m, const char* what);

}  // namespace lrd
