#include "lrd/decompose.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace lrd {

namespace {

constexpr std::size_t kMaxHooiSweeps = 10;

void check_tucker_ranks(const Dims4& d, std::size_t r1, std::size_t r2) {
  if (d.kh != d.kw) throw DimensionError("tucker2: non-square kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw));
  if (r1 < 1 || r1 > d.in) throw RankError("tucker2: r1 = " + std::to_string(r1) + " outside [1, " + std::to_string(d.in) + "]");
  if (r2 < 1 || r2 > d.out) throw RankError("tucker2: r2 = " + std::to_string(r2) + " outside [1, " + std::to_string(d.out) + "]");
}

double error_from_core(double w_sq, const Tensor4& core) {
  // Orthonormal factors: ||W - rec||^2 = ||W||^2 - ||core||^2.
  return std::sqrt(std::max(0.0, w_sq - core.squared_norm()));
}

}  // namespace

std::size_t DecomposedLayer::factor_layer_count() const {
  switch (factors.index()) {
    case 1:
      return 2;
    case 2:
      return 3;
    default:
      return 1;
  }
}

SvdFactors decompose_svd(const Matrix& w, std::size_t rank) {
  const SvdResult s = truncated_svd(w, rank);
  const Vector root = s.sigma.cwiseSqrt();
  return SvdFactors{s.u * root.asDiagonal(), root.asDiagonal() * s.v.transpose()};
}

Tensor4 project_core(const Tensor4& w, const Matrix& first, const Matrix& last) {
  return mode_product(mode_product(w, first.transpose(), Mode::in), last, Mode::out);
}

TuckerFactors decompose_tucker2(const Tensor4& w, std::size_t r1, std::size_t r2, const TuckerOptions& options) {
  check_tucker_ranks(w.dims(), r1, r2);
  if (options.hooi_sweeps > kMaxHooiSweeps) throw std::invalid_argument("tucker2: at most 10 HOOI sweeps");

  Matrix first = leading_left_singular_vectors(unfold(w, Mode::in), r1);
  Matrix last = leading_left_singular_vectors(unfold(w, Mode::out), r2).transpose();
  Tensor4 core = project_core(w, first, last);

  const double w_sq = w.squared_norm();
  double err = error_from_core(w_sq, core);
  for (std::size_t sweep = 0; sweep < options.hooi_sweeps; ++sweep) {
    Matrix next_first = leading_left_singular_vectors(unfold(mode_product(w, last, Mode::out), Mode::in), r1);
    Matrix next_last =
        leading_left_singular_vectors(unfold(mode_product(w, next_first.transpose(), Mode::in), Mode::out), r2)
            .transpose();
    Tensor4 next_core = project_core(w, next_first, next_last);
    const double next_err = error_from_core(w_sq, next_core);
    if (!(next_err < err)) break;
    const double gain = err - next_err;
    first = std::move(next_first);
    last = std::move(next_last);
    core = std::move(next_core);
    err = next_err;
    if (gain < options.hooi_tolerance * std::max(1.0, std::sqrt(w_sq))) break;
  }
  return TuckerFactors{std::move(first), std::move(core), std::move(last)};
}

Tucker2Basis::Tucker2Basis(Tensor4 w, std::size_t max_r1, std::size_t max_r2) : weights_(std::move(w)) {
  check_tucker_ranks(weights_.dims(), max_r1, max_r2);
  in_basis_ = leading_left_singular_vectors(unfold(weights_, Mode::in), max_r1);
  out_basis_ = leading_left_singular_vectors(unfold(weights_, Mode::out), max_r2);
}

TuckerFactors Tucker2Basis::truncate(std::size_t r1, std::size_t r2) const {
  if (r1 < 1 || r1 > static_cast<std::size_t>(in_basis_.cols()) || r2 < 1 ||
      r2 > static_cast<std::size_t>(out_basis_.cols())) {
    throw RankError("Tucker2Basis: ranks (" + std::to_string(r1) + ", " + std::to_string(r2) + ") exceed the cached basis");
  }
  Matrix first = in_basis_.leftCols(static_cast<Eigen::Index>(r1));
  Matrix last = out_basis_.leftCols(static_cast<Eigen::Index>(r2)).transpose();
  Tensor4 core = project_core(weights_, first, last);
  return TuckerFactors{std::move(first), std::move(core), std::move(last)};
}

Matrix reconstruct(const SvdFactors& f) { return f.w0 * f.w1; }

Tensor4 reconstruct(const TuckerFactors& f) {
  return mode_product(mode_product(f.core, f.first, Mode::in), f.last.transpose(), Mode::out);
}

Tensor4 reconstruct(const DecomposedLayer& d) {
  struct Visitor {
    Tensor4 operator()(const Passthrough& p) const { return p.weights; }
    Tensor4 operator()(const SvdFactors& f) const { return Tensor4::from_matrix(reconstruct(f)); }
    Tensor4 operator()(const TuckerFactors& f) const { return reconstruct(f); }
  };
  return std::visit(Visitor{}, d.factors);
}

double relative_error(const Tensor4& original, const Tensor4& reconstructed) {
  if (original.dims() != reconstructed.dims()) throw DimensionError("relative_error: shape mismatch");
  double diff = 0.0;
  const auto a = original.data();
  const auto b = reconstructed.data();
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double denom = original.squared_norm();
  if (denom == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff / denom);
}

double relative_error(const Matrix& original, const Matrix& reconstructed) {
  if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
    throw DimensionError("relative_error: shape mismatch");
  }
  const double denom = original.squaredNorm();
  const double diff = (original - reconstructed).squaredNorm();
  if (denom == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff / denom);
}

}  // namespace lrd
