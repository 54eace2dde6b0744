#include "lrd/tensor.hpp"

#include <cmath>
#include <string>

namespace lrd {

namespace {

void require_finite(std::span<const double> data, const char* what) {
  for (double x : data) {
    if (!std::isfinite(x)) throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

std::size_t mode_size(const Dims4& d, Mode mode) { return mode == Mode::in ? d.in : d.out; }

// Column count of an unfolding.
std::size_t other_size(const Dims4& d, Mode mode) {
  return (mode == Mode::in ? d.out : d.in) * d.kh * d.kw;
}

// Makes the first nonzero entry of each column of u nonnegative, flipping v with it.
void fix_signs(Matrix& u, Matrix* v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double x = u(i, j);
      if (x == 0.0) continue;
      if (x < 0.0) {
        u.col(j) *= -1.0;
        if (v != nullptr) v->col(j) *= -1.0;
      }
      break;
    }
  }
}

constexpr Eigen::Index kJacobiThreshold = 16;

}  // namespace

Tensor4::Tensor4(Dims4 dims) : dims_(dims), data_(dims.size(), 0.0) {}

Tensor4::Tensor4(Dims4 dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match dims (" +
                         std::to_string(dims_.size()) + " expected)");
  }
  require_finite(data_, "tensor");
}

Tensor4 Tensor4::from_matrix(const Matrix& m) {
  Tensor4 t(Dims4{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), 1, 1});
  for (Eigen::Index c = 0; c < m.rows(); ++c)
    for (Eigen::Index s = 0; s < m.cols(); ++s) t(c, s, 0, 0) = m(c, s);
  require_finite(t.data_, "matrix");
  return t;
}

Matrix Tensor4::as_matrix() const {
  if (dims_.kh != 1 || dims_.kw != 1) throw DimensionError("as_matrix requires a 1x1 kernel");
  Matrix m(dims_.in, dims_.out);
  for (std::size_t c = 0; c < dims_.in; ++c)
    for (std::size_t s = 0; s < dims_.out; ++s) m(c, s) = (*this)(c, s, 0, 0);
  return m;
}

double Tensor4::squared_norm() const {
  double acc = 0.0;
  for (double x : data_) acc += x * x;
  return acc;
}

double Tensor4::norm() const { return std::sqrt(squared_norm()); }

Matrix unfold(const Tensor4& t, Mode mode) {
  const Dims4& d = t.dims();
  const std::size_t k2 = d.kh * d.kw;
  Matrix m(mode_size(d, mode), other_size(d, mode));
  const auto data = t.data();
  for (std::size_t c = 0; c < d.in; ++c) {
    for (std::size_t s = 0; s < d.out; ++s) {
      const std::size_t base = (c * d.out + s) * k2;
      for (std::size_t q = 0; q < k2; ++q) {
        if (mode == Mode::in)
          m(c, s * k2 + q) = data[base + q];
        else
          m(s, c * k2 + q) = data[base + q];
      }
    }
  }
  return m;
}

Tensor4 fold(const Matrix& m, Mode mode, const Dims4& dims) {
  if (static_cast<std::size_t>(m.rows()) != mode_size(dims, mode) ||
      static_cast<std::size_t>(m.cols()) != other_size(dims, mode)) {
    throw DimensionError("fold: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " does not match dims " + std::to_string(mode_size(dims, mode)) + "x" +
                         std::to_string(other_size(dims, mode)));
  }
  const std::size_t k2 = dims.kh * dims.kw;
  std::vector<double> data(dims.size());
  for (std::size_t c = 0; c < dims.in; ++c) {
    for (std::size_t s = 0; s < dims.out; ++s) {
      const std::size_t base = (c * dims.out + s) * k2;
      for (std::size_t q = 0; q < k2; ++q)
        data[base + q] = mode == Mode::in ? m(c, s * k2 + q) : m(s, c * k2 + q);
    }
  }
  return Tensor4(dims, std::move(data));
}

Tensor4 mode_product(const Tensor4& t, const Matrix& m, Mode mode) {
  const Dims4& d = t.dims();
  if (static_cast<std::size_t>(m.cols()) != mode_size(d, mode)) {
    throw DimensionError("mode_product: matrix has " + std::to_string(m.cols()) + " columns, tensor mode has " +
                         std::to_string(mode_size(d, mode)));
  }
  Dims4 out = d;
  (mode == Mode::in ? out.in : out.out) = static_cast<std::size_t>(m.rows());
  return fold(m * unfold(t, mode), mode, out);
}

Matrix SvdResult::reconstruct() const { return u * sigma.asDiagonal() * v.transpose(); }

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite entry");
}

SvdResult svd(const Matrix& m) {
  require_finite(m, "svd");
  SvdResult out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.u = Matrix(m.rows(), 0);
    out.v = Matrix(m.cols(), 0);
    return out;
  }
  constexpr unsigned kOptions = Eigen::ComputeThinU | Eigen::ComputeThinV;
  if (std::min(m.rows(), m.cols()) < kJacobiThreshold) {
    Eigen::JacobiSVD<Matrix> solver(m, kOptions);
    out.u = solver.matrixU();
    out.sigma = solver.singularValues();
    out.v = solver.matrixV();
  } else {
    Eigen::BDCSVD<Matrix> solver(m, kOptions);
    if (solver.info() != Eigen::Success) {
      throw NumericalError("svd: no convergence on " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                           " input");
    }
    out.u = solver.matrixU();
    out.sigma = solver.singularValues();
    out.v = solver.matrixV();
  }
  fix_signs(out.u, &out.v);
  return out;
}

SvdResult truncated_svd(const Matrix& m, std::size_t rank) {
  const auto full = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  if (rank < 1 || rank > full) {
    throw RankError("truncated_svd: rank " + std::to_string(rank) + " outside [1, " + std::to_string(full) + "]");
  }
  SvdResult s = svd(m);
  const auto r = static_cast<Eigen::Index>(rank);
  return SvdResult{s.u.leftCols(r), s.sigma.head(r), s.v.leftCols(r)};
}

Matrix leading_left_singular_vectors(const Matrix& m, std::size_t count) {
  const auto full = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  if (count < 1 || count > static_cast<std::size_t>(m.rows())) {
    throw RankError("leading_left_singular_vectors: count " + std::to_string(count) + " outside [1, " +
                    std::to_string(m.rows()) + "]");
  }
  require_finite(m, "svd");
  // A wide unfolding (C x S*k*k) only needs U; when count exceeds the thin
  // rank the remaining columns come from the full U.
  Matrix u;
  if (count > full) {
    Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeFullU);
    u = solver.matrixU();
  } else if (std::min(m.rows(), m.cols()) < kJacobiThreshold) {
    Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeThinU);
    u = solver.matrixU();
  } else {
    Eigen::BDCSVD<Matrix> solver(m, Eigen::ComputeThinU);
    if (solver.info() != Eigen::Success) throw NumericalError("svd: no convergence");
    u = solver.matrixU();
  }
  Matrix lead = u.leftCols(static_cast<Eigen::Index>(count));
  fix_signs(lead, nullptr);
  return lead;
}

}  // namespace lrd
