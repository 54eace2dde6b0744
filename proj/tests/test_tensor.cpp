#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "lrd/tensor.hpp"
#include "lrd/tensor_io.hpp"
#include "lrd/weights.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lrd;

TEST_CASE("tensor construction checks length and finiteness") {
  CHECK_THROWS_AS(Tensor4(Dims4{2, 2, 1, 1}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor4(Dims4{1, 1, 1, 1}, {std::nan("")}), NumericalError);
  const Tensor4 t(Dims4{2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
  CHECK(t(1, 2, 0, 0) == 6);
  CHECK(t.as_matrix()(1, 0) == 4);
  CHECK(Tensor4::from_matrix(t.as_matrix()) == t);
  CHECK_THROWS_AS((void)Tensor4(Dims4{1, 1, 3, 3}).as_matrix(), DimensionError);
}

TEST_CASE("unfold layout and fold round trip") {
  auto g = support::rng(1);
  const Tensor4 t = random_tensor(g, Dims4{3, 4, 2, 2});
  const Matrix in = unfold(t, Mode::in);
  const Matrix out = unfold(t, Mode::out);
  CHECK(in.rows() == 3);
  CHECK(in.cols() == 16);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 12);
  CHECK(in(2, 3 * 4 + 1 * 2 + 1) == t(2, 3, 1, 1));
  CHECK(out(3, 2 * 4 + 1 * 2 + 0) == t(2, 3, 1, 0));
  CHECK(fold(in, Mode::in, t.dims()) == t);
  CHECK(fold(out, Mode::out, t.dims()) == t);
  CHECK_THROWS_AS(fold(in, Mode::out, t.dims()), DimensionError);
}

TEST_CASE("mode product matches the definition") {
  auto g = support::rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims4 d{support::pick(g, 1, 6), support::pick(g, 1, 6), support::pick(g, 1, 3), support::pick(g, 1, 3)};
    const Tensor4 t = random_tensor(g, d);
    const Matrix a = random_matrix(g, static_cast<Eigen::Index>(support::pick(g, 1, 5)), static_cast<Eigen::Index>(d.in));
    const Matrix b = random_matrix(g, static_cast<Eigen::Index>(support::pick(g, 1, 5)), static_cast<Eigen::Index>(d.out));
    CHECK(oracle::rel(mode_product(t, a, Mode::in), oracle::mode_product(t, a, 0)) < 1e-13);
    CHECK(oracle::rel(mode_product(t, b, Mode::out), oracle::mode_product(t, b, 1)) < 1e-13);
  }
  const Tensor4 t(Dims4{2, 2, 1, 1});
  CHECK_THROWS_AS(mode_product(t, Matrix::Zero(2, 3), Mode::in), DimensionError);
}

TEST_CASE("svd agrees with the Jacobi oracle and fixes signs") {
  auto g = support::rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto rows = static_cast<Eigen::Index>(support::pick(g, 1, 40));
    const auto cols = static_cast<Eigen::Index>(support::pick(g, 1, 40));
    const Matrix m = random_matrix(g, rows, cols);
    const SvdResult s = svd(m);
    const auto ref = oracle::singular_values(m);
    REQUIRE(s.rank() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(s.sigma(static_cast<Eigen::Index>(i)) - ref[i]) < 1e-10 * ref[0]);
    CHECK(oracle::rel(s.reconstruct(), m) < 1e-12);
    for (Eigen::Index j = 0; j < s.u.cols(); ++j) {
      Eigen::Index first = 0;
      while (first < s.u.rows() && s.u(first, j) == 0.0) ++first;
      if (first < s.u.rows()) CHECK(s.u(first, j) >= 0.0);
    }
  }
}

TEST_CASE("svd of special matrices") {
  const Matrix zero = Matrix::Zero(3, 2);
  const SvdResult s = svd(zero);
  CHECK(s.sigma.maxCoeff() == 0.0);
  CHECK(svd(Matrix::Identity(4, 4)).sigma.isApprox(Vector::Ones(4)));
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(svd(bad), NumericalError);
  CHECK_THROWS_AS(truncated_svd(zero, 3), RankError);
  CHECK_THROWS_AS(truncated_svd(zero, 0), RankError);
}

TEST_CASE("binary tensor round trip and error messages") {
  auto g = support::rng(4);
  const Tensor4 t = random_tensor(g, Dims4{2, 3, 3, 3});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 16 + 8 * t.dims().size());
  CHECK(static_cast<unsigned char>(bytes[0]) == 2);  // little-endian header
  std::stringstream back(bytes);
  CHECK(read_tensor(back) == t);

  auto message = [](const std::string& b) {
    std::stringstream in(b);
    try {
      (void)read_tensor(in);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(bytes.substr(0, 10)) == "truncated header: expected 16 bytes, got 10");
  CHECK(message(bytes.substr(0, 40)) == "truncated data: expected 432 bytes, got 24");
  CHECK(message(bytes + "x") == "trailing bytes after tensor data");
  std::string nan_bytes = bytes;
  const double nan = std::nan("");
  std::memcpy(nan_bytes.data() + 16, &nan, 8);
  CHECK(message(nan_bytes) == "non-finite value in tensor data");
}

TEST_CASE("json tensor form round trips") {
  auto g = support::rng(5);
  const Tensor4 t = random_tensor(g, Dims4{1, 2, 2, 1});
  const auto j = tensor_to_json(t);
  CHECK(j.at("dims") == nlohmann::json::array({1, 2, 2, 1}));
  CHECK(tensor_from_json(nlohmann::json::parse(j.dump())) == t);
  CHECK_THROWS_AS(tensor_from_json(nlohmann::json::parse(R"({"dims":[1,1,1,2],"data":[1]})")), FormatError);
}
