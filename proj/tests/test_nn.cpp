#include <doctest.h>

#include "lrd/nn.hpp"
#include "lrd/stacks.hpp"
#include "lrd/weights.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lrd;
using nn::FeatureMap;

namespace {

FeatureMap random_map(std::mt19937_64& g, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  FeatureMap x(n, c, h, w);
  for (double& v : x.data) v = uniform(g, -1, 1);
  return x;
}

}  // namespace

TEST_CASE("all-ones 3x3 kernel on all-ones input") {
  const std::size_t c = 4;
  const FeatureMap x(1, c, 5, 5, std::vector<double>(c * 25, 1.0));
  Tensor4 w(Dims4{c, 2, 3, 3});
  for (double& v : w.data()) v = 1.0;
  const FeatureMap y = nn::conv2d(x, w);
  CHECK(y.height == 3);
  CHECK(y.width == 3);
  for (double v : y.data) CHECK(v == 9.0 * c);
}

TEST_CASE("identity 1x1 conv only mixes channels") {
  auto g = support::rng(50);
  const FeatureMap x = random_map(g, 2, 3, 4, 4);
  const FeatureMap y = nn::conv2d(x, Tensor4::from_matrix(Matrix::Identity(3, 3)));
  CHECK(y == x);
  Matrix swap = Matrix::Zero(3, 3);
  swap(0, 2) = swap(1, 1) = swap(2, 0) = 1.0;
  const FeatureMap z = nn::conv2d(x, Tensor4::from_matrix(swap));
  CHECK(z.at(1, 2, 3, 1) == x.at(1, 0, 3, 1));
}

TEST_CASE("conv matches the patch oracle, grouped or not") {
  auto g = support::rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t groups = support::pick(g, 1, 3);
    const std::size_t cg = support::pick(g, 1, 3);
    const std::size_t sg = support::pick(g, 1, 3);
    const std::size_t k = support::pick(g, 1, 3);
    const std::size_t stride = support::pick(g, 1, 2);
    const std::size_t pad = support::pick(g, 0, k - 1);
    const std::size_t hw = support::pick(g, k, 7);
    const FeatureMap x = random_map(g, 2, cg * groups, hw, hw);
    const Tensor4 w = random_tensor(g, Dims4{cg, sg * groups, k, k});
    const auto y = nn::conv2d(x, w, nn::ConvParams{stride, pad, groups});
    CHECK(oracle::rel(y, oracle::conv(x, w, stride, pad, groups)) < 1e-13);
  }
}

TEST_CASE("grouped conv equals per-group convs on channel slices") {
  auto g = support::rng(52);
  const std::size_t groups = 3;
  const FeatureMap x = random_map(g, 1, 6, 5, 5);
  const Tensor4 w = random_tensor(g, Dims4{2, 9, 3, 3});
  const FeatureMap y = nn::conv2d(x, w, nn::ConvParams{1, 1, groups});
  for (std::size_t gi = 0; gi < groups; ++gi) {
    FeatureMap xs(1, 2, 5, 5);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 25; ++i) xs.data[c * 25 + i] = x.data[(gi * 2 + c) * 25 + i];
    Tensor4 ws(Dims4{2, 3, 3, 3});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j) ws(c, s, i, j) = w(c, gi * 3 + s, i, j);
    const FeatureMap ys = nn::conv2d(xs, ws, nn::ConvParams{1, 1, 1});
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < 25; ++i) CHECK(ys.data[s * 25 + i] == y.data[(gi * 3 + s) * 25 + i]);
  }
}

TEST_CASE("pointwise conv is a per-pixel linear map") {
  auto g = support::rng(53);
  const FeatureMap x = random_map(g, 1, 5, 3, 3);
  const Matrix m = random_matrix(g, 5, 4);
  const FeatureMap y = nn::conv2d(x, Tensor4::from_matrix(m));
  for (std::size_t p = 0; p < 9; ++p) {
    FeatureMap pix(1, 5, 1, 1);
    for (std::size_t c = 0; c < 5; ++c) pix.data[c] = x.data[c * 9 + p];
    const FeatureMap out = nn::linear(pix, m);
    for (std::size_t s = 0; s < 4; ++s) CHECK(std::abs(out.data[s] - y.data[s * 9 + p]) < 1e-12);
  }
}

TEST_CASE("conv is linear in its input") {
  auto g = support::rng(54);
  const FeatureMap x = random_map(g, 1, 3, 6, 6);
  const FeatureMap z = random_map(g, 1, 3, 6, 6);
  const Tensor4 w = random_tensor(g, Dims4{3, 2, 3, 3});
  const double a = 1.7;
  FeatureMap mix = x;
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + z.data[i];
  const auto lhs = nn::conv2d(mix, w, {2, 1, 1});
  auto rhs = nn::conv2d(x, w, {2, 1, 1});
  const auto zz = nn::conv2d(z, w, {2, 1, 1});
  for (std::size_t i = 0; i < rhs.data.size(); ++i) rhs.data[i] = a * rhs.data[i] + zz.data[i];
  CHECK(oracle::rel(lhs, rhs) < 1e-10);
}

TEST_CASE("linear layer") {
  auto g = support::rng(55);
  const FeatureMap x = random_map(g, 2, 3, 1, 1);
  CHECK(nn::linear(x, Matrix::Identity(3, 3)) == x);
  const Matrix w = random_matrix(g, 3, 2);
  const FeatureMap y = nn::linear(x, w);
  const Matrix xm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data.data(), 2, 3);
  const Matrix ref = oracle::matmul(xm, w);
  for (Eigen::Index n = 0; n < 2; ++n)
    for (Eigen::Index s = 0; s < 2; ++s) CHECK(std::abs(y.data[static_cast<std::size_t>(n * 2 + s)] - ref(n, s)) < 1e-14);
  Vector b(2);
  b << 0.5, -2.0;
  const FeatureMap zero(1, 3, 1, 1);
  CHECK(nn::linear(zero, w, b).data == std::vector<double>{0.5, -2.0});
  CHECK_THROWS_AS(nn::linear(x, Matrix::Zero(4, 2)), DimensionError);
}

TEST_CASE("conv shape errors") {
  const FeatureMap x(1, 4, 5, 5);
  CHECK_THROWS_AS(nn::conv2d(x, Tensor4(Dims4{3, 2, 1, 1})), DimensionError);
  CHECK_THROWS_AS(nn::conv2d(x, Tensor4(Dims4{2, 3, 1, 1}), {1, 0, 2}), DimensionError);
  CHECK_THROWS_AS(nn::conv2d(x, Tensor4(Dims4{4, 2, 7, 7})), DimensionError);
}

TEST_CASE("run_stack") {
  auto g = support::rng(56);
  const FeatureMap x = random_map(g, 1, 4, 3, 3);
  CHECK(nn::run_stack({}, x) == x);
  const Matrix a = random_matrix(g, 4, 2);
  const Matrix b = random_matrix(g, 2, 5);
  const auto pair = nn::run_stack({nn::ConvOp{Tensor4::from_matrix(a), {}, {}}, nn::ConvOp{Tensor4::from_matrix(b), {}, {}}}, x);
  CHECK(oracle::rel(pair, nn::conv2d(x, Tensor4::from_matrix(a * b))) < 1e-12);
  const auto r = nn::run_stack({nn::ReluOp{}}, x);
  for (std::size_t i = 0; i < r.data.size(); ++i) CHECK(r.data[i] == std::max(0.0, x.data[i]));
  try {
    (void)nn::run_stack({nn::ConvOp{Tensor4::from_matrix(a), {}, {}}, nn::ConvOp{Tensor4::from_matrix(a), {}, {}}}, x);
    FAIL("expected a stack error");
  } catch (const nn::StackError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("factor stacks equal convolution with the reconstruction") {
  auto g = support::rng(57);
  LayerSpec l;
  l.name = "t";
  l.in_channels = 6;
  l.out_channels = 5;
  l.kernel = 3;
  l.stride = 2;
  l.padding = 1;
  l.input_hw = 7;
  const Tensor4 w = seeded_weights(l, 1);
  const TuckerFactors f = decompose_tucker2(w, 3, 4);
  const FeatureMap x = random_input(l, 2, 3);
  CHECK(oracle::rel(nn::run_stack(tucker_stack(l, f), x), nn::run_stack(original_stack(l, reconstruct(f)), x)) < 1e-12);

  LayerSpec p = l;
  p.kernel = 1;
  p.padding = 1;  // padded strided 1x1
  const Tensor4 wp = seeded_weights(p, 2);
  const SvdFactors s = decompose_svd(wp.as_matrix(), 3);
  Vector bias = Vector::LinSpaced(5, -1, 1);
  CHECK(oracle::rel(nn::run_stack(svd_stack(p, s, bias), x),
                    nn::run_stack(original_stack(p, Tensor4::from_matrix(reconstruct(s)), bias), x)) < 1e-12);
}
