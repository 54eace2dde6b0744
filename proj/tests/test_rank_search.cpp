#include <doctest.h>

#include <map>

#include "lrd/rank_search.hpp"
#include "lrd/stacks.hpp"
#include "lrd/weights.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lrd;

namespace {

std::optional<std::size_t> search(std::size_t r_init, std::size_t r_min, double t_orig,
                                  std::function<double(std::size_t)> curve, std::size_t step = 1) {
  CurveTimingProvider p("x", t_orig, std::move(curve));
  return optimize_rank(r_init, r_min, p, step).rank;
}

LayerSpec conv(const char* name, std::size_t c, std::size_t s, std::size_t k, std::size_t hw) {
  LayerSpec l;
  l.name = name;
  l.in_channels = c;
  l.out_channels = s;
  l.kernel = k;
  l.padding = k / 2;
  l.input_hw = hw;
  return l;
}

}  // namespace

TEST_CASE("step discontinuity picks the rank below the cliff") {
  const auto r = search(309, 200, 10.0, [](std::size_t r) { return r > 256 ? 5.0 + 1e-3 * r : 2.0 + 1e-3 * r; });
  CHECK(r == 256);
}

TEST_CASE("original faster than every rank keeps the layer") {
  CHECK_FALSE(search(50, 10, 1.0, [](std::size_t) { return 2.0; }).has_value());
  CHECK_FALSE(search(50, 10, 1.0, [](std::size_t) { return 1.0; }).has_value());  // ties are not faster
}

TEST_CASE("linear cost picks the smallest rank") {
  CHECK(search(64, 16, 100.0, [](std::size_t r) { return 0.5 * static_cast<double>(r); }) == 16);
}

TEST_CASE("flat cost keeps the initial rank") {
  CHECK(search(25, 13, 1.0, [](std::size_t) { return 0.5; }) == 25);
}

TEST_CASE("rank search matches the exhaustive oracle") {
  auto g = support::rng(30);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r_init = support::pick(g, 1, 60);
    const std::size_t r_min = support::pick(g, 1, r_init);
    const std::size_t step = support::pick(g, 1, 4);
    std::map<std::size_t, double> table;
    // coarse values so ties in dt and t actually occur
    for (std::size_t r = 1; r <= r_init; ++r) table[r] = static_cast<double>(support::pick(g, 0, 12)) * 0.25;
    const double t_orig = static_cast<double>(support::pick(g, 0, 12)) * 0.25;
    std::vector<std::size_t> ranks;
    std::vector<double> times;
    for (std::size_t r = r_init;; r -= step) {
      ranks.push_back(r);
      times.push_back(table[r]);
      if (r < r_min + step) break;
    }
    CurveTimingProvider p("x", t_orig, [&](std::size_t r) { return table.at(r); });
    const RankSearchResult res = optimize_rank(r_init, r_min, p, step);
    CHECK(res.rank == oracle::best_rank(ranks, times, t_orig));
    CHECK(res.scanned.size() == ranks.size());
  }
}

TEST_CASE("rank search argument checks") {
  CHECK_THROWS_AS(search(5, 6, 1.0, [](std::size_t) { return 0.0; }), RankError);
  CHECK_THROWS_AS(search(5, 0, 1.0, [](std::size_t) { return 0.0; }), RankError);
  CHECK_THROWS_AS(search(5, 1, 1.0, [](std::size_t) { return 0.0; }, 0), std::invalid_argument);
  CHECK_THROWS_AS(search(5, 1, 1.0, [](std::size_t) { return std::nan(""); }), NumericalError);
  CHECK_THROWS_AS(search(5, 1, 1.0, [](std::size_t) -> double { throw std::runtime_error("device lost"); }),
                  std::runtime_error);
}

TEST_CASE("synthetic cost model reproduces the small-layer and cliff cases") {
  const SyntheticCostModel model;
  const LayerSpec small = conv("layer1.0.conv1", 64, 64, 1, 56);
  SyntheticTimingProvider sp(small, model, 1.0);
  CHECK_FALSE(optimize_rank(16, 8, sp).rank.has_value());

  const LayerSpec big = conv("layer4.2.conv2", 512, 512, 3, 7);
  SyntheticTimingProvider bp(big, model, 1.0);
  const auto res = optimize_rank(309, 155, bp);
  REQUIRE(res.rank.has_value());
  CHECK(*res.rank % model.tile == 0);
  CHECK(model.decomposed_time(big, 288, 1.0) < model.decomposed_time(big, 289, 1.0));
}

TEST_CASE("profiling records and determinism") {
  const LayerSpec l = conv("p", 8, 8, 3, 6);
  const Tensor4 w = seeded_weights(l, 1);
  const nn::FeatureMap x = random_input(l, 1, 2);
  const ProfileRecord a = profile_layer(l, w, x, 4);
  const ProfileRecord b = profile_layer(l, w, x, 3);
  CHECK(a.time.reps == 4);
  CHECK(b.time.reps == 3);
  CHECK(a.time.median > 0.0);
  CHECK(a.output_digest == b.output_digest);
  CHECK_THROWS_AS(profile_layer(l, w, x, 2), std::invalid_argument);
  CHECK_THROWS_AS(profile_layer(l, w, random_input(conv("q", 4, 8, 3, 6), 1, 2), 3), DimensionError);
}

TEST_CASE("timing summary") {
  const TimingStats s = summarize_timings({3.0, 1.0, 2.0, 10.0});
  CHECK(s.median == 2.5);
  CHECK(s.mad == 1.0);
  CHECK(s.reps == 4);
  CHECK_THROWS_AS(summarize_timings({}), std::invalid_argument);
}

TEST_CASE("real profiling of a 512x512x3x3 layer at rank 309") {
  const LayerSpec l = conv("layer4.2.conv2", 512, 512, 3, 7);
  NnTimingProvider p(l, seeded_weights(l, 3), 309, 1.0, 3, 3);
  const ProfileRecord orig = p.original();
  const ProfileRecord dec = p.decomposed(309);
  CHECK(orig.rank == 0);
  CHECK(dec.rank == 309);
  CHECK(orig.time.reps == 3);
  CHECK(dec.time.median > 0.0);
}
