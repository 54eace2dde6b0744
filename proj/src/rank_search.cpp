#include "lrd/rank_search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string_view>

#include "lrd/planner.hpp"
#include "lrd/stacks.hpp"
#include "lrd/weights.hpp"

namespace lrd {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_reps(std::size_t reps) {
  if (reps < kMinProfileReps) {
    throw std::invalid_argument("profiling needs at least " + std::to_string(kMinProfileReps) + " repetitions, got " +
                                std::to_string(reps));
  }
}

void check_input(const LayerSpec& spec, const nn::FeatureMap& x) {
  const std::size_t features = x.channels * x.height * x.width;
  const bool ok = spec.kind == LayerKind::linear
                      ? features == spec.in_channels
                      : x.channels == spec.in_channels && x.height == spec.input_hw && x.width == spec.input_hw;
  if (!ok) throw DimensionError("profile: input shape does not match layer '" + spec.name + "'");
}

std::size_t round_up(std::size_t x, std::size_t tile) { return tile <= 1 ? x : (x + tile - 1) / tile * tile; }

}  // namespace

TimingStats summarize_timings(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("summarize_timings: no samples");
  TimingStats s;
  s.reps = samples.size();
  s.median = median_of(samples);
  for (double& x : samples) x = std::abs(x - s.median);
  s.mad = median_of(std::move(samples));
  return s;
}

std::uint64_t digest(const nn::FeatureMap& x) {
  const std::string_view bytes(reinterpret_cast<const char*>(x.data.data()), x.data.size() * sizeof(double));
  return fnv1a(bytes);
}

ProfileRecord profile_stack(const std::string& layer, std::size_t rank, const nn::Stack& stack,
                            const nn::FeatureMap& input, std::size_t reps) {
  check_reps(reps);
  nn::FeatureMap out = nn::run_stack(stack, input);  // warmup
  std::vector<double> samples;
  samples.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    out = nn::run_stack(stack, input);
    const auto stop = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double>(stop - start).count());
  }
  ProfileRecord r;
  r.layer = layer;
  r.rank = rank;
  r.time = summarize_timings(std::move(samples));
  // Guard against clock granularity on tiny layers.
  r.time.median = std::max(r.time.median, std::numeric_limits<double>::min());
  r.output_digest = digest(out);
  return r;
}

ProfileRecord profile_layer(const LayerSpec& spec, const Tensor4& weights, const nn::FeatureMap& input,
                            std::size_t reps) {
  check_input(spec, input);
  return profile_stack(spec.name, 0, original_stack(spec, weights), input, reps);
}

ProfileRecord profile_layer(const DecomposedLayer& layer, std::size_t rank, const nn::FeatureMap& input,
                            std::size_t reps) {
  check_input(layer.original, input);
  return profile_stack(layer.original.name, rank, factor_stack(layer), input, reps);
}

NnTimingProvider::NnTimingProvider(LayerSpec spec, Tensor4 weights, std::size_t max_rank, double beta,
                                   std::size_t reps, std::uint64_t seed)
    : spec_(std::move(spec)), weights_(std::move(weights)), beta_(beta), reps_(reps) {
  check_reps(reps_);
  if (spec_.groups != 1) throw std::invalid_argument("rank search: grouped layers are not decomposed");
  input_ = random_input(spec_, 1, seed);
  if (spec_.is_pointwise()) {
    svd_ = svd(weights_.as_matrix());
  } else {
    const auto r2 = static_cast<std::size_t>(std::llround(beta_ * static_cast<double>(max_rank)));
    tucker_.emplace(weights_, std::min(max_rank, spec_.in_channels), std::min(std::max<std::size_t>(r2, 1), spec_.out_channels));
  }
}

ProfileRecord NnTimingProvider::original() { return profile_layer(spec_, weights_, input_, reps_); }

ProfileRecord NnTimingProvider::decomposed(std::size_t rank) {
  DecomposedLayer d;
  d.original = spec_;
  if (svd_) {
    if (rank < 1 || rank > svd_->rank()) throw RankError("rank search: rank outside the layer's range");
    const auto r = static_cast<Eigen::Index>(rank);
    const Vector root = svd_->sigma.head(r).cwiseSqrt();
    d.factors = SvdFactors{svd_->u.leftCols(r) * root.asDiagonal(), root.asDiagonal() * svd_->v.leftCols(r).transpose()};
  } else {
    const auto r2 = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(beta_ * static_cast<double>(rank))));
    d.factors = tucker_->truncate(rank, r2);
  }
  return profile_layer(d, rank, input_, reps_);
}

CurveTimingProvider::CurveTimingProvider(std::string layer, double original_time,
                                         std::function<double(std::size_t)> curve)
    : layer_(std::move(layer)), original_time_(original_time), curve_(std::move(curve)) {}

ProfileRecord CurveTimingProvider::original() {
  return ProfileRecord{layer_, 0, TimingStats{original_time_, 0.0, kMinProfileReps}, 0};
}

ProfileRecord CurveTimingProvider::decomposed(std::size_t rank) {
  return ProfileRecord{layer_, rank, TimingStats{curve_(rank), 0.0, kMinProfileReps}, 0};
}

double SyntheticCostModel::op_time(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                   std::size_t out_hw, std::size_t groups) const {
  const double macs = static_cast<double>(round_up(in_channels / groups, tile)) *
                      static_cast<double>(round_up(out_channels, tile)) * static_cast<double>(kernel * kernel) *
                      static_cast<double>(out_hw * out_hw);
  return launch_overhead + macs / macs_per_second;
}

double SyntheticCostModel::original_time(const LayerSpec& spec) const {
  return op_time(spec.in_channels, spec.out_channels, spec.kernel, spec.output_hw(), spec.groups);
}

double SyntheticCostModel::decomposed_time(const LayerSpec& spec, std::size_t rank, double beta) const {
  const std::size_t ho = spec.output_hw();
  if (spec.is_pointwise()) {
    const std::size_t padded = spec.kind == LayerKind::linear ? 1 : spec.input_hw + 2 * spec.padding;
    return op_time(spec.in_channels, rank, 1, padded) + op_time(rank, spec.out_channels, 1, ho);
  }
  const auto r2 = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(beta * static_cast<double>(rank))));
  return op_time(spec.in_channels, rank, 1, spec.input_hw) + op_time(rank, r2, spec.kernel, ho) +
         op_time(r2, spec.out_channels, 1, ho);
}

SyntheticTimingProvider::SyntheticTimingProvider(LayerSpec spec, SyntheticCostModel model, double beta)
    : spec_(std::move(spec)), model_(model), beta_(beta) {}

ProfileRecord SyntheticTimingProvider::original() {
  return ProfileRecord{spec_.name, 0, TimingStats{model_.original_time(spec_), 0.0, kMinProfileReps}, 0};
}

ProfileRecord SyntheticTimingProvider::decomposed(std::size_t rank) {
  return ProfileRecord{spec_.name, rank, TimingStats{model_.decomposed_time(spec_, rank, beta_), 0.0, kMinProfileReps},
                       0};
}

RankSearchResult optimize_rank(std::size_t r_init, std::size_t r_min, TimingProvider& cost, std::size_t step) {
  if (r_min < 1 || r_min > r_init) {
    throw RankError("optimize_rank: need 1 <= r_min <= r_init, got r_min = " + std::to_string(r_min) +
                    ", r_init = " + std::to_string(r_init));
  }
  if (step < 1) throw std::invalid_argument("optimize_rank: step must be >= 1");

  RankSearchResult out;
  out.original = cost.original();
  const double t_original = out.original.time.median;

  std::optional<std::size_t> best;
  double best_dt = 0.0;
  double best_t = 0.0;
  double prev_t = 0.0;
  for (std::size_t r = r_init;; r -= step) {
    ProfileRecord rec = cost.decomposed(r);
    const double t = rec.time.median;
    if (!std::isfinite(t) || t < 0.0) throw NumericalError("optimize_rank: invalid timing at rank " + std::to_string(r));
    const double dt = r == r_init ? 0.0 : prev_t - t;
    if (t < t_original) {
      const bool better = !best || dt > best_dt || (dt == best_dt && (t < best_t || (t == best_t && r > *best)));
      if (better) {
        best = r;
        best_dt = dt;
        best_t = t;
      }
    }
    prev_t = t;
    out.scanned.push_back(std::move(rec));
    if (r < r_min + step) break;
  }
  out.rank = best;
  return out;
}

}  // namespace lrd
