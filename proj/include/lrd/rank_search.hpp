#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrd/decompose.hpp"
#include "lrd/layer.hpp"
#include "lrd/nn.hpp"

namespace lrd {

inline constexpr std::size_t kMinProfileReps = 3;

struct TimingStats {
  double median = 0.0;  // seconds
  double mad = 0.0;     // median absolute deviation
  std::size_t reps = 0;
};

/// Timing of one layer at one rank; rank 0 is the original layer.
struct ProfileRecord {
  std::string layer;
  std::size_t rank = 0;
  TimingStats time;
  std::uint64_t output_digest = 0;  // FNV-1a of the output bytes
};

TimingStats summarize_timings(std::vector<double> samples);
std::uint64_t digest(const nn::FeatureMap& x);

/// Runs the stack once to warm up, then `reps` timed forwards.
ProfileRecord profile_stack(const std::string& layer, std::size_t rank, const nn::Stack& stack,
                            const nn::FeatureMap& input, std::size_t reps);
ProfileRecord profile_layer(const LayerSpec& spec, const Tensor4& weights, const nn::FeatureMap& input,
                            std::size_t reps);
ProfileRecord profile_layer(const DecomposedLayer& layer, std::size_t rank, const nn::FeatureMap& input,
                            std::size_t reps);

/// Source of t(r) and T for the rank search.
class TimingProvider {
 public:
  virtual ~TimingProvider() = default;
  virtual ProfileRecord original() = 0;
  virtual ProfileRecord decomposed(std::size_t rank) = 0;
};

/// Profiles real nn forwards. Rank r means SVD rank r for 1x1/linear layers
/// and Tucker ranks (r, round(beta r)) for k x k layers; decompositions reuse
/// one cached SVD/HOSVD basis.
class NnTimingProvider : public TimingProvider {
 public:
  NnTimingProvider(LayerSpec spec, Tensor4 weights, std::size_t max_rank, double beta, std::size_t reps,
                   std::uint64_t seed = 0);

  ProfileRecord original() override;
  ProfileRecord decomposed(std::size_t rank) override;

 private:
  LayerSpec spec_;
  Tensor4 weights_;
  double beta_;
  std::size_t reps_;
  nn::FeatureMap input_;
  std::optional<SvdResult> svd_;
  std::optional<Tucker2Basis> tucker_;
};

/// Injected cost curve t(r) with a fixed original time T.
class CurveTimingProvider : public TimingProvider {
 public:
  CurveTimingProvider(std::string layer, double original_time, std::function<double(std::size_t)> curve);

  ProfileRecord original() override;
  ProfileRecord decomposed(std::size_t rank) override;

 private:
  std::string layer_;
  double original_time_;
  std::function<double(std::size_t)> curve_;
};

/// Deterministic stand-in for hardware: each op costs a fixed launch overhead
/// plus its multiply-accumulates with every channel count padded up to a
/// multiple of `tile`.
struct SyntheticCostModel {
  double launch_overhead = 2e-5;
  std::size_t tile = 32;
  double macs_per_second = 1e10;

  [[nodiscard]] double op_time(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                               std::size_t out_hw, std::size_t groups = 1) const;
  [[nodiscard]] double original_time(const LayerSpec& spec) const;
  [[nodiscard]] double decomposed_time(const LayerSpec& spec, std::size_t rank, double beta) const;
};

class SyntheticTimingProvider : public TimingProvider {
 public:
  SyntheticTimingProvider(LayerSpec spec, SyntheticCostModel model, double beta);

  ProfileRecord original() override;
  ProfileRecord decomposed(std::size_t rank) override;

 private:
  LayerSpec spec_;
  SyntheticCostModel model_;
  double beta_;
};

struct RankSearchResult {
  std::optional<std::size_t> rank;  // nullopt: keep the original layer
  ProfileRecord original;
  std::vector<ProfileRecord> scanned;  // descending rank order
};

/// Scans r = r_init, r_init - step, ... >= r_min and measures t(r). With
/// dt(r) = t(r_prev) - t(r) for the previously scanned (larger) rank, picks
/// the rank with the largest dt among those faster than the original layer.
/// r_init has no larger neighbour and gets dt = 0.
/// Ties go to the smaller t(r), then the larger r.
RankSearchResult optimize_rank(std::size_t r_init, std::size_t r_min, TimingProvider& cost, std::size_t step = 1);

}  // namespace lrd
