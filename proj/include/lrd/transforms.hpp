#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "lrd/decompose.hpp"
#include "lrd/planner.hpp"

namespace lrd {

// ---------------------------------------------------------------------------
// Layer merging

/// Two 1x1 layers with nothing nonlinear between them: a (C x R) then b (R x S).
Matrix merge_1x1(const Matrix& a, const Matrix& b);

struct MergeOptions {
  /// Merge across activations the model marks foldable. The merged network is
  /// then a different function and needs fine-tuning; plain links always merge.
  bool fold_activations = true;
};

/// Folds each 1x1 layer feeding a Tucker first factor, and each 1x1 layer fed
/// by a Tucker last factor, into that factor. SVD pairs left on the main path
/// are collapsed back into single layers so the counted depth matches the
/// original model; shortcut projections keep their decisions.
CompressionPlan merge_plan(const CompressionPlan& plan, const MergeOptions& options = {});

// ---------------------------------------------------------------------------
// Freezing

struct FreezeMask {
  bool first = true;
  bool last = true;
};

/// Keeps first/last and refits the core by least squares against w.
/// Orthonormal factors use the projection W x_C first^T x_S last; otherwise
/// the normal equations are solved. Throws NumericalError if they are singular.
TuckerFactors freeze_and_refit(const Tensor4& w, const TuckerFactors& f, const FreezeMask& frozen = {});

/// SVD analogue: keeps w0 and refits w1 = pinv(w0) * w.
SvdFactors freeze_and_refit(const Matrix& w, const SvdFactors& f);

CompressionPlan freeze_plan(const CompressionPlan& plan);

// ---------------------------------------------------------------------------
// Branching

struct TuckerBranch {
  Matrix first;  // C x R1
  Tensor4 core;  // R1 x R2 x k x k
  Matrix last;   // R2 x S
};

struct BranchedTucker {
  std::vector<TuckerBranch> branches;

  [[nodiscard]] std::size_t count() const { return branches.size(); }
  [[nodiscard]] std::size_t branch_r1() const;
  [[nodiscard]] std::size_t branch_r2() const;
};

/// r rounded up to a multiple of n, or down when up would exceed `limit`.
/// Throws RankError when neither is possible.
std::size_t quantize_rank(std::size_t r, std::size_t n, std::size_t limit);

/// Splits the rank space into n contiguous blocks, branch j taking columns
/// [j R1, (j+1) R1) of first, rows [j R2, (j+1) R2) of last, and the matching
/// diagonal block of the core. Requires n to divide both ranks.
///
/// The branch sum equals the Tucker reconstruction when the core's
/// off-diagonal blocks vanish; see offdiagonal_core_norm.
BranchedTucker branch_tucker(const TuckerFactors& f, std::size_t n);

/// Frobenius norm of the core blocks coupling different branches. For
/// orthonormal first/last this is exactly ||reconstruct(f) - sum of branches||_F.
double offdiagonal_core_norm(const TuckerFactors& f, std::size_t n);

Tensor4 reconstruct(const BranchedTucker& b);

/// Branches laid side by side: first_j concatenated by columns, last_j by
/// rows, cores as the n groups of a grouped convolution.
struct GroupedConvStack {
  Matrix first;  // C x (n R1)
  Tensor4 core;  // R1 x (n R2) x k x k, grouped layout for `groups` groups
  Matrix last;   // (n R2) x S
  std::size_t groups = 1;

  [[nodiscard]] std::size_t core_param_count() const { return core.dims().size(); }
  [[nodiscard]] std::size_t param_count() const {
    return static_cast<std::size_t>(first.size() + last.size()) + core_param_count();
  }
};

GroupedConvStack branched_to_grouped(const BranchedTucker& b);

CompressionPlan branch_plan(const CompressionPlan& plan, std::size_t n);

}  // namespace lrd
