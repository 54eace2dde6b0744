#include "lrd/transforms.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace lrd {

namespace {

constexpr double kOrthonormalTol = 1e-10;

bool has_orthonormal_columns(const Matrix& m) {
  const Matrix gram = m.transpose() * m;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= kOrthonormalTol;
}

// (m^T m)^{-1} m^T, refusing rank-deficient m.
Matrix left_pseudo_inverse(const Matrix& m, const char* what) {
  const Matrix gram = m.transpose() * m;
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) throw NumericalError(std::string(what) + ": singular normal equations");
  return lu.solve(m.transpose());
}

bool mergeable_link(const LayerSpec& l, const MergeOptions& options) {
  return l.link == Link::direct || (l.link == Link::foldable && options.fold_activations);
}

bool is_merge_candidate(const PlanEntry& e) {
  const LayerSpec& l = e.spec;
  return l.kind == LayerKind::conv && l.is_pointwise() && l.groups == 1 && !l.shortcut && l.padding == 0 &&
         !l.has_bias &&
         (std::holds_alternative<SvdDecision>(e.decision) || std::holds_alternative<PassthroughDecision>(e.decision));
}

}  // namespace

Matrix merge_1x1(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("merge_1x1: inner dims " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()) +
                         " differ");
  }
  return a * b;
}

CompressionPlan merge_plan(const CompressionPlan& plan, const MergeOptions& options) {
  CompressionPlan out = plan;
  out.transform = "merge";
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < out.entries.size(); ++i) by_name[out.entries[i].spec.name] = i;

  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    PlanEntry& t = out.entries[i];
    if (!std::holds_alternative<TuckerDecision>(t.decision) || t.spec.shortcut) continue;

    for (auto& p : out.entries) {
      if (p.spec.next != t.spec.name || !is_merge_candidate(p)) continue;
      if (!mergeable_link(p.spec, options)) {
        p.warnings.push_back("not merged into " + t.spec.name + ": nonlinearity in between");
        continue;
      }
      if (p.spec.link == Link::foldable) p.warnings.push_back("activation before " + t.spec.name + " removed");
      p.decision = MergedDecision{t.spec.name};
      t.transforms.absorbs_prev = p.spec;
      break;
    }

    const auto next = by_name.find(t.spec.next);
    if (next == by_name.end()) continue;
    PlanEntry& n = out.entries[next->second];
    if (!is_merge_candidate(n)) continue;
    if (!mergeable_link(t.spec, options)) {
      n.warnings.push_back("not merged into " + t.spec.name + ": nonlinearity in between");
      continue;
    }
    if (t.spec.link == Link::foldable) n.warnings.push_back("activation after " + t.spec.name + " removed");
    n.decision = MergedDecision{t.spec.name};
    t.transforms.absorbs_next = n.spec;
  }

  for (auto& e : out.entries) {
    if (std::holds_alternative<SvdDecision>(e.decision) && !e.spec.shortcut) {
      e.decision = PassthroughDecision{};
      e.warnings.push_back("svd pair collapsed to keep the original depth");
    }
  }
  recompute_totals(out);
  return out;
}

TuckerFactors freeze_and_refit(const Tensor4& w, const TuckerFactors& f, const FreezeMask& frozen) {
  if (!frozen.first || !frozen.last) {
    throw std::invalid_argument("freeze_and_refit: only the core is refit, first and last must be frozen");
  }
  const Dims4& d = w.dims();
  if (static_cast<std::size_t>(f.first.rows()) != d.in || static_cast<std::size_t>(f.last.cols()) != d.out ||
      f.core.dims().kh != d.kh || f.core.dims().kw != d.kw) {
    throw DimensionError("freeze_and_refit: factors do not match the weight shape");
  }
  TuckerFactors out{f.first, Tensor4{}, f.last};
  if (has_orthonormal_columns(f.first) && has_orthonormal_columns(f.last.transpose())) {
    out.core = project_core(w, f.first, f.last);
  } else {
    const Matrix first_pinv = left_pseudo_inverse(f.first, "freeze_and_refit");
    const Matrix last_pinv = left_pseudo_inverse(f.last.transpose(), "freeze_and_refit");
    out.core = mode_product(mode_product(w, first_pinv, Mode::in), last_pinv, Mode::out);
  }
  return out;
}

SvdFactors freeze_and_refit(const Matrix& w, const SvdFactors& f) {
  if (f.w0.rows() != w.rows() || f.w1.cols() != w.cols()) {
    throw DimensionError("freeze_and_refit: factors do not match the weight shape");
  }
  return SvdFactors{f.w0, left_pseudo_inverse(f.w0, "freeze_and_refit") * w};
}

CompressionPlan freeze_plan(const CompressionPlan& plan) {
  CompressionPlan out = plan;
  out.transform = "freeze";
  for (auto& e : out.entries) {
    if (std::holds_alternative<SvdDecision>(e.decision)) {
      e.transforms.frozen = {true, false};
    } else if (std::holds_alternative<TuckerDecision>(e.decision)) {
      e.transforms.frozen = {true, false, true};
    }
  }
  recompute_totals(out);
  return out;
}

std::size_t BranchedTucker::branch_r1() const {
  return branches.empty() ? 0 : static_cast<std::size_t>(branches.front().first.cols());
}

std::size_t BranchedTucker::branch_r2() const {
  return branches.empty() ? 0 : static_cast<std::size_t>(branches.front().last.rows());
}

std::size_t quantize_rank(std::size_t r, std::size_t n, std::size_t limit) {
  if (n < 1) throw RankError("branch count must be >= 1");
  const std::size_t up = (r + n - 1) / n * n;
  if (up <= limit) return up;
  const std::size_t down = r / n * n;
  if (down >= n) return down;
  throw RankError("rank " + std::to_string(r) + " cannot be quantized to a multiple of " + std::to_string(n) +
                  " within " + std::to_string(limit));
}

BranchedTucker branch_tucker(const TuckerFactors& f, std::size_t n) {
  const std::size_t r1 = f.r1();
  const std::size_t r2 = f.r2();
  if (n < 1 || r1 % n != 0 || r2 % n != 0) {
    throw RankError("branch_tucker: " + std::to_string(n) + " branches do not divide ranks (" + std::to_string(r1) +
                    ", " + std::to_string(r2) + ")");
  }
  const std::size_t b1 = r1 / n;
  const std::size_t b2 = r2 / n;
  const Dims4& cd = f.core.dims();
  BranchedTucker out;
  out.branches.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    TuckerBranch br;
    br.first = f.first.middleCols(static_cast<Eigen::Index>(j * b1), static_cast<Eigen::Index>(b1));
    br.last = f.last.middleRows(static_cast<Eigen::Index>(j * b2), static_cast<Eigen::Index>(b2));
    br.core = Tensor4(Dims4{b1, b2, cd.kh, cd.kw});
    for (std::size_t a = 0; a < b1; ++a)
      for (std::size_t b = 0; b < b2; ++b)
        for (std::size_t i = 0; i < cd.kh; ++i)
          for (std::size_t q = 0; q < cd.kw; ++q) br.core(a, b, i, q) = f.core(j * b1 + a, j * b2 + b, i, q);
    out.branches.push_back(std::move(br));
  }
  return out;
}

double offdiagonal_core_norm(const TuckerFactors& f, std::size_t n) {
  const Dims4 d = f.core.dims();
  if (n == 0 || d.in % n != 0 || d.out % n != 0) throw RankError("branch count " + std::to_string(n) + " does not divide ranks");
  const std::size_t b1 = d.in / n;
  const std::size_t b2 = d.out / n;
  double sum = 0.0;
  for (std::size_t a = 0; a < d.in; ++a)
    for (std::size_t c = 0; c < d.out; ++c) {
      if (a / b1 == c / b2) continue;
      for (std::size_t i = 0; i < d.kh; ++i)
        for (std::size_t j = 0; j < d.kw; ++j) sum += f.core(a, c, i, j) * f.core(a, c, i, j);
    }
  return std::sqrt(sum);
}

Tensor4 reconstruct(const BranchedTucker& b) {
  if (b.branches.empty()) throw DimensionError("reconstruct: no branches");
  Tensor4 sum;
  for (const auto& br : b.branches) {
    Tensor4 part = reconstruct(TuckerFactors{br.first, br.core, br.last});
    if (sum.dims().size() == 0) {
      sum = std::move(part);
      continue;
    }
    auto dst = sum.data();
    const auto src = part.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return sum;
}

GroupedConvStack branched_to_grouped(const BranchedTucker& b) {
  const std::size_t n = b.count();
  if (n == 0) throw DimensionError("branched_to_grouped: no branches");
  const std::size_t b1 = b.branch_r1();
  const std::size_t b2 = b.branch_r2();
  const Dims4 cd = b.branches.front().core.dims();
  const auto c = b.branches.front().first.rows();
  const auto s = b.branches.front().last.cols();

  GroupedConvStack g;
  g.groups = n;
  g.first = Matrix(c, static_cast<Eigen::Index>(n * b1));
  g.last = Matrix(static_cast<Eigen::Index>(n * b2), s);
  g.core = Tensor4(Dims4{b1, n * b2, cd.kh, cd.kw});
  for (std::size_t j = 0; j < n; ++j) {
    const TuckerBranch& br = b.branches[j];
    if (static_cast<std::size_t>(br.first.cols()) != b1 || static_cast<std::size_t>(br.last.rows()) != b2 ||
        br.core.dims() != Dims4{b1, b2, cd.kh, cd.kw}) {
      throw DimensionError("branched_to_grouped: branches differ in shape");
    }
    g.first.middleCols(static_cast<Eigen::Index>(j * b1), static_cast<Eigen::Index>(b1)) = br.first;
    g.last.middleRows(static_cast<Eigen::Index>(j * b2), static_cast<Eigen::Index>(b2)) = br.last;
    for (std::size_t a = 0; a < b1; ++a)
      for (std::size_t q = 0; q < b2; ++q)
        for (std::size_t i = 0; i < cd.kh; ++i)
          for (std::size_t k = 0; k < cd.kw; ++k) g.core(a, j * b2 + q, i, k) = br.core(a, q, i, k);
  }
  return g;
}

CompressionPlan branch_plan(const CompressionPlan& plan, std::size_t n) {
  if (n < 1) throw std::invalid_argument("branch_plan: branch count must be >= 1");
  CompressionPlan out = plan;
  out.transform = "branch:" + std::to_string(n);
  for (auto& e : out.entries) {
    auto* t = std::get_if<TuckerDecision>(&e.decision);
    if (t == nullptr) continue;
    try {
      const std::size_t r1 = quantize_rank(t->r1, n, e.spec.in_channels);
      const std::size_t r2 = quantize_rank(t->r2, n, e.spec.out_channels);
      t->r1 = r1;
      t->r2 = r2;
      e.transforms.branches = n;
    } catch (const RankError& err) {
      e.warnings.push_back(std::string("not branched: ") + err.what());
    }
  }
  recompute_totals(out);
  return out;
}

}  // namespace lrd
