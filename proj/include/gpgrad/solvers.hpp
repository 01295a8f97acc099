#pragma once

// Solvers for [grad K grad'] vec(Z) = vec(G):
//  - solve_woodbury: exact, via the matrix inversion lemma on the
//    Kronecker-plus-low-rank decomposition; O(N^2 D + N^6), for N < D.
//  - solve_cg: matrix-free conjugate gradients on the mvm routine; any N.
//  - solve_quadratic_analytic: the second-order polynomial kernel special
//    case whose inner system has a closed-form solution; O(N^2 D + N^3).

#include <gpgrad/gram.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

namespace gpgrad {

enum class SolverPath { Woodbury, Cg, QuadraticAnalytic };

inline const char* to_string(SolverPath p) {
  switch (p) {
    case SolverPath::Woodbury: return "woodbury";
    case SolverPath::Cg: return "cg";
    case SolverPath::QuadraticAnalytic: return "quadratic-analytic";
  }
  return "?";
}

struct SolverReport {
  SolverPath path = SolverPath::Cg;
  Index iterations = 0;
  double residual = 0;     // relative Frobenius residual, from one mvm
  double jitter_used = 0;
  double wall_ms = 0;
  bool converged = true;
  // CG working set in scalars (3 DxN iteration matrices + mvm temporaries).
  Index work_storage_doubles = 0;
  // Set by the quadratic-analytic path: residual of the closed-form check
  // Q^T + (Xt' L Xt) Q (Xt' L Xt)^-1 = T.
  double identity_residual = std::numeric_limits<double>::quiet_NaN();
};

template <class Scalar>
struct PosteriorSolution {
  MatrixX<Scalar> Z;  // D x N representer matrix
  SolverReport report;
};

enum class PathPreference { Auto, Woodbury, Cg };

template <class Scalar>
struct SolverConfig {
  Scalar rel_tolerance = Scalar(1e-6);
  Index max_iterations = -1;  // -1: D*N
  std::vector<Scalar> jitter_ladder = {Scalar(0), Scalar(1e-10), Scalar(1e-8),
                                       Scalar(1e-6)};
  PathPreference path_preference = PathPreference::Auto;
  // Optional preconditioner hook for the CG path; identity when unset.
  std::function<MatrixX<Scalar>(const MatrixX<Scalar>&)> preconditioner;

  void check() const {
    if (!(rel_tolerance > Scalar(0))) throw DomainError("solver tolerance must be > 0");
    for (size_t i = 1; i < jitter_ladder.size(); ++i)
      if (jitter_ladder[i] < jitter_ladder[i - 1])
        throw DomainError("jitter ladder must be non-decreasing");
  }
};

namespace detail {

class WallTimer {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// True transpose of the l_contract operator: R_ab = W_bb - W_ab.
template <class Scalar>
MatrixX<Scalar> lt_true(const MatrixX<Scalar>& w) {
  return -lt_contract(w);
}

template <class Scalar>
Scalar rel_frobenius(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  const Scalar nb = b.norm();
  return nb == Scalar(0) ? a.norm() : a.norm() / nb;
}

}  // namespace detail

template <class Scalar>
PosteriorSolution<Scalar> solve_woodbury(const StructuredGram<Scalar>& gram,
                                         const MatrixX<Scalar>& g,
                                         const SolverConfig<Scalar>& cfg = {}) {
  cfg.check();
  const detail::WallTimer timer;
  const Index d = gram.dim(), n = gram.count();
  if (g.rows() != d || g.cols() != n) throw DimensionError("solve_woodbury: G must be D x N");
  const bool stat = gram.stationary();

  // C is built from the k'' weights; with the stationary sign convention the
  // middle matrix of the decomposition carries +4 k'', i.e. -K''_eff. The
  // coincident diagonal uses the raw kernel limit (1/inf -> 0 is the exact
  // Woodbury limit for kernels whose k'' diverges at the origin).
  MatrixX<Scalar> cweight = stat ? MatrixX<Scalar>(-gram.kpp_eff()) : gram.kpp_eff();
  if (stat) {
    const Scalar kpp0 = eval_k_derivs(gram.spec(), Scalar(0)).kpp;
    cweight.diagonal().setConstant(4 * kpp0);
  }
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b)
      if (cweight(a, b) == Scalar(0))
        throw SingularCError("solve_woodbury: zero K'' entry makes C singular; "
                             "use the CG path");

  const MatrixX<Scalar> p = gram.xtilde().transpose() * gram.lambda_xtilde();
  auto idx = [n](Index row, Index col) { return col * n + row; };

  for (const Scalar jitter : cfg.jitter_ladder) {
    MatrixX<Scalar> kp = gram.kp_eff();
    kp.diagonal().array() += jitter;
    Eigen::FullPivLU<MatrixX<Scalar>> lu_kp(kp);
    if (!lu_kp.isInvertible()) continue;
    const MatrixX<Scalar> kp_inv = lu_kp.inverse();

    // step 1: T = U^T B^-1 vec(G)
    MatrixX<Scalar> t = gram.xtilde().transpose() * g * kp_inv;
    if (stat) t = detail::lt_true(t);

    // step 2: (C^-1 + U^T B^-1 U) vec(Q) = vec(T), as a dense N^2 system
    MatrixX<Scalar> q = MatrixX<Scalar>::Zero(n, n);
    if (t.norm() > Scalar(0)) {
      MatrixX<Scalar> inner = MatrixX<Scalar>::Zero(n * n, n * n);
      for (Index pp = 0; pp < n; ++pp)
        for (Index qq = 0; qq < n; ++qq) {
          inner(idx(pp, qq), idx(qq, pp)) += Scalar(1) / cweight(pp, qq);
          MatrixX<Scalar> y;
          if (stat) {
            y = detail::lt_true<Scalar>((p.col(qq) - p.col(pp)) * kp_inv.row(qq));
          } else {
            y = p.col(pp) * kp_inv.row(qq);
          }
          inner.col(idx(pp, qq)) += Eigen::Map<VectorX<Scalar>>(y.data(), n * n);
        }
      inner.diagonal().array() += jitter;

      Eigen::PartialPivLU<MatrixX<Scalar>> lu_inner(inner);
      const Eigen::Map<const VectorX<Scalar>> t_vec(t.data(), n * n);
      VectorX<Scalar> q_vec = lu_inner.solve(t_vec);
      if (!q_vec.allFinite() ||
          (inner * q_vec - t_vec).norm() > Scalar(1e-8) * std::max(t_vec.norm(), Scalar(1)))
        continue;  // factorization failed at this jitter level
      q = Eigen::Map<MatrixX<Scalar>>(q_vec.data(), n, n);
    }

    // step 3: Z = Lambda^-1 G (K')^-1 - Xt Q (K')^-1
    const MatrixX<Scalar> correction = stat ? detail::l_contract(q) : q;
    PosteriorSolution<Scalar> sol;
    sol.Z = gram.scale().apply_inverse(g) * kp_inv - gram.xtilde() * correction * kp_inv;
    sol.report.path = SolverPath::Woodbury;
    sol.report.jitter_used = static_cast<double>(jitter);
    sol.report.residual =
        static_cast<double>(detail::rel_frobenius<Scalar>(mvm(gram, sol.Z) - g, g));
    sol.report.wall_ms = timer.elapsed_ms();
    return sol;
  }
  throw SingularMatrixError("solve_woodbury: K' remained singular after the jitter ladder");
}

template <class Scalar>
PosteriorSolution<Scalar> solve_cg(const StructuredGram<Scalar>& gram,
                                   const MatrixX<Scalar>& g,
                                   const SolverConfig<Scalar>& cfg = {}) {
  cfg.check();
  const detail::WallTimer timer;
  const Index d = gram.dim(), n = gram.count();
  if (g.rows() != d || g.cols() != n) throw DimensionError("solve_cg: G must be D x N");
  const Index max_iters = cfg.max_iterations < 0 ? d * n : cfg.max_iterations;
  const bool precond = static_cast<bool>(cfg.preconditioner);

  PosteriorSolution<Scalar> sol;
  sol.Z = MatrixX<Scalar>::Zero(d, n);
  sol.report.path = SolverPath::Cg;
  sol.report.work_storage_doubles = 3 * d * n + 3 * n * n;

  const Scalar g_norm = g.norm();
  if (g_norm == Scalar(0)) {
    sol.report.wall_ms = timer.elapsed_ms();
    return sol;
  }

  // Work set: residual r, direction p, product q (3 DxN matrices); the mvm
  // itself uses up to 3 NxN temporaries. The final iterate is also the best
  // one in the A-norm, which CG decreases monotonically.
  MatrixX<Scalar> r = g;
  MatrixX<Scalar> p = precond ? cfg.preconditioner(r) : r;
  Scalar rho = (r.array() * p.array()).sum();
  Scalar rel = Scalar(1);

  Index it = 0;
  while (it < max_iters) {
    const MatrixX<Scalar> q = mvm(gram, p);
    const Scalar pq = (p.array() * q.array()).sum();
    if (!std::isfinite(pq))
      throw NumericalBreakdownError("solve_cg: non-finite curvature term", it);
    if (pq <= Scalar(0)) break;  // stagnation at the roundoff floor of a PSD system
    const Scalar alpha = rho / pq;
    sol.Z += alpha * p;
    r -= alpha * q;
    ++it;
    const Scalar r_norm = r.norm();
    if (!std::isfinite(r_norm))
      throw NumericalBreakdownError("solve_cg: non-finite residual", it);
    rel = r_norm / g_norm;
    if (rel <= cfg.rel_tolerance) break;
    if (precond) {
      const MatrixX<Scalar> z = cfg.preconditioner(r);
      const Scalar rho_new = (r.array() * z.array()).sum();
      p = z + (rho_new / rho) * p;
      rho = rho_new;
    } else {
      const Scalar rho_new = r.squaredNorm();
      p = r + (rho_new / rho) * p;
      rho = rho_new;
    }
  }

  sol.report.iterations = it;
  sol.report.residual = static_cast<double>(rel);
  sol.report.converged = rel <= cfg.rel_tolerance;
  sol.report.wall_ms = timer.elapsed_ms();
  return sol;
}

// Second-order polynomial kernel with a prior mean gradient g_c: the inner
// system has the closed-form solution Q = (Xt^T L Xt)^-1 (Xt^T (G - g_c)) / 2,
// so only an N x N factorization is needed.
template <class Scalar>
PosteriorSolution<Scalar> solve_quadratic_analytic(const GradientDataset<Scalar>& dataset,
                                                   const Lengthscale<Scalar>& scale,
                                                   const VectorX<Scalar>& offset = {}) {
  const detail::WallTimer timer;
  dataset.check();
  if (!dataset.grad_prior_mean)
    throw DomainError("solve_quadratic_analytic: dataset needs a prior mean gradient");
  const Index d = dataset.dim();

  auto spec = KernelSpec<Scalar>::polynomial(
      2, Metric<Scalar>::dot_product(scale, offset));
  const VectorX<Scalar> c = spec.metric.offset_for(d);
  const MatrixX<Scalar> xt = dataset.X.colwise() - c;
  const MatrixX<Scalar> gt = dataset.G.colwise() - *dataset.grad_prior_mean;

  // K' for the polynomial(2) kernel is exactly Xt^T Lambda Xt.
  const MatrixX<Scalar> kp = xt.transpose() * scale.apply(xt);
  Eigen::FullPivLU<MatrixX<Scalar>> lu(kp);
  if (!lu.isInvertible())
    throw SingularMatrixError(
        "solve_quadratic_analytic: Xt^T Lambda Xt is rank deficient "
        "(observations not independent)");
  const MatrixX<Scalar> kp_inv = lu.inverse();

  const MatrixX<Scalar> xtg = xt.transpose() * gt;  // = Xt^T A Xt for Eq.-12 targets
  const MatrixX<Scalar> t = xtg * kp_inv;
  const MatrixX<Scalar> q = Scalar(0.5) * kp_inv * xtg;

  PosteriorSolution<Scalar> sol;
  sol.Z = scale.apply_inverse(gt) * kp_inv - xt * q * kp_inv;
  sol.report.path = SolverPath::QuadraticAnalytic;
  sol.report.identity_residual = static_cast<double>(detail::rel_frobenius<Scalar>(
      q.transpose() + kp * q * kp_inv - t, t));

  auto gram = build_gram(dataset, spec);
  sol.report.residual =
      static_cast<double>(detail::rel_frobenius<Scalar>(mvm(gram, sol.Z) - gt, gt));
  sol.report.wall_ms = timer.elapsed_ms();
  return sol;
}

// Path selection: the analytic special case when it applies, the Woodbury
// route while the inner system is no larger than the ambient dimension
// (N^2 <= D), the iterative solver otherwise. A singular C on the Woodbury
// route falls back to CG.
template <class Scalar>
PosteriorSolution<Scalar> solve(const StructuredGram<Scalar>& gram,
                                const GradientDataset<Scalar>& dataset,
                                const SolverConfig<Scalar>& cfg = {}) {
  if (cfg.path_preference == PathPreference::Woodbury)
    return solve_woodbury(gram, dataset.G, cfg);
  if (cfg.path_preference == PathPreference::Cg) return solve_cg(gram, dataset.G, cfg);

  if (dataset.grad_prior_mean && gram.spec().family == KernelFamily::Polynomial &&
      gram.spec().poly_order == 2)
    return solve_quadratic_analytic(dataset, gram.spec().metric.scale,
                                    gram.spec().metric.offset);
  if (gram.count() * gram.count() <= gram.dim()) {
    try {
      return solve_woodbury(gram, dataset.G, cfg);
    } catch (const SingularCError&) {
      return solve_cg(gram, dataset.G, cfg);
    }
  }
  return solve_cg(gram, dataset.G, cfg);
}

}  // namespace gpgrad
