#pragma once

// Posterior-mean queries given the representer matrix Z: function values,
// gradients, the Hessian in diagonal-plus-rank-2N form, and the flipped
// inference that treats gradients as kernel inputs to locate the optimum.

#include <gpgrad/solvers.hpp>

#include <vector>

namespace gpgrad {

namespace detail {

// Everything a posterior query needs about one query point: kernel derivative
// vectors over the training set, the metric-specific geometry factor, the
// contraction w (dot product: Z^T Lambda xt_q; stationary: m_b), and the
// coincidence mask.
template <class Scalar>
struct QueryGeometry {
  VectorX<Scalar> kp, kpp, kppp;  // raw kernel derivatives at r(x_q, x_b)
  MatrixX<Scalar> lam_e;          // dot: Lambda Xt; stationary: Lambda (x_q 1^T - X)
  VectorX<Scalar> w;
  std::vector<char> coincident;
  bool stationary = false;
};

template <class Scalar>
QueryGeometry<Scalar> make_query_geometry(const StructuredGram<Scalar>& gram,
                                          const MatrixX<Scalar>& z,
                                          const VectorX<Scalar>& xq) {
  const Index d = gram.dim(), n = gram.count();
  if (xq.size() != d) throw DimensionError("posterior query dimension mismatch");
  if (z.rows() != d || z.cols() != n)
    throw DimensionError("posterior query: Z must be D x N");

  QueryGeometry<Scalar> q;
  q.stationary = gram.stationary();
  q.coincident.assign(n, 0);
  VectorX<Scalar> r(n);

  if (!q.stationary) {
    const VectorX<Scalar> xtq = xq - gram.spec().metric.offset_for(d);
    const VectorX<Scalar> lam_xtq = gram.scale().apply(xtq);
    r = gram.xtilde().transpose() * lam_xtq;
    q.w = z.transpose() * lam_xtq;
    q.lam_e = gram.lambda_xtilde();
    const Scalar rqq = xtq.dot(lam_xtq);
    for (Index b = 0; b < n; ++b) {
      const Scalar rbb = gram.xtilde().col(b).dot(gram.lambda_xtilde().col(b));
      if (rqq + rbb - 2 * r[b] <= Scalar(kDuplicateTol)) q.coincident[b] = 1;
    }
  } else {
    const MatrixX<Scalar> e = (-gram.xtilde()).colwise() + xq;
    q.lam_e = gram.scale().apply(e);
    r = (e.array() * q.lam_e.array()).colwise().sum().cwiseMax(Scalar(0));
    q.w = (z.array() * q.lam_e.array()).colwise().sum();
    for (Index b = 0; b < n; ++b)
      if (r[b] <= Scalar(kDuplicateTol)) q.coincident[b] = 1;
  }

  q.kp.resize(n);
  q.kpp.resize(n);
  q.kppp.resize(n);
  for (Index b = 0; b < n; ++b) {
    const auto kd = eval_k_derivs(gram.spec(), r[b]);
    q.kp[b] = kd.kp;
    q.kpp[b] = kd.kpp;
    q.kppp[b] = kd.kppp;
  }
  return q;
}

// Posterior mean gradient without the prior term.
template <class Scalar>
VectorX<Scalar> gradient_contraction(const StructuredGram<Scalar>& gram,
                                     const MatrixX<Scalar>& z,
                                     const QueryGeometry<Scalar>& q) {
  const Index n = gram.count();
  const Scalar s1 = q.stationary ? Scalar(-2) : Scalar(1);
  const Scalar s2 = q.stationary ? Scalar(-4) : Scalar(1);
  VectorX<Scalar> second = s2 * q.kpp.cwiseProduct(q.w);
  if (q.stationary) {
    // the geometric column is exactly zero at a coincident point; force the
    // 0 * inf products of diverging kernels to their zero limit
    for (Index b = 0; b < n; ++b)
      if (q.coincident[b]) second[b] = Scalar(0);
  }
  return gram.scale().apply(z * (s1 * q.kp)) + q.lam_e * second;
}

}  // namespace detail

template <class Scalar>
Scalar infer_function(const StructuredGram<Scalar>& gram, const MatrixX<Scalar>& z,
                      const VectorX<Scalar>& xq, Scalar prior_mean = Scalar(0)) {
  const auto q = detail::make_query_geometry(gram, z, xq);
  const Scalar s1 = q.stationary ? Scalar(-2) : Scalar(1);
  return prior_mean + s1 * q.kp.dot(q.w);
}

template <class Scalar>
VectorX<Scalar> infer_gradient(const StructuredGram<Scalar>& gram,
                               const MatrixX<Scalar>& z, const VectorX<Scalar>& xq,
                               const VectorX<Scalar>& prior_grad = {}) {
  const auto q = detail::make_query_geometry(gram, z, xq);
  VectorX<Scalar> out = detail::gradient_contraction(gram, z, q);
  if (prior_grad.size()) {
    if (prior_grad.size() != out.size())
      throw DimensionError("prior gradient dimension mismatch");
    out += prior_grad;
  }
  return out;
}

template <class Scalar>
VectorX<Scalar> infer_function_batch(const StructuredGram<Scalar>& gram,
                                     const MatrixX<Scalar>& z,
                                     const MatrixX<Scalar>& queries,
                                     Scalar prior_mean = Scalar(0)) {
  VectorX<Scalar> out(queries.cols());
  for (Index i = 0; i < queries.cols(); ++i)
    out[i] = infer_function(gram, z, VectorX<Scalar>(queries.col(i)), prior_mean);
  return out;
}

template <class Scalar>
MatrixX<Scalar> infer_gradient_batch(const StructuredGram<Scalar>& gram,
                                     const MatrixX<Scalar>& z,
                                     const MatrixX<Scalar>& queries) {
  MatrixX<Scalar> out(queries.rows(), queries.cols());
  for (Index i = 0; i < queries.cols(); ++i)
    out.col(i) = infer_gradient(gram, z, VectorX<Scalar>(queries.col(i)));
  return out;
}

// Posterior mean of the Hessian as  H = diag_scale * Lambda + F W F^T  with
// F = [Lambda Xt, Lambda Z] and W = [[diag(m), diag(m_hat)], [diag(m_hat), 0]].
template <class Scalar>
struct LowRankHessian {
  Scalar diag_scale = Scalar(0);
  Lengthscale<Scalar> scale;
  MatrixX<Scalar> factor;  // D x 2N
  VectorX<Scalar> m_diag, m_hat;

  Index dim() const { return factor.rows(); }
  Index count() const { return m_diag.size(); }

  MatrixX<Scalar> middle() const {
    const Index n = count();
    MatrixX<Scalar> w = MatrixX<Scalar>::Zero(2 * n, 2 * n);
    w.topLeftCorner(n, n).diagonal() = m_diag;
    w.topRightCorner(n, n).diagonal() = m_hat;
    w.bottomLeftCorner(n, n).diagonal() = m_hat;
    return w;
  }

  MatrixX<Scalar> to_dense() const {
    return diag_scale * scale.to_dense(dim()) + factor * middle() * factor.transpose();
  }

  VectorX<Scalar> apply(const VectorX<Scalar>& v) const {
    return diag_scale * scale.apply(v) + factor * (middle() * (factor.transpose() * v));
  }
};

template <class Scalar>
LowRankHessian<Scalar> infer_hessian(const StructuredGram<Scalar>& gram,
                                     const MatrixX<Scalar>& z,
                                     const VectorX<Scalar>& xq) {
  const Index d = gram.dim(), n = gram.count();
  const auto q = detail::make_query_geometry(gram, z, xq);

  LowRankHessian<Scalar> h;
  h.scale = gram.scale();
  h.factor.resize(d, 2 * n);
  h.factor.leftCols(n) = q.lam_e;
  h.factor.rightCols(n) = gram.scale().apply(z);

  if (!q.stationary) {
    h.m_diag = q.kppp.cwiseProduct(q.w);
    h.m_hat = q.kpp;
    h.diag_scale = Scalar(0);
    for (Index b = 0; b < n; ++b)
      if (q.coincident[b]) h.diag_scale += q.kpp[b] * q.w[b];
  } else {
    h.m_diag = Scalar(-8) * q.kppp.cwiseProduct(q.w);
    h.m_hat = Scalar(-4) * q.kpp;
    h.diag_scale = Scalar(0);
    for (Index b = 0; b < n; ++b) {
      if (q.coincident[b]) {
        // zero geometric factor; clear the 0 * inf forms of diverging kernels
        h.m_diag[b] = Scalar(0);
        h.m_hat[b] = Scalar(0);
        continue;
      }
      h.diag_scale += Scalar(-4) * q.kpp[b] * q.w[b];
    }
  }
  return h;
}

// H^-1 g through the matrix inversion lemma on the diagonal-plus-rank-2N
// structure, in the variant that avoids inverting the (singular) middle
// block:  x = D^-1 (g - F y),  (I + W F^T D^-1 F) y = W F^T D^-1 g.
template <class Scalar>
VectorX<Scalar> hessian_solve(const LowRankHessian<Scalar>& h, const VectorX<Scalar>& g,
                              const std::vector<Scalar>& damping_ladder =
                                  {Scalar(0), Scalar(1e-10), Scalar(1e-8), Scalar(1e-6)}) {
  const Index d = h.dim(), n2 = 2 * h.count();
  if (g.size() != d) throw DimensionError("hessian_solve: dimension mismatch");
  if (h.scale.kind() == LengthscaleKind::Dense)
    throw DomainError("hessian_solve requires a diagonal or isotropic Lambda");

  const VectorX<Scalar> lam_diag = h.scale.to_dense(d).diagonal();
  const MatrixX<Scalar> w = h.middle();

  for (const Scalar delta : damping_ladder) {
    const VectorX<Scalar> dd = (h.diag_scale * lam_diag).array() + delta;
    if ((dd.cwiseAbs().array() < Scalar(1e-300)).any()) continue;
    const VectorX<Scalar> dinv = dd.cwiseInverse();
    const MatrixX<Scalar> dinv_f = dinv.asDiagonal() * h.factor;
    const MatrixX<Scalar> inner =
        MatrixX<Scalar>::Identity(n2, n2) + w * (h.factor.transpose() * dinv_f);
    Eigen::PartialPivLU<MatrixX<Scalar>> lu(inner);
    const VectorX<Scalar> rhs = w * (dinv_f.transpose() * g);
    const VectorX<Scalar> y = lu.solve(rhs);
    if (!y.allFinite() ||
        (inner * y - rhs).norm() > Scalar(1e-8) * std::max(rhs.norm(), Scalar(1)))
      continue;
    VectorX<Scalar> x = dinv.asDiagonal() * (g - h.factor * y);
    if (!x.allFinite()) continue;
    return x;
  }
  throw SingularMatrixError("hessian_solve: singular after the damping ladder");
}

// Flipped inference of the optimum (gradients become kernel inputs, positions
// become observations, the prior mean is the current iterate). Returns the
// posterior mean location of the query gradient, by default g = 0.
template <class Scalar>
VectorX<Scalar> infer_optimum(const VectorX<Scalar>& current, const MatrixX<Scalar>& x,
                              const MatrixX<Scalar>& g,
                              const KernelSpec<Scalar>& spec_flipped,
                              const SolverConfig<Scalar>& cfg = {},
                              const VectorX<Scalar>& query_gradient = {}) {
  GradientDataset<Scalar> flipped;
  flipped.X = g;
  flipped.G = x.colwise() - current;
  auto gram = build_gram(flipped, spec_flipped);
  auto sol = solve(gram, flipped, cfg);
  const VectorX<Scalar> gq = query_gradient.size()
                                 ? query_gradient
                                 : VectorX<Scalar>::Zero(current.size()).eval();
  const auto geom = detail::make_query_geometry(gram, sol.Z, gq);
  return current + detail::gradient_contraction(gram, sol.Z, geom);
}

// Closed-form flipped inference for quadratic targets: polynomial(2) kernel
// over gradients with offset c = g_m and prior mean x_m, so the N x N matrix
// Gt^T Lambda Gt is the only factorization required.
template <class Scalar>
VectorX<Scalar> infer_optimum_quadratic(const VectorX<Scalar>& x_m,
                                        const VectorX<Scalar>& g_m,
                                        const MatrixX<Scalar>& x, const MatrixX<Scalar>& g,
                                        const Lengthscale<Scalar>& scale,
                                        const VectorX<Scalar>& query_gradient = {}) {
  const Index d = x.rows();
  if (g.rows() != d || g.cols() != x.cols())
    throw DimensionError("infer_optimum_quadratic: X and G must both be D x N");
  MatrixX<Scalar> xt = x.colwise() - x_m;
  MatrixX<Scalar> gt = g.colwise() - g_m;

  // Column scales cancel between Z and the query contraction; normalizing the
  // centered gradients keeps Gt^T Lambda Gt conditioned by subspace angles
  // rather than by the (wildly different) gradient magnitudes an optimization
  // run produces.
  for (Index b = 0; b < gt.cols(); ++b) {
    const Scalar s = gt.col(b).norm();
    if (s > Scalar(0)) {
      gt.col(b) /= s;
      xt.col(b) /= s;
    }
  }

  const MatrixX<Scalar> lam_gt = scale.apply(gt);
  const MatrixX<Scalar> kp = gt.transpose() * lam_gt;
  Eigen::FullPivLU<MatrixX<Scalar>> lu(kp);
  if (!lu.isInvertible())
    throw SingularMatrixError(
        "infer_optimum_quadratic: Gt^T Lambda Gt is rank deficient");
  const MatrixX<Scalar> kp_inv = lu.inverse();
  const MatrixX<Scalar> z =
      scale.apply_inverse(xt) * kp_inv -
      Scalar(0.5) * gt * kp_inv * (gt.transpose() * xt) * kp_inv;

  const VectorX<Scalar> gq =
      query_gradient.size() ? query_gradient : VectorX<Scalar>::Zero(d).eval();
  const VectorX<Scalar> gtq = scale.apply(VectorX<Scalar>(gq - g_m));
  return x_m + scale.apply(VectorX<Scalar>(z * (gt.transpose() * gtq))) +
         lam_gt * (z.transpose() * gtq);
}

}  // namespace gpgrad
