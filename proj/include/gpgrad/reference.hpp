#pragma once

// Brute-force oracles for tests and the selftest command. Dense, slow, and
// deliberately independent of the structured code paths in gram/solvers:
// everything here is built from plain kernel evaluations and dense factorizations.

#include <gpgrad/kernels.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace gpgrad {

struct OracleReport {
  std::string label;
  double fast_value = 0;
  double oracle_value = 0;
  double rel_error = 0;
  double tolerance = 0;
  bool pass = false;
};

inline OracleReport make_report(const std::string& label, double fast, double oracle,
                                double tol) {
  OracleReport r;
  r.label = label;
  r.fast_value = fast;
  r.oracle_value = oracle;
  r.rel_error = std::abs(fast - oracle) / std::max(std::abs(oracle), 1e-30);
  r.tolerance = tol;
  r.pass = r.rel_error <= tol;
  return r;
}

// Relative error with the matrix norms as magnitudes.
template <class DA, class DB>
double rel_error(const Eigen::MatrixBase<DA>& fast, const Eigen::MatrixBase<DB>& oracle) {
  return (fast - oracle).norm() / std::max(oracle.norm(), 1e-30);
}

// Central finite differences of a scalar function, for validating analytic
// derivative chains f -> f'.
template <class F>
double fd_scalar_derivative(F&& f, double r, double h = 1e-5) {
  return (f(r + h) - f(r - h)) / (2 * h);
}

// D x D block of second cross derivatives d_a^i d_b^j k(x_a, x_b) by central
// differences of plain kernel evaluations.
template <class Scalar>
MatrixX<Scalar> fd_kernel_hessian(const KernelSpec<Scalar>& spec, const VectorX<Scalar>& xa,
                                  const VectorX<Scalar>& xb, Scalar h = Scalar(1e-5)) {
  const Index d = xa.size();
  MatrixX<Scalar> out(d, d);
  VectorX<Scalar> a = xa, b = xb;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      a = xa;
      b = xb;
      a[i] += h; b[j] += h;
      const Scalar kpp = eval_kernel(spec, a, b);
      b[j] -= 2 * h;
      const Scalar kpm = eval_kernel(spec, a, b);
      a[i] -= 2 * h;
      const Scalar kmm = eval_kernel(spec, a, b);
      b[j] += 2 * h;
      const Scalar kmp = eval_kernel(spec, a, b);
      out(i, j) = (kpp - kpm - kmp + kmm) / (4 * h * h);
    }
  return out;
}

// Richardson pair 2 F(h/2) - F(h) of the central-difference block above.
// Needed at coincident Matern 3/2 blocks: that kernel carries an r^(3/2)
// term, so the plain quotient converges only O(h) at the cusp; the
// extrapolation cancels the linear term.
template <class Scalar>
MatrixX<Scalar> fd_kernel_hessian_richardson(const KernelSpec<Scalar>& spec,
                                             const VectorX<Scalar>& xa,
                                             const VectorX<Scalar>& xb,
                                             Scalar h = Scalar(1e-4)) {
  return 2 * fd_kernel_hessian(spec, xa, xb, h / 2) - fd_kernel_hessian(spec, xa, xb, h);
}

// d_b^l k(x_a, x_b) by central differences in the second argument.
template <class Scalar>
VectorX<Scalar> fd_kernel_grad_b(const KernelSpec<Scalar>& spec, const VectorX<Scalar>& xa,
                                 const VectorX<Scalar>& xb, Scalar h = Scalar(1e-6)) {
  const Index d = xb.size();
  VectorX<Scalar> out(d);
  VectorX<Scalar> b = xb;
  for (Index l = 0; l < d; ++l) {
    b = xb;
    b[l] += h;
    const Scalar kp = eval_kernel(spec, xa, b);
    b[l] -= 2 * h;
    const Scalar km = eval_kernel(spec, xa, b);
    out[l] = (kp - km) / (2 * h);
  }
  return out;
}

// Dense factorization solve of [grad K grad'] vec(Z) = vec(G) given the
// explicit Gram matrix. Symmetric indefinite-capable pivoting via LDLT with
// a residual check.
template <class Scalar>
MatrixX<Scalar> dense_solve_oracle(const MatrixX<Scalar>& dense_gram,
                                   const MatrixX<Scalar>& g) {
  const Index dn = dense_gram.rows();
  if (dense_gram.cols() != dn || g.size() != dn)
    throw DimensionError("dense_solve_oracle: shape mismatch");
  Eigen::Map<const VectorX<Scalar>> rhs(g.data(), dn);
  Eigen::LDLT<MatrixX<Scalar>> ldlt(dense_gram);
  VectorX<Scalar> z = ldlt.solve(rhs);
  const Scalar denom = std::max(rhs.norm(), Scalar(1e-30));
  if (!z.allFinite() || (dense_gram * z - rhs).norm() / denom > Scalar(1e-6))
    throw SingularMatrixError("dense_solve_oracle: singular dense Gram");
  MatrixX<Scalar> out(g.rows(), g.cols());
  Eigen::Map<VectorX<Scalar>>(out.data(), dn) = z;
  return out;
}

// D x D cross-covariance block d_q^i d_b^l k(x_q, x_b), assembled entrywise
// from the r-derivative chain (independent of the effective-coefficient
// machinery in gram).
template <class Scalar>
MatrixX<Scalar> dense_cross_gradient_block(const KernelSpec<Scalar>& spec,
                                           const VectorX<Scalar>& xq,
                                           const VectorX<Scalar>& xb) {
  const Index d = xq.size();
  const MatrixX<Scalar> lambda = spec.metric.scale.to_dense(d);
  const Scalar r = eval_r(spec.metric, xq, xb);
  const auto kd = eval_k_derivs(spec, r);
  if (spec.metric.form == MetricForm::DotProduct) {
    const VectorX<Scalar> c = spec.metric.offset_for(d);
    const VectorX<Scalar> dq = lambda * (xb - c);
    const VectorX<Scalar> db = lambda * (xq - c);
    return kd.kp * lambda + kd.kpp * dq * db.transpose();
  }
  MatrixX<Scalar> out = Scalar(-2) * kd.kp * lambda;
  if (r > Scalar(detail::kDuplicateTol)) {
    const VectorX<Scalar> diff = lambda * (xq - xb);
    out -= Scalar(4) * kd.kpp * diff * diff.transpose();
  }
  return out;
}

// Minimum-norm solve of a (possibly singular, consistent) dense Gram system
// by thresholded SVD. Gradient Grams of polynomial kernels are genuinely rank
// deficient for N >= 2: the quadratic kernel's gradient features span only
// DN - N(N-1)/2 dimensions, so representers are unique modulo the null space.
template <class Scalar>
MatrixX<Scalar> dense_minnorm_solve(const MatrixX<Scalar>& dense_gram,
                                    const MatrixX<Scalar>& g,
                                    Scalar threshold = Scalar(1e-10)) {
  const Index dn = dense_gram.rows();
  Eigen::Map<const VectorX<Scalar>> rhs(g.data(), dn);
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(dense_gram,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(threshold);
  VectorX<Scalar> z = svd.solve(rhs);
  MatrixX<Scalar> out(g.rows(), g.cols());
  Eigen::Map<VectorX<Scalar>>(out.data(), dn) = z;
  return out;
}

// Relative difference of two representer matrices measured in the range of
// the Gram: solutions of a consistent singular system agree there, and only
// the range component enters any posterior mean.
template <class Scalar>
Scalar range_rel_error(const MatrixX<Scalar>& dense_gram, const MatrixX<Scalar>& z1,
                       const MatrixX<Scalar>& z2, Scalar eig_tol = Scalar(1e-10)) {
  const Index dn = dense_gram.rows();
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(dense_gram);
  const Scalar cutoff = eig_tol * es.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::Map<const VectorX<Scalar>> v1(z1.data(), dn), v2(z2.data(), dn);
  Scalar diff2 = 0, ref2 = 0;
  for (Index i = 0; i < dn; ++i) {
    if (es.eigenvalues()[i] <= cutoff) continue;
    const Scalar c1 = es.eigenvectors().col(i).dot(v1);
    const Scalar c2 = es.eigenvectors().col(i).dot(v2);
    diff2 += (c1 - c2) * (c1 - c2);
    ref2 += c2 * c2;
  }
  return std::sqrt(diff2) / std::max(std::sqrt(ref2), Scalar(1e-30));
}

// Third-derivative tensor d_q^i d_q^j d_b^l k(x_q, x_b), assembled entry by
// entry from the r-derivative chain
//   k''' (d_q r)_i (d_q r)_j (d_b r)_l
//   + k''[ (d_q d_q r)_ij (d_b r)_l + (d_q r)_j (d_q d_b r)_il
//          + (d_q r)_i (d_q d_b r)_jl ]
// (third derivatives of r vanish for both metrics). For the dot product
// metric d_q d_q r vanishes for distinct points and is Lambda when the query
// coincides with the data point (coincidence measured with the duplicate
// tolerance); for stationary metrics it is 2 Lambda and d_q d_b r = -2 Lambda.
// Returned as D matrices of size D x D indexed by l.
template <class Scalar>
std::vector<MatrixX<Scalar>> third_derivative_tensor(const KernelSpec<Scalar>& spec,
                                                     const VectorX<Scalar>& xq,
                                                     const VectorX<Scalar>& xb) {
  const Index d = xq.size();
  if (d > 10) throw DomainError("third_derivative_tensor: D capped at 10");
  const MatrixX<Scalar> lambda = spec.metric.scale.to_dense(d);
  const Scalar r = eval_r(spec.metric, xq, xb);
  const auto kd = eval_k_derivs(spec, r);

  VectorX<Scalar> dq, db;
  MatrixX<Scalar> dqq, dqb;
  if (spec.metric.form == MetricForm::DotProduct) {
    const VectorX<Scalar> c = spec.metric.offset_for(d);
    dq = lambda * (xb - c);
    db = lambda * (xq - c);
    dqb = lambda;
    const Scalar rq = eval_r(spec.metric, xq, xq);
    const Scalar rb = eval_r(spec.metric, xb, xb);
    const bool coincident = rq + rb - 2 * r <= Scalar(detail::kDuplicateTol);
    dqq = coincident ? lambda : MatrixX<Scalar>::Zero(d, d).eval();
  } else {
    const VectorX<Scalar> diff = lambda * (xq - xb);
    dq = 2 * diff;
    db = -2 * diff;
    dqq = 2 * lambda;
    dqb = -2 * lambda;
  }

  std::vector<MatrixX<Scalar>> tensor(d, MatrixX<Scalar>(d, d));
  for (Index l = 0; l < d; ++l)
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        tensor[l](i, j) = kd.kpp * (dqq(i, j) * db[l] + dq[j] * dqb(i, l) +
                                    dq[i] * dqb(j, l)) +
                          kd.kppp * dq[i] * dq[j] * db[l];
  return tensor;
}

// Posterior Hessian mean by the brute-force triple contraction
// H(i,j) = sum_{b,l} T_b[l](i,j) Z(l,b).
template <class Scalar>
MatrixX<Scalar> hessian_contraction_oracle(const KernelSpec<Scalar>& spec,
                                           const VectorX<Scalar>& xq,
                                           const MatrixX<Scalar>& x,
                                           const MatrixX<Scalar>& z) {
  const Index d = x.rows(), n = x.cols();
  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(d, d);
  for (Index b = 0; b < n; ++b) {
    const auto tensor = third_derivative_tensor(spec, xq, VectorX<Scalar>(x.col(b)));
    for (Index l = 0; l < d; ++l) h += tensor[l] * z(l, b);
  }
  return h;
}

}  // namespace gpgrad
