#pragma once

// Structured representation of the DN x DN gradient Gram matrix
//
//   grad K grad'  =  K'_eff (x) Lambda  +  low-rank correction,
//
// kept as the N x N effective coefficient matrices plus the D x N point
// matrix, so storage is O(N^2 + ND + D) and multiplication never builds
// the dense matrix.
//
// Effective coefficient convention, folding the metric factors in so the
// dot product and stationary paths share one code path:
//   dot product:  K'_eff[a,b] =    k'(r_ab),   K''_eff[a,b] =    k''(r_ab)
//   stationary:   K'_eff[a,b] = -2 k'(r_ab),   K''_eff[a,b] = -4 k''(r_ab)
// Block (a,b) of the dense matrix is then
//   dot product:  K'_eff[a,b] Lambda + K''_eff[a,b] (Lambda xt_b)(Lambda xt_a)^T
//   stationary:   K'_eff[a,b] Lambda + K''_eff[a,b] (Lambda d_ab)(Lambda d_ab)^T
// with xt = x - c and d_ab = x_a - x_b. Stationary kernels whose k'' diverges
// at r = 0 (Matern 3/2) store 0 on the K''_eff diagonal; the coincident
// geometric factor d_aa = 0 makes that the exact limit.

#include <gpgrad/kernels.hpp>

#include <optional>
#include <string>

namespace gpgrad {

template <class Scalar>
struct GradientDataset {
  MatrixX<Scalar> X;  // D x N evaluation points
  MatrixX<Scalar> G;  // D x N observed gradients
  // Optional prior mean of the gradient (used by the quadratic special case).
  std::optional<VectorX<Scalar>> grad_prior_mean;

  Index dim() const { return X.rows(); }
  Index count() const { return X.cols(); }

  void check() const {
    if (X.rows() != G.rows() || X.cols() != G.cols())
      throw DimensionError("dataset: X and G must have identical shape");
    if (X.cols() < 1) throw DimensionError("dataset: need at least one observation");
    if (grad_prior_mean && grad_prior_mean->size() != X.rows())
      throw DimensionError("dataset: prior mean gradient dimension mismatch");
  }
};

namespace detail {

// Left/right contractions of the sparse difference operator L used on the
// stationary path, as the exact transpose pair that factors the low-rank
// term. lt_contract is applied after X^T Lambda V, l_contract before the
// final Lambda X multiply.
template <class Scalar>
MatrixX<Scalar> lt_contract(const MatrixX<Scalar>& w) {
  // S_ab = W_ab - W_bb
  MatrixX<Scalar> s = w;
  s.array().rowwise() -= w.diagonal().transpose().array();
  return s;
}

template <class Scalar>
MatrixX<Scalar> l_contract(const MatrixX<Scalar>& m) {
  // T = diag(column sums of M) - M
  MatrixX<Scalar> t = -m;
  t.diagonal() += m.colwise().sum();
  return t;
}

}  // namespace detail

template <class Scalar>
class StructuredGram {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  StructuredGram() = default;

  const KernelSpec<Scalar>& spec() const { return spec_; }
  Index dim() const { return xt_.rows(); }
  Index count() const { return xt_.cols(); }

  // X - c for dot product metrics, X itself for stationary ones.
  const Matrix& xtilde() const { return xt_; }
  const Matrix& lambda_xtilde() const { return lxt_; }
  const Matrix& kp_eff() const { return kp_; }
  const Matrix& kpp_eff() const { return kpp_; }
  const Lengthscale<Scalar>& scale() const { return spec_.metric.scale; }
  bool stationary() const { return spec_.metric.form == MetricForm::Stationary; }

  // Bytes held by this representation; there is no DN x DN field.
  std::size_t storage_bytes() const {
    std::size_t scale_doubles = 1;
    if (scale().kind() == LengthscaleKind::Diagonal) scale_doubles = dim();
    if (scale().kind() == LengthscaleKind::Dense) scale_doubles = dim() * dim();
    return sizeof(Scalar) *
           (kp_.size() + kpp_.size() + xt_.size() + lxt_.size() + scale_doubles);
  }

  template <class S>
  friend StructuredGram<S> build_gram(const GradientDataset<S>&, const KernelSpec<S>&);

 private:
  KernelSpec<Scalar> spec_;
  Matrix xt_, lxt_;  // D x N
  Matrix kp_, kpp_;  // N x N
};

template <class Scalar>
StructuredGram<Scalar> build_gram(const GradientDataset<Scalar>& dataset,
                                  const KernelSpec<Scalar>& spec) {
  dataset.check();
  spec.validate();
  if (!spec.supports_derivatives())
    throw SingularityError("kernel derivative diverges at the origin (matern 1/2); "
                           "gradient Gram construction is not supported");
  const Index d = dataset.dim();
  const Index n = dataset.count();
  spec.metric.scale.check_dim(d);

  StructuredGram<Scalar> g;
  g.spec_ = spec;
  const bool stat = spec.metric.form == MetricForm::Stationary;
  if (stat) {
    g.xt_ = dataset.X;
  } else {
    g.xt_ = dataset.X.colwise() - spec.metric.offset_for(d);
  }
  g.lxt_ = spec.metric.scale.apply(g.xt_);

  // r for all pairs from one O(N^2 D) product.
  const MatrixX<Scalar> s = g.xt_.transpose() * g.lxt_;
  MatrixX<Scalar> r(n, n);
  if (stat) {
    const VectorX<Scalar> q = s.diagonal();
    r = (q.rowwise().replicate(n) + q.transpose().colwise().replicate(n) -
         Scalar(2) * s)
            .cwiseMax(Scalar(0));
  } else {
    r = s;
  }

  // Duplicate points make the Gram singular; reject them by metric distance.
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b) {
      const Scalar dist2 = stat ? r(a, b) : r(a, a) + r(b, b) - Scalar(2) * r(a, b);
      if (dist2 <= Scalar(detail::kDuplicateTol))
        throw DomainError("duplicate evaluation points: columns " + std::to_string(a) +
                          " and " + std::to_string(b));
    }

  g.kp_.resize(n, n);
  g.kpp_.resize(n, n);
  for (Index a = 0; a < n; ++a)
    for (Index b = a; b < n; ++b) {
      const auto kd = eval_k_derivs(spec, r(a, b));
      Scalar kp = kd.kp, kpp = kd.kpp;
      if (stat) {
        kp *= Scalar(-2);
        kpp *= Scalar(-4);
        if (!std::isfinite(kpp)) kpp = Scalar(0);  // coincident factor is exactly 0
      }
      g.kp_(a, b) = g.kp_(b, a) = kp;
      g.kpp_(a, b) = g.kpp_(b, a) = kpp;
    }
  return g;
}

// (grad K grad') vec(V), un-vectorized, without forming the dense matrix.
// Dot product path:  Lambda V K'_eff + Lambda Xt (K''_eff o (Xt^T Lambda V)^T).
// Stationary path inserts the L/L^T contractions around the Hadamard step.
template <class Scalar, class Derived>
MatrixX<Scalar> mvm(const StructuredGram<Scalar>& gram,
                    const Eigen::MatrixBase<Derived>& v_expr) {
  const MatrixX<Scalar> v = v_expr;
  if (v.rows() != gram.dim() || v.cols() != gram.count())
    throw DimensionError("mvm: V must be D x N");
  MatrixX<Scalar> w = gram.xtilde().transpose() * gram.scale().apply(v);
  if (gram.stationary()) w = detail::lt_contract(w);
  MatrixX<Scalar> m = gram.kpp_eff().cwiseProduct(w.transpose());
  if (gram.stationary()) m = detail::l_contract(m);
  return gram.scale().apply(v * gram.kp_eff()) + gram.lambda_xtilde() * m;
}

// C vec(M) -> K'' o M^T. C is the perfect-shuffle-permuted diagonal of K''.
template <class DA, class DB>
MatrixX<typename DA::Scalar> apply_C(const Eigen::MatrixBase<DA>& kpp,
                                     const Eigen::MatrixBase<DB>& m) {
  if (kpp.rows() != kpp.cols() || m.rows() != m.cols() || kpp.rows() != m.rows())
    throw DimensionError("apply_C: inputs must be square and of equal size");
  return kpp.cwiseProduct(m.transpose());
}

// C^-1 vec(M) -> M^T / K'' elementwise; a zero entry in K'' means C is
// singular and the Woodbury path is unusable.
template <class DA, class DB>
MatrixX<typename DA::Scalar> apply_C_inverse(const Eigen::MatrixBase<DA>& kpp,
                                             const Eigen::MatrixBase<DB>& m) {
  using Scalar = typename DA::Scalar;
  if (kpp.rows() != kpp.cols() || m.rows() != m.cols() || kpp.rows() != m.rows())
    throw DimensionError("apply_C_inverse: inputs must be square and of equal size");
  if ((kpp.array() == Scalar(0)).any())
    throw SingularCError("apply_C_inverse: zero entry in K''; fall back to the CG path");
  return m.transpose().cwiseQuotient(kpp);
}

// [L^T vec(M)]_ab -> M_aa - M_ab
template <class Derived>
MatrixX<typename Derived::Scalar> apply_Lt(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) throw DimensionError("apply_Lt: input must be square");
  return m.diagonal().rowwise().replicate(m.cols()) - m;
}

// [L vec(M)]_ab -> diag(sum_a M_ab) - M_ab
template <class Derived>
MatrixX<typename Derived::Scalar> apply_L(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) throw DimensionError("apply_L: input must be square");
  return detail::l_contract(MatrixX<typename Derived::Scalar>(m));
}

// Full DN x DN Gram matrix, for oracles and debugging only.
template <class Scalar>
MatrixX<Scalar> materialize_dense(const StructuredGram<Scalar>& gram,
                                  Index cap = 4096) {
  const Index d = gram.dim(), n = gram.count();
  if (d * n > cap)
    throw DomainError("materialize_dense: D*N exceeds the allocation cap");
  const MatrixX<Scalar> lambda = gram.scale().to_dense(d);
  MatrixX<Scalar> out(d * n, d * n);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) {
      VectorX<Scalar> left, right;
      if (gram.stationary()) {
        left = gram.lambda_xtilde().col(a) - gram.lambda_xtilde().col(b);
        right = left;
      } else {
        // Note the index flip: x_b enters on the row side, x_a on the column side.
        left = gram.lambda_xtilde().col(b);
        right = gram.lambda_xtilde().col(a);
      }
      out.block(a * d, b * d, d, d) =
          gram.kp_eff()(a, b) * lambda + gram.kpp_eff()(a, b) * left * right.transpose();
    }
  return out;
}

}  // namespace gpgrad
