#pragma once

// Shared helpers for the test suites: seeded generators and kernel/dataset
// samplers whose geometry keeps pairwise r values O(1), where the
// finite-difference oracles have full relative accuracy.

#include <gpgrad/gram.hpp>
#include <gpgrad/reference.hpp>

#include <random>
#include <vector>

namespace gpgrad::testutil {

inline Eigen::MatrixXd randn(std::mt19937& rng, Index rows, Index cols) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

inline Eigen::VectorXd randn_vec(std::mt19937& rng, Index n) {
  return randn(rng, n, 1);
}

// One spec per family; dot product metrics get a random offset.
inline std::vector<KernelSpec<double>> family_specs(std::mt19937& rng, Index d) {
  Eigen::VectorXd c = 0.3 * randn_vec(rng, d);
  Eigen::VectorXd diag = Eigen::VectorXd::LinSpaced(d, 0.6, 1.4);
  auto lam_diag = Lengthscale<double>::diagonal(diag);
  auto lam_iso = Lengthscale<double>::isotropic(0.9);
  return {
      KernelSpec<double>::polynomial(2, Metric<double>::dot_product(lam_diag, c)),
      KernelSpec<double>::polynomial(3, Metric<double>::dot_product(lam_iso, c)),
      KernelSpec<double>::exponential(Metric<double>::dot_product(lam_iso, c)),
      KernelSpec<double>::squared_exponential(Metric<double>::stationary(lam_diag)),
      KernelSpec<double>::matern(1.5, Metric<double>::stationary(lam_iso)),
      KernelSpec<double>::matern(2.5, Metric<double>::stationary(lam_diag)),
      KernelSpec<double>::rational_quadratic(1.5, Metric<double>::stationary(lam_iso)),
  };
}

// Points scaled so pairwise metric values stay O(1) for any dimension.
inline GradientDataset<double> sample_dataset(std::mt19937& rng, Index d, Index n) {
  GradientDataset<double> ds;
  ds.X = randn(rng, d, n) / std::sqrt(2.0 * static_cast<double>(d));
  ds.G = randn(rng, d, n);
  return ds;
}

// Replace G by Gram * vec(V) for random V, so vec(G) lies in the range of the
// Gram. Polynomial-kernel Grams are rank deficient for N >= 2 and arbitrary
// gradients would leave the linear system without a solution.
inline void make_consistent(GradientDataset<double>& ds, const StructuredGram<double>& g,
                            std::mt19937& rng) {
  ds.G = mvm(g, randn(rng, ds.dim(), ds.count()));
}

inline Eigen::MatrixXd vec_of(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

// Blockwise relative error against the larger of the block's own norm and the
// Gram's natural scale (the coincident-point block), so that far-apart pairs
// with exponentially small blocks are not measured against their own noise.
inline double block_rel_error(const Eigen::MatrixXd& fast, const Eigen::MatrixXd& oracle,
                              double gram_scale) {
  return (fast - oracle).norm() / std::max({oracle.norm(), gram_scale, 1e-30});
}

// Finite-difference block oracle with the cusp-aware variant for coincident
// Matern 3/2 pairs (see fd_kernel_hessian_richardson).
inline Eigen::MatrixXd fd_block(const KernelSpec<double>& spec, const Eigen::VectorXd& xa,
                                const Eigen::VectorXd& xb) {
  const bool m32 = spec.family == KernelFamily::Matern && spec.matern_half == 1;
  if (m32 && eval_r(spec.metric, xa, xb) <= detail::kDuplicateTol)
    return fd_kernel_hessian_richardson(spec, xa, xb);
  return fd_kernel_hessian(spec, xa, xb);
}

}  // namespace gpgrad::testutil
