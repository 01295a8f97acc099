#pragma once

// Experiment problem generators and classical baselines: SPD matrices with a
// prescribed spectrum, the quadratic objective, the relaxed Rosenbrock
// function, and CG/BFGS reference solvers.

#include <gpgrad/optim.hpp>

#include <cstdint>
#include <random>

namespace gpgrad {

struct QuadraticProblem {
  Eigen::MatrixXd A;       // symmetric positive definite
  Eigen::VectorXd x_star;  // minimizer
  Eigen::VectorXd b;       // A x_star

  double value(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd e = x - x_star;
    return 0.5 * e.dot(A * e);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return A * (x - x_star); }
  Problem as_problem() const {
    return {[this](const Eigen::VectorXd& x) { return value(x); },
            [this](const Eigen::VectorXd& x) { return gradient(x); }};
  }
};

// The printed eigenvalue formula cannot reach lambda_max (its profile tops
// out near 0.72 of the span for rho = 0.6), contradicting the stated
// condition number; the endpoint-matched convention moves the decay into the
// exponent so lambda_1 = lambda_max exactly. Both are available, the
// endpoint-matched one is the default.
enum class SpectrumConvention { AsPrinted, EndpointMatched };

Eigen::VectorXd gen_spectrum(Index n, double lambda_min, double lambda_max, double rho,
                             SpectrumConvention convention = SpectrumConvention::EndpointMatched);

// A = Q^T diag(spectrum) Q with Q drawn from the QR of a seeded Gaussian
// matrix (R-diagonal signs fixed for reproducibility).
QuadraticProblem make_spectrum_problem(Index dim, double lambda_min, double lambda_max,
                                       double rho, SpectrumConvention convention,
                                       std::uint64_t seed);

// Start/solution sampling used by the experiments: x0 ~ N(0, 5^2 I),
// x* ~ N(-2*1, I).
Eigen::VectorXd sample_start_point(Index dim, std::mt19937_64& rng);
Eigen::VectorXd sample_solution_point(Index dim, std::mt19937_64& rng);

// f(x) = sum_{i<D} x_i^2 + 2 (x_{i+1} - x_i^2)^2 and its analytic gradient.
double relaxed_rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr);

Problem relaxed_rosenbrock_problem();

struct CgTraceRecord {
  Index iter = 0;
  double rel_residual = 0;
  // A-norm of the error, recorded when the solution point is supplied
  double a_norm_error = std::numeric_limits<double>::quiet_NaN();
};

struct CgTrace {
  std::vector<CgTraceRecord> records;
  bool converged = false;
  bool breakdown = false;  // encountered non-positive curvature
  Eigen::VectorXd x_final;
};

// Classical conjugate gradients on A x = b with a residual trace; the
// residual equals the gradient of the quadratic objective.
CgTrace cg_baseline(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& a_apply,
                    const Eigen::VectorXd& b, const Eigen::VectorXd& x0, double rel_tol,
                    Index max_iters, const Eigen::VectorXd* x_star_diag = nullptr);

// Textbook BFGS with the shared strong Wolfe line search and the usual
// curvature-condition skip guard.
OptTrace bfgs_baseline(const Problem& problem, const Eigen::VectorXd& x0,
                       const LineSearchParams& ls = {}, double grad_tol = 1e-5,
                       Index max_iters = 500);

}  // namespace gpgrad
