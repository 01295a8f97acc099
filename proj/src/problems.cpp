#include <gpgrad/problems.hpp>

#include <cmath>
#include <limits>

namespace gpgrad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd gen_spectrum(Index n, double lambda_min, double lambda_max, double rho,
                      SpectrumConvention convention) {
  if (!(lambda_max > lambda_min && lambda_min > 0))
    throw DomainError("gen_spectrum requires lambda_max > lambda_min > 0");
  if (!(rho > 0 && rho < 1)) throw DomainError("gen_spectrum requires 0 < rho < 1");
  if (n < 2) throw DomainError("gen_spectrum requires n >= 2");
  VectorXd lambda(n);
  const double span = (lambda_max - lambda_min) / static_cast<double>(n - 1);
  for (Index i = 1; i <= n; ++i) {
    const double decay = convention == SpectrumConvention::AsPrinted
                             ? std::pow(rho, static_cast<double>(n - i))
                             : std::pow(rho, static_cast<double>(i - 1));
    lambda[i - 1] = lambda_min + span * decay * static_cast<double>(n - i);
  }
  return lambda;
}

QuadraticProblem make_spectrum_problem(Index dim, double lambda_min, double lambda_max,
                                       double rho, SpectrumConvention convention,
                                       std::uint64_t seed) {
  const VectorXd lambda = gen_spectrum(dim, lambda_min, lambda_max, rho, convention);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd gauss(dim, dim);
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j < dim; ++j) gauss(i, j) = nd(rng);
  Eigen::HouseholderQR<MatrixXd> qr(gauss);
  MatrixXd q = qr.householderQ();
  const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < dim; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);

  QuadraticProblem p;
  p.A = q * lambda.asDiagonal() * q.transpose();
  p.A = 0.5 * (p.A + p.A.transpose()).eval();
  p.x_star = sample_solution_point(dim, rng);
  p.b = p.A * p.x_star;
  return p;
}

VectorXd sample_start_point(Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  VectorXd x(dim);
  for (Index i = 0; i < dim; ++i) x[i] = 5.0 * nd(rng);
  return x;
}

VectorXd sample_solution_point(Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  VectorXd x(dim);
  for (Index i = 0; i < dim; ++i) x[i] = -2.0 + nd(rng);
  return x;
}

double relaxed_rosenbrock(const VectorXd& x, VectorXd* grad) {
  const Index d = x.size();
  if (d < 2) throw DimensionError("relaxed_rosenbrock requires D >= 2");
  double f = 0;
  if (grad) grad->setZero(d);
  for (Index i = 0; i + 1 < d; ++i) {
    const double gap = x[i + 1] - x[i] * x[i];
    f += x[i] * x[i] + 2.0 * gap * gap;
    if (grad) {
      (*grad)[i] += 2.0 * x[i] - 8.0 * gap * x[i];
      (*grad)[i + 1] += 4.0 * gap;
    }
  }
  return f;
}

Problem relaxed_rosenbrock_problem() {
  return {[](const VectorXd& x) { return relaxed_rosenbrock(x); },
          [](const VectorXd& x) {
            VectorXd g;
            relaxed_rosenbrock(x, &g);
            return g;
          }};
}

CgTrace cg_baseline(const std::function<VectorXd(const VectorXd&)>& a_apply,
                    const VectorXd& b, const VectorXd& x0, double rel_tol,
                    Index max_iters, const VectorXd* x_star_diag) {
  CgTrace trace;
  VectorXd x = x0;
  VectorXd r = b - a_apply(x);
  const double r0 = std::max(r.norm(), 1e-300);
  VectorXd p = r;
  double rs = r.squaredNorm();
  auto a_norm_error = [&](const VectorXd& xi) {
    if (!x_star_diag) return std::numeric_limits<double>::quiet_NaN();
    const VectorXd e = xi - *x_star_diag;
    return std::sqrt(e.dot(a_apply(e)));
  };
  trace.records.push_back({0, 1.0, a_norm_error(x)});
  for (Index it = 1; it <= max_iters; ++it) {
    const VectorXd ap = a_apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0)) {
      trace.breakdown = true;
      break;
    }
    const double alpha = rs / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    trace.records.push_back({it, std::sqrt(rs_new) / r0, a_norm_error(x)});
    if (std::sqrt(rs_new) <= rel_tol * r0) {
      trace.converged = true;
      break;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  trace.x_final = x;
  return trace;
}

OptTrace bfgs_baseline(const Problem& problem, const VectorXd& x0,
                       const LineSearchParams& ls, double grad_tol, Index max_iters) {
  ls.check();
  const detail::WallTimer timer;
  OptTrace trace;
  const Index d = x0.size();

  VectorXd x = x0;
  VectorXd g = problem.gradient(x);
  double f = problem.value(x);
  const double g0 = std::max(g.norm(), 1e-300);
  MatrixXd h_inv = MatrixXd::Identity(d, d);
  trace.records.push_back({0, f, g.norm(), 0.0, false, false, timer.elapsed_ms()});

  for (Index it = 1; it <= max_iters; ++it) {
    if (g.norm() / g0 <= grad_tol) {
      trace.converged = true;
      trace.stop_reason = "gradient tolerance reached";
      break;
    }
    VectorXd dir = -h_inv * g;
    if (dir.dot(g) >= 0) dir = -g;

    const VectorXd x_base = x, d_dir = dir;
    auto phi = [&](double a) { return problem.value(x_base + a * d_dir); };
    auto dphi = [&](double a) { return problem.gradient(x_base + a * d_dir).dot(d_dir); };
    const double alpha = line_search(phi, dphi, 1.0, ls).alpha;
    if (alpha == 0) {
      trace.stop_reason = "line search made no progress";
      break;
    }

    const VectorXd s = alpha * d_dir;
    x += s;
    const VectorXd g_new = problem.gradient(x);
    const VectorXd y = g_new - g;
    f = problem.value(x);
    g = g_new;
    if (!std::isfinite(f) || !g.allFinite()) {
      trace.stop_reason = "non-finite objective or gradient";
      break;
    }

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const MatrixXd v = MatrixXd::Identity(d, d) - rho * s * y.transpose();
      h_inv = v * h_inv * v.transpose() + rho * s * s.transpose();
    }
    trace.records.push_back({it, f, g.norm(), alpha, false, false, timer.elapsed_ms()});
  }

  if (trace.stop_reason.empty()) {
    if (g.norm() / g0 <= grad_tol) {
      trace.converged = true;
      trace.stop_reason = "gradient tolerance reached";
    } else {
      trace.stop_reason = "iteration limit reached";
    }
  }
  trace.x_final = x;
  return trace;
}

}  // namespace gpgrad
