#include <gpgrad/optim.hpp>

#include <cmath>

namespace gpgrad {

namespace {

// Nocedal-Wright zoom on a bracket [lo, hi] known to contain a strong Wolfe
// point. Bisection is enough at the accuracy the optimizer needs.
LineSearchResult zoom(const std::function<double(double)>& phi,
                      const std::function<double(double)>& dphi, double phi0,
                      double dphi0, double a_lo, double a_hi, double phi_lo,
                      const LineSearchParams& p) {
  for (int i = 0; i < 50; ++i) {
    const double a = 0.5 * (a_lo + a_hi);
    const double phi_a = phi(a);
    if (phi_a > phi0 + p.c1 * a * dphi0 || phi_a >= phi_lo) {
      a_hi = a;
    } else {
      const double dphi_a = dphi(a);
      if (std::abs(dphi_a) <= -p.c2 * dphi0) return {a, true};
      if (dphi_a * (a_hi - a_lo) >= 0) a_hi = a_lo;
      a_lo = a;
      phi_lo = phi_a;
    }
    if (std::abs(a_hi - a_lo) < 1e-16 * std::max(1.0, std::abs(a_lo))) break;
  }
  return {a_lo, false};
}

}  // namespace

LineSearchResult line_search(const std::function<double(double)>& phi,
                             const std::function<double(double)>& dphi, double alpha0,
                             const LineSearchParams& params) {
  params.check();
  const double phi0 = phi(0.0);
  const double dphi0 = dphi(0.0);
  if (!(dphi0 < 0)) throw DomainError("line_search: direction is not a descent direction");

  double a_prev = 0.0, phi_prev = phi0;
  double a = alpha0 > 0 ? alpha0 : 1.0;
  for (int i = 0; i < params.max_bracket; ++i) {
    const double phi_a = phi(a);
    if (phi_a > phi0 + params.c1 * a * dphi0 || (i > 0 && phi_a >= phi_prev))
      return zoom(phi, dphi, phi0, dphi0, a_prev, a, phi_prev, params);
    const double dphi_a = dphi(a);
    if (std::abs(dphi_a) <= -params.c2 * dphi0) return {a, true};
    if (dphi_a >= 0) return zoom(phi, dphi, phi0, dphi0, a, a_prev, phi_a, params);
    a_prev = a;
    phi_prev = phi_a;
    a *= 2.0;
  }
  return {a_prev, false};  // bracket cap: best sufficient-decrease point seen
}

namespace {

using Eigen::VectorXd;

GradientDataset<double> window_dataset(
    const std::deque<std::pair<VectorXd, VectorXd>>& window) {
  const Index n = static_cast<Index>(window.size());
  const Index d = window.front().first.size();
  GradientDataset<double> ds;
  ds.X.resize(d, n);
  ds.G.resize(d, n);
  for (Index i = 0; i < n; ++i) {
    ds.X.col(i) = window[static_cast<size_t>(i)].first;
    ds.G.col(i) = window[static_cast<size_t>(i)].second;
  }
  return ds;
}

VectorXd hessian_direction(const OptimizerState& state, const OptimizerConfig& cfg,
                           OptRecord& rec) {
  auto ds = window_dataset(state.window);
  try {
    StructuredGram<double> gram;
    PosteriorSolution<double> sol;
    if (cfg.quadratic_fast_path) {
      ds.grad_prior_mean =
          cfg.quad_grad_prior.size() ? cfg.quad_grad_prior : VectorXd::Zero(state.x.size());
      const auto& scale = cfg.forward_kernel.metric.scale;
      sol = solve_quadratic_analytic(ds, scale, cfg.quad_offset);
      GradientDataset<double> centered = ds;
      centered.G.colwise() -= *ds.grad_prior_mean;
      gram = build_gram(centered, KernelSpec<double>::polynomial(
                                      2, Metric<double>::dot_product(scale, cfg.quad_offset)));
    } else {
      gram = build_gram(ds, cfg.forward_kernel);
      sol = solve(gram, ds, cfg.solver);
    }
    const auto h = infer_hessian(gram, sol.Z, state.x);
    return VectorXd(-hessian_solve(h, state.g));
  } catch (const std::runtime_error&) {
    rec.fallback_steepest = true;
    return VectorXd(-state.g);
  }
}

VectorXd optimum_direction(const OptimizerState& state, const OptimizerConfig& cfg,
                           OptRecord& rec) {
  try {
    if (cfg.quadratic_fast_path) {
      // centered at the current iterate; drop it from the data so the
      // centered gradient matrix keeps full rank
      std::deque<std::pair<VectorXd, VectorXd>> past;
      for (const auto& ob : state.window)
        if ((ob.first - state.x).norm() > 0) past.push_back(ob);
      if (past.empty()) {
        rec.fallback_steepest = true;
        return VectorXd(-state.g);
      }
      auto ds = window_dataset(past);
      const VectorXd xhat = infer_optimum_quadratic(
          state.x, state.g, ds.X, ds.G, cfg.flipped_kernel.metric.scale);
      return VectorXd(xhat - state.x);
    }
    auto ds = window_dataset(state.window);
    const VectorXd xhat =
        infer_optimum(state.x, ds.X, ds.G, cfg.flipped_kernel, cfg.solver);
    return VectorXd(xhat - state.x);
  } catch (const std::runtime_error&) {
    rec.fallback_steepest = true;
    return VectorXd(-state.g);
  }
}

}  // namespace

Eigen::VectorXd gp_step(const OptimizerState& state, const OptimizerConfig& config,
                        OptRecord& record) {
  if (state.window.empty()) throw DomainError("gp_step: empty observation window");
  if (!state.g.allFinite()) throw NumericalBreakdownError("gp_step: non-finite gradient", 0);

  VectorXd d = config.mode == GpMode::Hessian ? hessian_direction(state, config, record)
                                              : optimum_direction(state, config, record);
  if (!d.allFinite() || d.norm() == 0) {
    record.fallback_steepest = true;
    d = -state.g;
  }
  if (d.dot(state.g) > 0) {  // ensure descent
    d = -d;
    record.direction_flipped = true;
  }
  return d;
}

OptTrace minimize(const Problem& problem, const Eigen::VectorXd& x0,
                  const OptimizerConfig& config) {
  config.line_search.check();
  const detail::WallTimer timer;
  OptTrace trace;

  OptimizerState state;
  state.x = x0;
  state.g = problem.gradient(x0);
  double f = problem.value(x0);
  if (!std::isfinite(f) || !state.g.allFinite())
    throw DomainError("minimize: f or grad f not finite at the starting point");
  const double g0_norm = std::max(state.g.norm(), 1e-300);
  state.push_observation(state.x, state.g, config.window);

  trace.records.push_back({0, f, state.g.norm(), 0.0, false, false, timer.elapsed_ms()});

  VectorXd d = -state.g;
  for (Index t = 1; t <= config.max_iters; ++t) {
    if (state.g.norm() / g0_norm <= config.grad_tol) {
      trace.converged = true;
      trace.stop_reason = "gradient tolerance reached";
      break;
    }

    double alpha = 0;
    if (config.step_rule == StepRule::ExactQuadratic) {
      const VectorXd ad = config.a_apply(d);
      const double dad = d.dot(ad);
      if (!(dad > 0)) {
        trace.stop_reason = "non-positive curvature along the step direction";
        break;
      }
      alpha = -d.dot(state.g) / dad;
    } else {
      const VectorXd x_base = state.x, d_dir = d;
      auto phi = [&](double a) { return problem.value(x_base + a * d_dir); };
      auto dphi = [&](double a) {
        return problem.gradient(x_base + a * d_dir).dot(d_dir);
      };
      alpha = line_search(phi, dphi, 1.0, config.line_search).alpha;
      if (alpha == 0) {
        trace.stop_reason = "line search made no progress";
        break;
      }
    }

    state.x += alpha * d;
    f = problem.value(state.x);
    state.g = problem.gradient(state.x);
    if (!std::isfinite(f) || !state.g.allFinite()) {
      trace.stop_reason = "non-finite objective or gradient";
      break;
    }

    OptRecord rec{t, f, state.g.norm(), alpha, false, false, 0.0};

    // Alg.-1 ordering: the Hessian mode infers before the window is updated,
    // the optimum mode after.
    if (config.mode == GpMode::Hessian) {
      d = gp_step(state, config, rec);
      state.push_observation(state.x, state.g, config.window);
    } else {
      state.push_observation(state.x, state.g, config.window);
      d = gp_step(state, config, rec);
    }

    rec.wall_ms = timer.elapsed_ms();
    trace.records.push_back(rec);
  }

  if (trace.stop_reason.empty()) {
    if (state.g.norm() / g0_norm <= config.grad_tol) {
      trace.converged = true;
      trace.stop_reason = "gradient tolerance reached";
    } else {
      trace.stop_reason = "iteration limit reached";
    }
  }
  trace.x_final = state.x;
  return trace;
}

}  // namespace gpgrad
