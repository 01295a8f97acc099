#pragma once

// GP-H / GP-X optimization: a quasi-Newton-style loop whose step direction
// comes either from the inferred posterior Hessian (GP-H) or from flipped
// inference of the optimum location (GP-X), over a sliding window of the
// last m gradient observations.

#include <gpgrad/posterior.hpp>

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace gpgrad {

enum class GpMode { Hessian, Optimum };

struct LineSearchParams {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_bracket = 20;

  void check() const {
    if (!(0 < c1 && c1 < c2 && c2 < 1))
      throw DomainError("line search requires 0 < c1 < c2 < 1");
  }
};

struct LineSearchResult {
  double alpha = 0;
  bool wolfe_ok = false;  // false: best bracketed point after the cap
};

// Strong Wolfe line search (bracket + zoom) on phi(a) = f(x + a d).
// phi and dphi are the 1-D restriction and its derivative; dphi(0) < 0 required.
LineSearchResult line_search(const std::function<double(double)>& phi,
                             const std::function<double(double)>& dphi, double alpha0,
                             const LineSearchParams& params = {});

enum class StepRule { Wolfe, ExactQuadratic };

struct OptimizerConfig {
  GpMode mode = GpMode::Hessian;
  // Sliding window size m; -1 keeps the whole history.
  Index window = 2;
  KernelSpec<double> forward_kernel;  // GP-H
  KernelSpec<double> flipped_kernel;  // GP-X
  // Quadratic special case (linear algebra experiments): closed-form solves
  // with the polynomial(2) kernel instead of the generic machinery.
  bool quadratic_fast_path = false;
  Eigen::VectorXd quad_offset;      // fixed c for GP-H (the experiments use 0)
  Eigen::VectorXd quad_grad_prior;  // g_c = grad f(c)
  LineSearchParams line_search;
  StepRule step_rule = StepRule::Wolfe;
  // A-multiply for the exact quadratic step length a = -d.g / d.Ad.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> a_apply;
  double grad_tol = 1e-5;  // relative to the starting gradient norm
  Index max_iters = 200;
  SolverConfig<double> solver;
};

struct OptRecord {
  Index iter = 0;
  double f = 0;
  double grad_norm = 0;
  double alpha = 0;
  bool direction_flipped = false;  // descent guard engaged
  bool fallback_steepest = false;  // model step failed, used -g
  double wall_ms = 0;
};

struct OptTrace {
  std::vector<OptRecord> records;
  bool converged = false;
  std::string stop_reason;
  Eigen::VectorXd x_final;
};

struct Problem {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

// Observation window and current iterate of a running minimization.
struct OptimizerState {
  Eigen::VectorXd x, g;
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> window;  // (x, g) pairs

  void push_observation(const Eigen::VectorXd& xv, const Eigen::VectorXd& gv,
                        Index max_window) {
    window.emplace_back(xv, gv);
    if (max_window >= 0)
      while (static_cast<Index>(window.size()) > max_window) window.pop_front();
  }
};

// One model step of Alg.-1: the GP direction at the current iterate, with the
// descent guard and steepest-descent fallback applied. Flags are reported via
// the record fields.
Eigen::VectorXd gp_step(const OptimizerState& state, const OptimizerConfig& config,
                        OptRecord& record);

OptTrace minimize(const Problem& problem, const Eigen::VectorXd& x0,
                  const OptimizerConfig& config);

}  // namespace gpgrad
