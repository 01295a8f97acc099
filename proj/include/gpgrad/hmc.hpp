#pragma once

// Hamiltonian Monte Carlo with an optional GP gradient surrogate: the
// leapfrog trajectories may use an inferred gradient field conditioned on a
// small budget of true gradients, while the Metropolis acceptance always
// queries the true potential, so the chain targets the exact density.

#include <gpgrad/posterior.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace gpgrad {

using EnergyFn = std::function<double(const Eigen::VectorXd&)>;
using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct HmcConfig {
  double epsilon = 1e-2;  // leapfrog step size
  Index steps = 32;       // leapfrog steps per proposal
  double mass = 1.0;
  Index samples = 2000;
  Index burn_in = 0;
  // Surrogate training: budget of true-gradient observations and the squared
  // kernel lengthscale; points are kept when more than sqrt(sq_lengthscale)
  // apart in Euclidean distance.
  Index budget = 2;
  double sq_lengthscale = 1.0;

  void check() const {
    if (!(epsilon > 0) || steps < 1 || !(mass > 0))
      throw DomainError("hmc: need epsilon > 0, steps >= 1, mass > 0");
    if (budget < 2) throw DomainError("hmc: surrogate budget must be >= 2");
  }
};

// Parameters of Fig.-5-style banana runs: eps = eps_scale / ceil(D^(1/4)),
// T = 32 ceil(D^(1/4)), burn-in D, budget floor(sqrt(D)), squared lengthscale
// 0.4 D aligned / 0.25 D rotated (with the step size halved).
HmcConfig banana_chain_config(Index dim, bool rotated, double eps_scale,
                              Index samples = 2000);

struct BananaTarget {
  Index dim = 3;
  Eigen::VectorXd a;                      // a0 = 2, a1 = -2, a2 = 2, rest 2
  std::optional<Eigen::MatrixXd> rotation;  // E(x) = E_aligned(Q x)

  static BananaTarget create(Index dim);
  static BananaTarget create_rotated(Index dim, std::uint64_t rotation_seed);

  double energy(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  // coordinates in the aligned frame (identity when not rotated)
  Eigen::VectorXd aligned(const Eigen::VectorXd& x) const;
};

// Potential and analytic gradient in one call.
std::pair<double, Eigen::VectorXd> banana_eval(const BananaTarget& target,
                                               const Eigen::VectorXd& x);

// Standard half-kick / drift / half-kick integrator; time reversible and
// volume preserving. Throws NumericalBreakdownError on non-finite states.
std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& p,
                                                     const GradFn& grad, Index steps,
                                                     double epsilon, double mass);

struct ChainDiagnostics {
  Index proposals = 0;
  Index accepted = 0;
  Index divergences = 0;
  std::vector<double> delta_h;
  std::vector<char> accept_flags;
  double acceptance() const {
    return proposals ? static_cast<double>(accepted) / proposals : 0.0;
  }
};

struct ChainResult {
  Eigen::MatrixXd samples;  // D x samples, chain state after each proposal
  ChainDiagnostics diag;
  Eigen::VectorXd final_state;
};

// One HMC chain: momenta are refreshed from N(0, m I) every proposal and the
// acceptance test always evaluates the true energy, so the chain is valid for
// any gradient field used inside the trajectories.
ChainResult hmc_chain(const EnergyFn& energy, const GradFn& grad,
                      const Eigen::VectorXd& x0, const HmcConfig& cfg,
                      std::mt19937_64& rng, Index n_samples = -1);

// GP model of the gradient field, conditioned on a few true gradients.
struct GradientSurrogate {
  GradientDataset<double> data;
  StructuredGram<double> gram;
  Eigen::MatrixXd z;

  Eigen::VectorXd query(const Eigen::VectorXd& x) const {
    return infer_gradient(gram, z, x);
  }
  GradFn as_grad_fn() const {
    return [this](const Eigen::VectorXd& x) { return query(x); };
  }
};

struct SurrogateTrainLog {
  Index phase1_proposals = 0;  // plain HMC until budget/2 separated points
  Index phase2_proposals = 0;  // surrogate proposals until the full budget
  double phase1_acceptance = 0;
  Index points = 0;
  Index true_gradient_queries = 0;  // conditioning observations
};

struct SurrogateTrainResult {
  GradientSurrogate surrogate;
  SurrogateTrainLog log;
  Eigen::VectorXd final_state;
};

// Two-phase training: run plain HMC retaining visited states that are more
// than a kernel lengthscale apart until budget/2 points are found, then switch
// to surrogate-driven proposals, adding a true gradient whenever the chain
// reaches a sufficiently separated state, until the budget is exhausted.
SurrogateTrainResult train_surrogate(const EnergyFn& energy, const GradFn& true_grad,
                                     const Eigen::VectorXd& x0, const HmcConfig& cfg,
                                     std::mt19937_64& rng);

// Effective sample size from the initial-positive-sequence estimate of the
// integrated autocorrelation time.
double effective_sample_size(const std::vector<double>& series);

}  // namespace gpgrad
