#include <gpgrad/hmc.hpp>

#include <cmath>

namespace gpgrad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

HmcConfig banana_chain_config(Index dim, bool rotated, double eps_scale, Index samples) {
  const double root4 = std::ceil(std::pow(static_cast<double>(dim), 0.25));
  HmcConfig cfg;
  cfg.epsilon = eps_scale / root4 * (rotated ? 0.5 : 1.0);
  cfg.steps = static_cast<Index>(32 * root4);
  cfg.mass = 1.0;
  cfg.samples = samples;
  cfg.burn_in = dim;
  cfg.budget = static_cast<Index>(std::floor(std::sqrt(static_cast<double>(dim))));
  cfg.sq_lengthscale = (rotated ? 0.25 : 0.4) * static_cast<double>(dim);
  return cfg;
}

BananaTarget BananaTarget::create(Index dim) {
  if (dim < 3) throw DimensionError("banana target requires D >= 3");
  BananaTarget t;
  t.dim = dim;
  t.a = 2.0 * VectorXd::Ones(dim);
  t.a[1] = -2.0;
  return t;
}

BananaTarget BananaTarget::create_rotated(Index dim, std::uint64_t rotation_seed) {
  BananaTarget t = create(dim);
  std::mt19937_64 rng(rotation_seed);
  std::normal_distribution<double> nd;
  MatrixXd gauss(dim, dim);
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j < dim; ++j) gauss(i, j) = nd(rng);
  Eigen::HouseholderQR<MatrixXd> qr(gauss);
  MatrixXd q = qr.householderQ();
  const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < dim; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  t.rotation = q;
  return t;
}

Eigen::VectorXd BananaTarget::aligned(const VectorXd& x) const {
  return rotation ? VectorXd(*rotation * x) : x;
}

double BananaTarget::energy(const VectorXd& x) const {
  const VectorXd y = aligned(x);
  const double banana = a[0] * y[0] * y[0] + a[1] * y[1] + a[2];
  double e = y[0] * y[0] + banana * banana;
  for (Index i = 2; i < dim; ++i) e += a[i] * y[i] * y[i];
  return 0.5 * e;
}

VectorXd BananaTarget::gradient(const VectorXd& x) const {
  const VectorXd y = aligned(x);
  const double banana = a[0] * y[0] * y[0] + a[1] * y[1] + a[2];
  VectorXd g(dim);
  g[0] = y[0] + banana * 2.0 * a[0] * y[0];
  g[1] = banana * a[1];
  for (Index i = 2; i < dim; ++i) g[i] = a[i] * y[i];
  return rotation ? VectorXd(rotation->transpose() * g) : g;
}

std::pair<double, VectorXd> banana_eval(const BananaTarget& target, const VectorXd& x) {
  return {target.energy(x), target.gradient(x)};
}

std::pair<VectorXd, VectorXd> leapfrog(const VectorXd& x0, const VectorXd& p0,
                                       const GradFn& grad, Index steps, double epsilon,
                                       double mass) {
  if (!x0.allFinite() || !p0.allFinite())
    throw NumericalBreakdownError("leapfrog: non-finite initial state", 0);
  VectorXd x = x0;
  VectorXd p = p0 - 0.5 * epsilon * grad(x0);
  for (Index t = 0; t < steps; ++t) {
    x += (epsilon / mass) * p;
    if (!x.allFinite()) throw NumericalBreakdownError("leapfrog: divergence", t);
    if (t + 1 < steps) p -= epsilon * grad(x);
  }
  p -= 0.5 * epsilon * grad(x);
  if (!p.allFinite()) throw NumericalBreakdownError("leapfrog: divergence", steps);
  return {x, p};
}

namespace {

struct ProposalOutcome {
  VectorXd state;     // chain state after the Metropolis step
  VectorXd endpoint;  // trajectory endpoint (empty when the trajectory diverged)
};

// One Metropolis proposal from the current state.
ProposalOutcome propose(const EnergyFn& energy, const GradFn& grad, VectorXd x,
                        const HmcConfig& cfg, std::mt19937_64& rng,
                        ChainDiagnostics& diag) {
  std::normal_distribution<double> nd;
  VectorXd p(x.size());
  const double p_std = std::sqrt(cfg.mass);
  for (Index i = 0; i < p.size(); ++i) p[i] = p_std * nd(rng);

  const double h0 = energy(x) + p.squaredNorm() / (2.0 * cfg.mass);
  ++diag.proposals;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  try {
    auto [x_new, p_new] = leapfrog(x, p, grad, cfg.steps, cfg.epsilon, cfg.mass);
    const double dh = energy(x_new) + p_new.squaredNorm() / (2.0 * cfg.mass) - h0;
    diag.delta_h.push_back(dh);
    const bool accept = std::isfinite(dh) && ud(rng) < std::exp(-dh);
    diag.accept_flags.push_back(accept ? 1 : 0);
    if (accept) ++diag.accepted;
    return {accept ? x_new : x, x_new};
  } catch (const NumericalBreakdownError&) {
    ++diag.divergences;
    diag.delta_h.push_back(std::numeric_limits<double>::infinity());
    diag.accept_flags.push_back(0);
  }
  return {x, VectorXd()};
}

}  // namespace

ChainResult hmc_chain(const EnergyFn& energy, const GradFn& grad, const VectorXd& x0,
                      const HmcConfig& cfg, std::mt19937_64& rng, Index n_samples) {
  cfg.check();
  const Index count = n_samples >= 0 ? n_samples : cfg.samples;
  ChainResult result;
  result.samples.resize(x0.size(), count);
  VectorXd x = x0;
  for (Index s = 0; s < count; ++s) {
    x = propose(energy, grad, x, cfg, rng, result.diag).state;
    result.samples.col(s) = x;
  }
  result.final_state = x;
  return result;
}

SurrogateTrainResult train_surrogate(const EnergyFn& energy, const GradFn& true_grad,
                                     const VectorXd& x0, const HmcConfig& cfg,
                                     std::mt19937_64& rng) {
  cfg.check();
  const double separation = std::sqrt(cfg.sq_lengthscale);
  const Index half = std::max<Index>(1, cfg.budget / 2);
  const Index stall_cap = 100 * cfg.budget;

  SurrogateTrainResult out;
  std::vector<VectorXd> points, grads;
  auto separated = [&](const VectorXd& x) {
    for (const auto& p : points)
      if ((x - p).norm() <= separation) return false;
    return true;
  };
  auto retain = [&](const VectorXd& x) {
    points.push_back(x);
    grads.push_back(true_grad(x));
    ++out.log.true_gradient_queries;
  };

  VectorXd x = x0;
  retain(x);  // the first visited state is trivially separated

  // phase 1: plain HMC until budget/2 separated points
  ChainDiagnostics diag1;
  while (static_cast<Index>(points.size()) < half) {
    if (out.log.phase1_proposals >= stall_cap)
      throw DomainError("train_surrogate: no separated point found; increase the step "
                        "size or reduce the lengthscale");
    x = propose(energy, true_grad, x, cfg, rng, diag1).state;
    ++out.log.phase1_proposals;
    if (separated(x)) retain(x);
  }
  out.log.phase1_acceptance = diag1.acceptance();

  auto rebuild = [&]() {
    GradientDataset<double> ds;
    const Index n = static_cast<Index>(points.size());
    ds.X.resize(x0.size(), n);
    ds.G.resize(x0.size(), n);
    for (Index i = 0; i < n; ++i) {
      ds.X.col(i) = points[static_cast<size_t>(i)];
      ds.G.col(i) = grads[static_cast<size_t>(i)];
    }
    auto spec = KernelSpec<double>::squared_exponential(Metric<double>::stationary(
        Lengthscale<double>::isotropic(1.0 / cfg.sq_lengthscale)));
    out.surrogate.data = ds;
    out.surrogate.gram = build_gram(ds, spec);
    SolverConfig<double> solver_cfg;
    solver_cfg.rel_tolerance = 1e-12;  // the surrogate must interpolate its data
    out.surrogate.z = solve(out.surrogate.gram, ds, solver_cfg).Z;
  };
  rebuild();

  // phase 2: surrogate proposals; a true gradient is queried whenever the
  // sampler finds a sufficiently separated new location. Trajectory endpoints
  // count as found locations whether or not the move is accepted, so a
  // rejecting chain still completes its budget.
  ChainDiagnostics diag2;
  while (static_cast<Index>(points.size()) < cfg.budget) {
    if (out.log.phase2_proposals >= stall_cap)
      throw DomainError("train_surrogate: surrogate phase stalled; increase the step "
                        "size or reduce the lengthscale");
    auto outcome = propose(energy, out.surrogate.as_grad_fn(), x, cfg, rng, diag2);
    x = outcome.state;
    ++out.log.phase2_proposals;
    const VectorXd& candidate = outcome.endpoint.size() ? outcome.endpoint : x;
    if (candidate.size() && separated(candidate)) {
      retain(candidate);
      rebuild();
    }
  }

  out.log.points = static_cast<Index>(points.size());
  out.final_state = x;
  return out;
}

double effective_sample_size(const std::vector<double>& series) {
  const size_t n = series.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var == 0) return static_cast<double>(n);

  auto autocov = [&](size_t lag) {
    double c = 0;
    for (size_t i = 0; i + lag < n; ++i)
      c += (series[i] - mean) * (series[i + lag] - mean);
    return c / static_cast<double>(n);
  };

  // Geyer initial positive sequence: sum pairwise autocovariances while the
  // pair sums stay positive.
  double tau = var;
  for (size_t lag = 1; lag + 1 < n / 2; lag += 2) {
    const double pair = autocov(lag) + autocov(lag + 1);
    if (pair <= 0) break;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n) * var / tau;
}

}  // namespace gpgrad
