#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gpgrad/optim.hpp>
#include <gpgrad/problems.hpp>
#include <gpgrad/reference.hpp>

#include "test_util.hpp"

#include <random>

using namespace gpgrad;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace {

std::mt19937& rng() {
  static std::mt19937 gen(99);
  return gen;
}

OptimizerConfig rbf_config(GpMode mode) {
  OptimizerConfig cfg;
  cfg.mode = mode;
  cfg.window = 2;
  cfg.forward_kernel = KernelSpec<double>::squared_exponential(
      Metric<double>::stationary(Lengthscale<double>::isotropic(9.0)));
  cfg.flipped_kernel = KernelSpec<double>::squared_exponential(
      Metric<double>::stationary(Lengthscale<double>::isotropic(0.05)));
  return cfg;
}

Problem sphere_problem() {
  return {[](const Vec& x) { return 0.5 * x.squaredNorm(); },
          [](const Vec& x) { return x; }};
}

}  // namespace

TEST_CASE("line search: unit-step quadratic accepts alpha = 1") {
  auto phi = [](double a) { return (1 - a) * (1 - a); };
  auto dphi = [](double a) { return -2 * (1 - a); };
  auto res = line_search(phi, dphi, 1.0);
  CHECK(res.alpha == doctest::Approx(1.0));
  CHECK(res.wolfe_ok);
}

TEST_CASE("line search: ascent direction is rejected") {
  auto phi = [](double a) { return a; };
  auto dphi = [](double) { return 1.0; };
  CHECK_THROWS_AS(line_search(phi, dphi, 1.0), DomainError);
}

TEST_CASE("line search satisfies strong Wolfe on shifted quadratics") {
  std::uniform_real_distribution<double> curv(0.2, 9.0), shift(0.05, 4.0);
  LineSearchParams p;
  for (int rep = 0; rep < 30; ++rep) {
    const double a_coef = curv(rng());
    const double a_star = shift(rng());
    auto phi = [=](double a) { return 0.5 * a_coef * (a - a_star) * (a - a_star) + 3.0; };
    auto dphi = [=](double a) { return a_coef * (a - a_star); };
    auto res = line_search(phi, dphi, 1.0, p);
    CHECK(res.wolfe_ok);
    CHECK(phi(res.alpha) <= phi(0) + p.c1 * res.alpha * dphi(0));
    CHECK(std::abs(dphi(res.alpha)) <= -p.c2 * dphi(0));
  }
}

TEST_CASE("minimize solves the sphere in a few iterations in both modes") {
  for (auto mode : {GpMode::Hessian, GpMode::Optimum}) {
    auto cfg = rbf_config(mode);
    cfg.grad_tol = 1e-8;
    cfg.max_iters = 10;
    auto trace = minimize(sphere_problem(), Vec::Ones(8), cfg);
    CHECK(trace.converged);
    CHECK(trace.records.back().iter <= 3);
    CHECK(trace.records.back().grad_norm <= 1e-8 * std::sqrt(8.0));
  }
}

TEST_CASE("first step is steepest descent") {
  auto cfg = rbf_config(GpMode::Hessian);
  cfg.max_iters = 1;
  Vec x0 = testutil::randn_vec(rng(), 6);
  Problem prob = sphere_problem();
  auto trace = minimize(prob, x0, cfg);
  // the sphere's gradient at x0 is x0; a single exact line-search step along
  // -g lands at the origin
  CHECK((trace.x_final - Vec(Vec::Zero(6))).norm() <= 1e-12);
}

TEST_CASE("gp_step directions never ascend and the guard flips uphill models") {
  auto flip_spec = KernelSpec<double>::squared_exponential(
      Metric<double>::stationary(Lengthscale<double>::isotropic(0.4)));
  OptimizerConfig cfg;
  cfg.mode = GpMode::Optimum;
  cfg.flipped_kernel = flip_spec;

  OptimizerState state;
  state.x = testutil::randn_vec(rng(), 5);
  auto ds = testutil::sample_dataset(rng(), 5, 2);
  for (Index i = 0; i < 2; ++i)
    state.window.emplace_back(ds.X.col(i), ds.G.col(i));

  // place the query model's optimum, then claim the gradient points at it
  Vec xhat = infer_optimum(state.x, ds.X, ds.G, flip_spec);
  state.g = 2.0 * (xhat - state.x);
  OptRecord rec;
  Vec d = gp_step(state, cfg, rec);
  CHECK(rec.direction_flipped);
  CHECK(d.dot(state.g) <= 0);

  // property over random gradients
  for (int rep = 0; rep < 10; ++rep) {
    state.g = testutil::randn_vec(rng(), 5);
    OptRecord r2;
    Vec d2 = gp_step(state, cfg, r2);
    CHECK(d2.dot(state.g) <= 0);
  }
}

TEST_CASE("window eviction keeps the newest m observations") {
  OptimizerState state;
  for (int i = 0; i < 6; ++i)
    state.push_observation(Vec::Constant(2, i), Vec::Constant(2, -i), 3);
  CHECK(state.window.size() == 3);
  CHECK(state.window.front().first[0] == doctest::Approx(3.0));
  CHECK(state.window.back().first[0] == doctest::Approx(5.0));
}

TEST_CASE("wolfe steps decrease f monotonically on the relaxed rosenbrock") {
  auto cfg = rbf_config(GpMode::Hessian);
  cfg.grad_tol = 1e-5;
  cfg.max_iters = 120;
  Vec x0 = 0.5 * Vec::Ones(20);
  auto trace = minimize(relaxed_rosenbrock_problem(), x0, cfg);
  CHECK(trace.converged);
  for (size_t i = 1; i < trace.records.size(); ++i)
    CHECK(trace.records[i].f < trace.records[i - 1].f);
}

TEST_CASE("both gp modes converge on a small relaxed rosenbrock") {
  for (auto mode : {GpMode::Hessian, GpMode::Optimum}) {
    auto cfg = rbf_config(mode);
    cfg.grad_tol = 1e-5;
    cfg.max_iters = 200;
    Vec x0 = 0.5 * Vec::Ones(20);
    auto trace = minimize(relaxed_rosenbrock_problem(), x0, cfg);
    CHECK(trace.converged);
  }
}

TEST_CASE("gp-x linear-algebra mode tracks cg on a spectrum quadratic") {
  const Index d = 30;
  auto prob = make_spectrum_problem(d, 0.5, 100.0, 0.6,
                                    SpectrumConvention::EndpointMatched, 11);
  std::mt19937_64 seed_rng(5);
  Vec x0 = sample_start_point(d, seed_rng);

  auto cg = cg_baseline([&](const Vec& v) { return Vec(prob.A * v); }, prob.b, x0,
                        1e-5, 10 * d);
  CHECK(cg.converged);

  OptimizerConfig cfg;
  cfg.mode = GpMode::Optimum;
  cfg.window = -1;  // retain all observations
  cfg.quadratic_fast_path = true;
  cfg.flipped_kernel = KernelSpec<double>::polynomial(
      2, Metric<double>::dot_product(Lengthscale<double>::isotropic(1.0)));
  cfg.step_rule = StepRule::ExactQuadratic;
  cfg.a_apply = [&](const Vec& v) { return Vec(prob.A * v); };
  cfg.grad_tol = 1e-5;
  cfg.max_iters = 10 * d;
  auto trace = minimize(prob.as_problem(), x0, cfg);
  CHECK(trace.converged);
  const Index cg_iters = cg.records.back().iter;
  CHECK(trace.records.back().iter <= 3 * cg_iters);
}

TEST_CASE("gp-x quadratic iterates are invariant under rotation") {
  const Index d = 12;
  auto prob = make_spectrum_problem(d, 0.5, 40.0, 0.6,
                                    SpectrumConvention::EndpointMatched, 3);
  std::mt19937_64 seed_rng(8);
  Vec x0 = sample_start_point(d, seed_rng);

  // random orthonormal rotation
  Mat gauss = testutil::randn(rng(), d, d);
  Eigen::HouseholderQR<Mat> qr(gauss);
  Mat q = qr.householderQ();

  QuadraticProblem rotated;
  rotated.A = q * prob.A * q.transpose();
  rotated.x_star = q * prob.x_star;
  rotated.b = rotated.A * rotated.x_star;

  auto run = [&](const QuadraticProblem& p, const Vec& start) {
    OptimizerConfig cfg;
    cfg.mode = GpMode::Optimum;
    cfg.window = -1;
    cfg.quadratic_fast_path = true;
    cfg.flipped_kernel = KernelSpec<double>::polynomial(
        2, Metric<double>::dot_product(Lengthscale<double>::isotropic(1.0)));
    cfg.step_rule = StepRule::ExactQuadratic;
    cfg.a_apply = [&p](const Vec& v) { return Vec(p.A * v); };
    cfg.grad_tol = 1e-6;
    cfg.max_iters = 60;
    return minimize(p.as_problem(), start, cfg);
  };

  auto base = run(prob, x0);
  auto rot = run(rotated, Vec(q * x0));
  REQUIRE(base.records.size() == rot.records.size());
  // invariance is exact in exact arithmetic; compare above the cancellation
  // floor where conditioning of the centered-gradient Gram amplifies roundoff
  const double floor = 1e-3 * base.records[0].grad_norm;
  for (size_t i = 0; i < base.records.size(); ++i) {
    const double a = base.records[i].grad_norm, b = rot.records[i].grad_norm;
    if (std::min(a, b) < floor) break;
    CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::max(a, b)));
  }
}
