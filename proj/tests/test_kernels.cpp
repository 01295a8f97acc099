#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gpgrad/kernels.hpp>
#include <gpgrad/reference.hpp>

#include <random>

using namespace gpgrad;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace {

Metric<double> iso_dot(double lam = 1.0, Vec c = {}) {
  return Metric<double>::dot_product(Lengthscale<double>::isotropic(lam), std::move(c));
}

Metric<double> iso_stat(double lam = 1.0) {
  return Metric<double>::stationary(Lengthscale<double>::isotropic(lam));
}

std::vector<KernelSpec<double>> all_derivative_families() {
  return {
      KernelSpec<double>::polynomial(2, iso_dot()),
      KernelSpec<double>::polynomial(3, iso_dot()),
      KernelSpec<double>::exponential(iso_dot()),
      KernelSpec<double>::squared_exponential(iso_stat()),
      KernelSpec<double>::matern(1.5, iso_stat()),
      KernelSpec<double>::matern(2.5, iso_stat()),
      KernelSpec<double>::rational_quadratic(1.0, iso_stat()),
      KernelSpec<double>::rational_quadratic(2.5, iso_stat()),
  };
}

}  // namespace

TEST_CASE("eval_r matches the metric definitions") {
  Vec xa(2), xb(2);
  xa << 1, 2;
  xb << 3, 4;
  CHECK(eval_r(iso_dot(), xa, xb) == doctest::Approx(11.0));
  CHECK(eval_r(iso_stat(), xa, xa) == 0.0);
  CHECK(eval_r(iso_stat(), xa, xb) == doctest::Approx(8.0));

  Vec c(2);
  c << 1, 1;
  CHECK(eval_r(iso_dot(1.0, c), xa, xb) == doctest::Approx(0 * 2 + 1 * 3));

  Vec bad(3);
  CHECK_THROWS_AS(eval_r(iso_dot(), xa, bad), DimensionError);
}

TEST_CASE("eval_r is symmetric in its arguments") {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    Vec xa(4), xb(4), c(4), d(4);
    for (int i = 0; i < 4; ++i) {
      xa[i] = nd(rng);
      xb[i] = nd(rng);
      c[i] = nd(rng);
      d[i] = 0.1 + std::abs(nd(rng));
    }
    auto lam = Lengthscale<double>::diagonal(d);
    auto dot = Metric<double>::dot_product(lam, c);
    auto stat = Metric<double>::stationary(lam);
    CHECK(eval_r(dot, xa, xb) == doctest::Approx(eval_r(dot, xb, xa)));
    CHECK(eval_r(stat, xa, xb) == doctest::Approx(eval_r(stat, xb, xa)));
    CHECK(eval_r(stat, xa, xb) >= 0.0);
  }
}

TEST_CASE("table values: polynomial(2) and squared exponential") {
  auto poly = KernelSpec<double>::polynomial(2, iso_dot());
  auto kd = eval_k_derivs(poly, 3.0);
  CHECK(kd.k == doctest::Approx(4.5));
  CHECK(kd.kp == doctest::Approx(3.0));
  CHECK(kd.kpp == doctest::Approx(1.0));
  CHECK(kd.kppp == 0.0);

  auto se = KernelSpec<double>::squared_exponential(iso_stat());
  auto sd = eval_k_derivs(se, 0.0);
  CHECK(sd.k == doctest::Approx(1.0));
  CHECK(sd.kp == doctest::Approx(-0.5));
  CHECK(sd.kpp == doctest::Approx(0.25));
  CHECK(sd.kppp == doctest::Approx(-0.125));
}

TEST_CASE("matern limits at the origin") {
  auto m52 = KernelSpec<double>::matern(2.5, iso_stat());
  auto kd0 = eval_k_derivs(m52, 0.0);
  CHECK(kd0.k == doctest::Approx(1.0));
  CHECK(kd0.kp == doctest::Approx(-5.0 / 6.0));
  CHECK(kd0.kpp == doctest::Approx(25.0 / 12.0));
  // continuity of the branch against evaluation just off the origin; k''
  // moves by O(sqrt(r)) so its tolerance is looser
  auto kd_eps = eval_k_derivs(m52, 1e-8);
  CHECK(kd_eps.kp == doctest::Approx(kd0.kp).epsilon(1e-6));
  CHECK(kd_eps.kpp == doctest::Approx(kd0.kpp).epsilon(1e-3));

  auto m32 = KernelSpec<double>::matern(1.5, iso_stat());
  auto md0 = eval_k_derivs(m32, 0.0);
  CHECK(md0.k == doctest::Approx(1.0));
  CHECK(md0.kp == doctest::Approx(-1.5));
  CHECK(std::isinf(md0.kpp));
  auto md_eps = eval_k_derivs(m32, 1e-8);
  CHECK(md_eps.kp == doctest::Approx(-1.5).epsilon(1e-3));

  auto m12 = KernelSpec<double>::matern(0.5, iso_stat());
  CHECK_THROWS_AS(eval_k_derivs(m12, 0.0), SingularityError);
  CHECK(eval_k_derivs(m12, 1.0).k == doctest::Approx(std::exp(-1.0)));
  CHECK(!m12.supports_derivatives());
}

TEST_CASE("stationary families reject r < 0") {
  for (auto& spec : all_derivative_families()) {
    if (spec.metric.form != MetricForm::Stationary) continue;
    CHECK_THROWS_AS(eval_k_derivs(spec, -0.5), DomainError);
  }
}

TEST_CASE("finite differences validate the whole derivative chain") {
  std::mt19937 rng(11);
  auto rel = [](double fd, double val) {
    return std::abs(fd - val) / std::max(std::abs(val), 1e-12);
  };
  for (auto& spec : all_derivative_families()) {
    const bool stationary = spec.metric.form == MetricForm::Stationary;
    // keep away from the origin, where the difference quotients cancel
    std::uniform_real_distribution<double> mag(0.05, 3.0);
    std::bernoulli_distribution flip;
    auto k0 = [&](double r) { return eval_k_derivs(spec, r).k; };
    auto k1 = [&](double r) { return eval_k_derivs(spec, r).kp; };
    auto k2 = [&](double r) { return eval_k_derivs(spec, r).kpp; };
    for (int rep = 0; rep < 100; ++rep) {
      const double r = stationary ? mag(rng) : (flip(rng) ? 1 : -1) * mag(rng);
      const auto kd = eval_k_derivs(spec, r);
      CHECK(rel(fd_scalar_derivative(k0, r), kd.kp) <= 1e-5);
      CHECK(rel(fd_scalar_derivative(k1, r), kd.kpp) <= 1e-5);
      CHECK(rel(fd_scalar_derivative(k2, r), kd.kppp) <= 1e-5);
    }
  }
}

TEST_CASE("stationary kernels are bounded by their value at zero") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(0.0, 20.0);
  for (auto& spec : all_derivative_families()) {
    if (spec.metric.form != MetricForm::Stationary) continue;
    const double k0 = eval_k_derivs(spec, 0.0).k;
    for (int rep = 0; rep < 100; ++rep)
      CHECK(std::abs(eval_k_derivs(spec, dist(rng)).k) <= k0 + 1e-15);
  }
}

TEST_CASE("family/metric pairing is enforced") {
  CHECK_THROWS_AS(KernelSpec<double>::polynomial(2, iso_stat()), DomainError);
  CHECK_THROWS_AS(KernelSpec<double>::exponential(iso_stat()), DomainError);
  CHECK_THROWS_AS(KernelSpec<double>::squared_exponential(iso_dot()), DomainError);
  CHECK_THROWS_AS(KernelSpec<double>::matern(2.5, iso_dot()), DomainError);
  CHECK_THROWS_AS(KernelSpec<double>::rational_quadratic(1.0, iso_dot()), DomainError);
  CHECK_THROWS_AS(KernelSpec<double>::polynomial(1, iso_dot()), DomainError);
  CHECK_THROWS_AS(KernelSpec<double>::matern(2.0, iso_stat()), DomainError);
}

TEST_CASE("lengthscale forms apply and invert consistently") {
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  const int d = 6;
  Mat raw(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) raw(i, j) = nd(rng);
  Mat spd = raw * raw.transpose() + 0.5 * Mat::Identity(d, d);
  Vec diag = Vec::LinSpaced(d, 0.3, 2.0);

  std::vector<Lengthscale<double>> forms = {
      Lengthscale<double>::isotropic(1.7),
      Lengthscale<double>::diagonal(diag),
      Lengthscale<double>::dense_spd(spd),
  };
  for (auto& lam : forms) {
    Mat v(d, 3);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < 3; ++j) v(i, j) = nd(rng);
    Mat round = lam.apply_inverse(lam.apply(v));
    CHECK(rel_error(round, v) <= 1e-12);
    round = lam.apply(lam.apply_inverse(v));
    CHECK(rel_error(round, v) <= 1e-12);
  }

  CHECK_THROWS_AS(Lengthscale<double>::isotropic(0.0), DomainError);
  Vec bad(2);
  bad << 1.0, -1.0;
  CHECK_THROWS_AS(Lengthscale<double>::diagonal(bad), DomainError);
  Mat not_spd = -Mat::Identity(3, 3);
  CHECK_THROWS_AS(Lengthscale<double>::dense_spd(not_spd), DomainError);
}

TEST_CASE("kernel config round trip") {
  Vec c(3), d(3);
  c << 0.5, -1.0, 2.0;
  d << 1.0, 2.0, 3.0;
  std::vector<KernelSpec<double>> specs = {
      KernelSpec<double>::polynomial(
          3, Metric<double>::dot_product(Lengthscale<double>::diagonal(d), c)),
      KernelSpec<double>::matern(1.5, iso_stat(0.25)),
      KernelSpec<double>::rational_quadratic(2.0, iso_stat(4.0)),
      KernelSpec<double>::squared_exponential(iso_stat(1e-3)),
      KernelSpec<double>::exponential(iso_dot(2.0)),
  };
  for (auto& spec : specs) {
    auto kv = kernel_to_config(spec);
    auto back = kernel_from_config<double>(kv);
    CHECK(back.family == spec.family);
    CHECK(back.poly_order == spec.poly_order);
    CHECK(back.matern_half == spec.matern_half);
    CHECK(back.rq_alpha == doctest::Approx(spec.rq_alpha));
    CHECK(back.metric.form == spec.metric.form);
    Vec xa = Vec::LinSpaced(3, -1, 1), xb = Vec::LinSpaced(3, 0.3, 2.1);
    CHECK(eval_r(back.metric, xa, xb) == doctest::Approx(eval_r(spec.metric, xa, xb)));
  }
  CHECK_THROWS_AS(kernel_from_config<double>({{"family", "nope"}}), DomainError);
  CHECK_THROWS_AS(kernel_from_config<double>({}), DomainError);
}
