#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gpgrad/problems.hpp>

#include "test_util.hpp"

#include <random>

using namespace gpgrad;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

TEST_CASE("spectrum conventions: printed formula endpoints") {
  Vec as_printed = gen_spectrum(100, 0.5, 100.0, 0.6, SpectrumConvention::AsPrinted);
  CHECK(as_printed[99] == doctest::Approx(0.5));  // zero multiplier at i = N
  CHECK(as_printed[98] == doctest::Approx(0.5 + (99.5 / 99.0) * 0.6 * 1.0));

  Vec matched = gen_spectrum(100, 0.5, 100.0, 0.6, SpectrumConvention::EndpointMatched);
  CHECK(matched[0] == doctest::Approx(100.0));
  CHECK(matched[99] == doctest::Approx(0.5));
  // the printed convention cannot reach lambda_max; the matched one restores
  // the stated condition number of 200
  CHECK(as_printed.maxCoeff() < 2.0);
  CHECK(matched.maxCoeff() / matched.minCoeff() == doctest::Approx(200.0));

  CHECK_THROWS_AS(gen_spectrum(10, 1.0, 0.5, 0.6), DomainError);
  CHECK_THROWS_AS(gen_spectrum(10, 0.5, 100.0, 1.2), DomainError);
}

TEST_CASE("spectrum problems are SPD with the requested eigenvalues") {
  auto prob = make_spectrum_problem(40, 0.5, 100.0, 0.6,
                                    SpectrumConvention::EndpointMatched, 7);
  CHECK((prob.A - prob.A.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::SelfAdjointEigenSolver<Mat> es(prob.A);
  CHECK(es.eigenvalues().minCoeff() >= 0.5 - 1e-10);
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(100.0));
  CHECK(prob.gradient(prob.x_star).norm() <= 1e-10);
  CHECK(prob.value(prob.x_star) == doctest::Approx(0.0));

  // seeding determines the problem
  auto again = make_spectrum_problem(40, 0.5, 100.0, 0.6,
                                     SpectrumConvention::EndpointMatched, 7);
  CHECK((prob.A - again.A).norm() == 0.0);
  CHECK((prob.x_star - again.x_star).norm() == 0.0);
  auto other = make_spectrum_problem(40, 0.5, 100.0, 0.6,
                                     SpectrumConvention::EndpointMatched, 8);
  CHECK((prob.A - other.A).norm() > 0.0);
}

TEST_CASE("relaxed rosenbrock values and analytic gradient") {
  Vec zero = Vec::Zero(10);
  Vec g;
  CHECK(relaxed_rosenbrock(zero, &g) == 0.0);
  CHECK(g.norm() == 0.0);

  Vec x(2);
  x << 1, 1;
  CHECK(relaxed_rosenbrock(x, &g) == doctest::Approx(1.0));
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(0.0));

  std::mt19937 gen(21);
  for (int rep = 0; rep < 100; ++rep) {
    Vec p = testutil::randn_vec(gen, 7);
    Vec grad;
    relaxed_rosenbrock(p, &grad);
    const double h = 1e-6;
    for (Index i = 0; i < 7; ++i) {
      Vec pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      const double fd = (relaxed_rosenbrock(pp) - relaxed_rosenbrock(pm)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(grad[i])));
    }
  }

  Vec too_small(1);
  CHECK_THROWS_AS(relaxed_rosenbrock(too_small), DimensionError);
}

TEST_CASE("cg baseline: identity system and clustered spectrum") {
  const Index d = 20;
  Vec b = Vec::Ones(d);
  auto cg = cg_baseline([](const Vec& v) { return v; }, b, Vec::Zero(d), 1e-10, 100);
  CHECK(cg.converged);
  CHECK(cg.records.back().iter == 1);

  auto prob = make_spectrum_problem(100, 0.5, 100.0, 0.6,
                                    SpectrumConvention::EndpointMatched, 42);
  std::mt19937_64 rng(42);
  Vec x0 = sample_start_point(100, rng);
  auto trace = cg_baseline([&](const Vec& v) { return Vec(prob.A * v); }, prob.b, x0,
                           1e-5, 1000, &prob.x_star);
  CHECK(trace.converged);
  CHECK(trace.records.back().iter <= 40);  // clustered spectrum
  for (size_t i = 1; i < trace.records.size(); ++i)
    CHECK(trace.records[i].a_norm_error <= trace.records[i - 1].a_norm_error * (1 + 1e-12));
}

TEST_CASE("bfgs baseline converges immediately on the sphere") {
  Problem sphere{[](const Vec& x) { return 0.5 * x.squaredNorm(); },
                 [](const Vec& x) { return x; }};
  auto trace = bfgs_baseline(sphere, Vec::Ones(15), {}, 1e-8, 50);
  CHECK(trace.converged);
  CHECK(trace.records.back().iter <= 2);
}

TEST_CASE("bfgs baseline solves the relaxed rosenbrock") {
  auto trace = bfgs_baseline(relaxed_rosenbrock_problem(), 0.5 * Vec::Ones(30), {},
                             1e-5, 500);
  CHECK(trace.converged);
}
