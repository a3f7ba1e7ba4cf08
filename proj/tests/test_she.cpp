#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "fasep/kernels.hpp"
#include "fasep/quadrature.hpp"
#include "fasep/she.hpp"

using namespace fasep;

namespace {

// Exact E[Z_T(u)^2] of the discrete scheme from the delta' datum: the
// covariance of W obeys C <- S (C + dt/dx diag(dP^2 + diag C)) S^T with S the
// matrix exponential of the grid Laplacian.
double scheme_second_moment(double dx, double dt, double T, double u_max, double u) {
  const int nx = static_cast<int>(std::lround(u_max / dx)), n = nx - 1;
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    lap(i, i) = -2.0;
    if (i > 0) lap(i, i - 1) = 1.0;
    if (i + 1 < n) lap(i, i + 1) = 1.0;
  }
  const Eigen::MatrixXd s = (lap * (dt / (2.0 * dx * dx))).exp();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  const int nt = static_cast<int>(std::lround(T / dt));
  for (int k = 0; k < nt; ++k) {
    for (int i = 0; i < n; ++i) {
      const double d = k == 0 ? 0.0 : d_dirichlet_kernel(k * dt, (i + 1) * dx);
      c(i, i) += dt / dx * (d * d + c(i, i));
    }
    c = s * c * s.transpose();
  }
  const int j = static_cast<int>(std::lround(u / dx)) - 1;
  const double d = d_dirichlet_kernel(T, u);
  return d * d + c(j, j);
}

// P^Dir_t g by quadrature
double heat_dirichlet(double t, double u, const std::function<double(double)>& g) {
  const GaussLegendre gl(20);
  return gl.panels([&](double v) { return dirichlet_kernel(t, u, v) * g(v); }, 0.0, 12.0, 48);
}

double bump(double u) { return u * std::exp(-u * u); }
double bump2(double u) { return u * u * std::exp(-2.0 * u * u); }

}  // namespace

TEST_CASE("noise grid moments, determinism and independence") {
  const NoiseGrid g = sample_noise(1e-4, 0.01, 0.1, 10.0, 7, 3);
  REQUIRE(g.values.size() == 1000u * 999u);
  const double n = static_cast<double>(g.values.size()), sd = 1.0 / std::sqrt(1e-4 * 0.01);
  double m = 0, m2 = 0, lag = 0;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double z = g.values[i] / sd;
    m += z;
    m2 += z * z;
    if (i > 0) lag += z * g.values[i - 1] / sd;
  }
  m /= n;
  m2 /= n;
  lag /= n;
  CHECK(std::abs(m) < 4.0 / std::sqrt(n));
  CHECK(std::abs(m2 - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(lag) < 4.0 / std::sqrt(n));

  const NoiseGrid again = sample_noise(1e-4, 0.01, 0.1, 10.0, 7, 3);
  CHECK(again.values == g.values);
  const NoiseGrid other = sample_noise(1e-4, 0.01, 0.1, 10.0, 7, 4);
  CHECK(other.values != g.values);
}

TEST_CASE("noise grid argument checks") {
  CHECK_THROWS_AS(sample_noise(0.0, 0.01, 1.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_noise(1e-4, -0.01, 1.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_noise(1e-8, 1e-4, 1.0, 10.0, 1), std::length_error);
}

TEST_CASE("zero noise: delta' datum reproduces dP exactly and the walls stay pinned") {
  SolveOptions opt;
  opt.snapshot_times = {0.1, 0.3};
  const MildSolution s = solve_mild(InitialCondition::delta_prime(), zero_noise(4e-4, 0.02, 0.3, 5.0), opt);
  REQUIRE(s.times.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(s.values[k].front() == 0.0);
    CHECK(s.values[k].back() == 0.0);
    for (std::size_t j = 0; j < s.space.size(); j += 7)
      CHECK(s.values[k][j] == doctest::Approx(d_dirichlet_kernel(s.times[k], s.space[j])).epsilon(1e-12));
  }
}

TEST_CASE("zero noise: smooth datum follows the Dirichlet heat semigroup") {
  const MildSolution s = solve_mild(InitialCondition::near_eq(bump), zero_noise(4e-4, 0.02, 0.3, 8.0));
  for (double u : {0.2, 0.5, 1.0, 2.0, 4.0})
    CHECK(std::abs(s.at(0, u) - heat_dirichlet(0.3, u, bump)) < 2e-4);
}

TEST_CASE("deterministic convergence order") {
  const DeterministicOrder d = deterministic_order(0.02, 1.0, 0.05, 0.5, 5.0);
  CHECK(d.error_fine < d.error_coarse);
  CHECK(d.order >= 0.9);
}

TEST_CASE("restart from a snapshot composes with the direct solve") {
  const MildSolution first = solve_mild(InitialCondition::near_eq(bump), zero_noise(4e-4, 0.02, 0.2, 8.0));
  const MildSolution second = solve_mild(InitialCondition::from_samples(first.space, first.values.back()),
                                         zero_noise(4e-4, 0.02, 0.2, 8.0));
  const MildSolution direct = solve_mild(InitialCondition::near_eq(bump), zero_noise(4e-4, 0.02, 0.4, 8.0));
  for (std::size_t j = 0; j < direct.space.size(); ++j)
    CHECK(std::abs(second.values.back()[j] - direct.values.back()[j]) < 1e-12);
}

TEST_CASE("linear in the initial datum under frozen noise") {
  const NoiseGrid g = sample_noise(4e-4, 0.02, 0.2, 14.0, 11);
  const MildSolution a = solve_mild(InitialCondition::near_eq(bump), g);
  const MildSolution b = solve_mild(InitialCondition::near_eq(bump2), g);
  const MildSolution ab = solve_mild(InitialCondition::near_eq([](double u) { return 2.0 * bump(u) - 3.0 * bump2(u); }), g);
  for (std::size_t j = 0; j < ab.space.size(); ++j)
    CHECK(std::abs(ab.values.back()[j] - (2.0 * a.values.back()[j] - 3.0 * b.values.back()[j])) < 1e-10);
}

TEST_CASE("fluctuation variance scales with the square of the noise strength") {
  EnsembleSpec spec;
  spec.dx = 0.05;
  spec.dt = 0.0025;
  spec.T = 0.25;
  spec.u_interest = 0.5;
  spec.replicas = 2000;
  auto variance = [&](double gamma) {
    SolveOptions opt;
    opt.noise_scale = gamma;
    const auto ens = solve_ensemble(InitialCondition::delta_prime(), spec, opt);
    RunningStats s;
    for (const auto& m : ens) s.add(m.at(0, 0.5));
    return s.variance();
  };
  CHECK(variance(0.02) / variance(0.01) == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("ensemble moments against the exact moments of the scheme") {
  EnsembleSpec spec;
  spec.dx = 0.1;
  spec.dt = 0.01;
  spec.T = 0.25;
  spec.u_interest = 0.5;
  spec.replicas = 20000;
  spec.seed = 5;
  const auto ens = solve_ensemble(InitialCondition::delta_prime(), spec);
  const double u_max = 6.0 * std::sqrt(spec.T) + spec.u_interest;

  const McResult m1 = moment_estimate(ens, 0.25, 0.5, 1);
  CHECK(m1.consistent_with(d_dirichlet_kernel(0.25, 0.5)));
  const McResult m2 = moment_estimate(ens, 0.25, 0.5, 2);
  const double oracle = scheme_second_moment(spec.dx, spec.dt, spec.T, u_max, 0.5);
  CHECK(m2.consistent_with(oracle));
  CHECK(m2.n == 20000);
  CHECK(uniqueness_diagnostic(ens) > 0.0);
}

TEST_CASE("scheme second moment approaches the closed form as the grid is refined") {
  const double exact = second_moment_exact(0.25, 0.5).ratio;
  const double d2 = std::pow(d_dirichlet_kernel(0.25, 0.5), 2);
  const double coarse = scheme_second_moment(0.1, 0.01, 0.25, 3.5, 0.5) / d2;
  const double fine = scheme_second_moment(0.05, 0.0025, 0.25, 3.5, 0.5) / d2;
  CHECK(std::abs(fine - exact) < std::abs(coarse - exact));
  CHECK(std::abs(fine - exact) < 0.06 * exact);
}

TEST_CASE("solver and estimator argument checks") {
  SolveOptions opt;
  opt.c_guard = 0.5;
  CHECK_THROWS_AS(solve_mild(InitialCondition::delta_prime(), zero_noise(1e-3, 0.02, 0.1, 4.0), opt),
                  std::invalid_argument);
  opt.c_guard = 1.5;
  CHECK_THROWS_AS(solve_mild(InitialCondition::delta_prime(), zero_noise(1e-4, 0.02, 0.1, 4.0), opt),
                  std::invalid_argument);
  SolveOptions at0;
  at0.snapshot_times = {0.0};
  CHECK_THROWS_AS(solve_mild(InitialCondition::delta_prime(), zero_noise(4e-4, 0.02, 0.1, 4.0), at0),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_mild(InitialCondition::delta_prime(), zero_noise(4e-4, 0.02, 0.5, 1.0)), DomainLeakage);

  const MildSolution s = solve_mild(InitialCondition::delta_prime(), zero_noise(4e-4, 0.02, 0.1, 4.0));
  CHECK_THROWS_AS(s.time_index(0.05), std::out_of_range);
  CHECK_THROWS_AS(s.at(0, 4.5), std::out_of_range);

  std::vector<MildSolution> few(50, s);
  CHECK_THROWS_AS(moment_estimate(few, 0.1, 1.0, 1), std::invalid_argument);
  std::vector<MildSolution> flat(100, s);
  CHECK_THROWS_AS(moment_estimate(flat, 0.1, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(moment_estimate(flat, 0.1, 1.0, 3), std::invalid_argument);
}

TEST_CASE("csv writers") {
  const MildSolution s = solve_mild(InitialCondition::delta_prime(), zero_noise(4e-4, 0.1, 0.1, 4.0));
  std::ostringstream a, b;
  write_solution_csv(a, s);
  CHECK(a.str().rfind("t,u,value\n", 0) == 0);
  write_ensemble_summary_csv(b, {s, s});
  CHECK(b.str().rfind("t,u,mean,var,stderr,n\n", 0) == 0);
  const std::string body = b.str();
  CHECK(std::count(body.begin(), body.end(), '\n') == 1 + static_cast<long>(s.space.size()));
}

TEST_CASE("Picard layers of the second moment") {
  const PicardState st = picard_layers(8);
  REQUIRE(st.q.size() == 9);
  CHECK(st.f[0][5] == 1.0);

  // first layer against the time integral of G_t
  const GaussLegendre gl(20);
  for (std::size_t i : {3u, 15u})
    for (std::size_t j : {4u, 8u, 16u}) {
      const double t = st.times[i], u = st.space[j];
      const double layer1 = gl.panels(
          [&](double phi) {
            const double s = 0.5 * t * (1.0 - std::cos(phi));
            return 0.5 * t * std::sin(phi) * gt_function(t, s, u).value;
          },
          0.0, std::numbers::pi, 8);
      CHECK(st.q[1][i][j] == doctest::Approx(layer1 / std::pow(d_dirichlet_kernel(t, u), 2)).epsilon(1e-8));
    }

  // the chaos series sums to the closed-form ratio
  for (std::size_t i : {3u, 7u, 15u})
    for (std::size_t j : {0u, 8u, 16u}) {
      double sum = 0.0;
      for (const auto& layer : st.q) sum += layer[i][j];
      CHECK(sum == doctest::Approx(second_moment_exact(st.times[i], st.space[j]).ratio).epsilon(5e-3));
    }

  // q_n(t,u) = t^{n/2} Q_n(u / sqrt t): t = T/4 at index 7, T at index 15
  for (int n : {1, 2, 3})
    for (std::size_t j : {2u, 4u, 8u})
      CHECK(std::pow(2.0, n) * st.q[n][7][j] == doctest::Approx(st.q[n][15][2 * j]).epsilon(1e-2));

  CHECK(st.partial_sums.back() == doctest::Approx(st.partial_sums[7]).epsilon(0.05));
  const PicardBoundCheck b = picard_bound_check(st, 6);
  CHECK(b.pass);
  CHECK(b.coarse_sup <= 1.0 + 1e-12);
  CHECK_THROWS_AS(picard_layers(9), std::invalid_argument);
}
