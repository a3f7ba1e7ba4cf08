#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fasep/hopfcole.hpp"
#include "fasep/stats.hpp"

using namespace fasep;

namespace {

HalfLineConfig evolved(double eps, double t, std::uint64_t stream) {
  const auto pr = weak_asym_params(eps);
  Rng rng(314, stream);
  HalfLineSimulator sim(make_empty_halfline(certified_margin(t)), pr, rng);
  sim.run_until(t);
  return sim.state();
}

// Brute-force residual: rebuild the full field after every event and integrate
// Delta^mu Z over each holding interval with the closed-form exponential.
std::vector<double> brute_residuals(const Trajectory& tr, const std::vector<int>& sites, double t) {
  const auto& pr = tr.params;
  HalfLineConfig cfg = std::get<HalfLineConfig>(tr.initial);
  std::vector<double> drift(sites.size(), 0.0);
  const auto z_init = hopf_cole(cfg, 0.0, pr);
  double last = 0.0;
  auto integrate = [&](double upto) {
    const auto z = hopf_cole(cfg, 0.0, pr);
    for (std::size_t i = 0; i < sites.size(); ++i)
      drift[i] += pr.diffusion * laplacian_mu(z, sites[i]) * exp_integral(pr.nu, last, upto);
    last = upto;
  };
  for (const auto& ev : tr.events) {
    if (ev.time > t) break;
    integrate(ev.time);
    cfg = apply_transition(cfg, Transition{ev.kind, ev.site, 0.0});
  }
  integrate(t);
  const auto z_end = hopf_cole(cfg, t, pr);
  std::vector<double> out;
  for (std::size_t i = 0; i < sites.size(); ++i)
    out.push_back(z_end.at(sites[i]) - z_init.at(sites[i]) - drift[i]);
  return out;
}

}  // namespace

TEST_CASE("height field examples") {
  const auto h = height_field(make_empty_halfline(6));
  for (int x = 0; x <= 6; ++x) CHECK(h.at(x) == -x);
  CHECK(h.at(9) == -9);

  // one injection, then that particle walks to site 3
  auto c = make_empty_halfline(6);
  c.set(3, 1);
  c.injections = 1;
  const auto g = height_field(c);
  CHECK(g.h0 == -2);
  CHECK(g.values == std::vector<std::int64_t>{-2, -3, -4, -3, -4, -5, -6});

  const int n = 7;
  auto full = parse_halfline_literal(std::string(n, '1'));
  full.injections = n;
  const auto hf = height_field(full);
  for (int x = 0; x <= n; ++x) CHECK(hf.at(x) == -2 * n + x);
}

TEST_CASE("Hopf-Cole field") {
  const auto pr = weak_asym_params(0.1);
  const auto z = hopf_cole(make_empty_halfline(30), 0.0, pr);
  for (int x = 0; x <= 40; ++x) CHECK(z.at(x) == doctest::Approx(std::pow(pr.mu, x)).epsilon(1e-13));
  CHECK(z.boundary == doctest::Approx(pr.mu * z.at(0)));
  CHECK(z.at(-1) == z.boundary);
  CHECK(z.at(2) == doctest::Approx(0.8187307530779818).epsilon(1e-14));

  SUBCASE("invariants along simulated states") {
    for (double eps : {0.1, 0.2, 0.4}) {
      const auto p = weak_asym_params(eps);
      const double t = 300.0;
      const auto cfg = evolved(eps, t, 1);
      const auto h = height_field(cfg);
      const auto zf = hopf_cole(h, t, p);
      const double up = std::sqrt(p.p / p.q), down = std::sqrt(p.q / p.p);
      for (int x = 0; x < zf.n(); ++x) {
        REQUIRE(zf.at(x) > 0.0);
        const double r = zf.at(x + 1) / zf.at(x);
        REQUIRE((std::abs(r - up) < 1e-12 || std::abs(r - down) < 1e-12));
        REQUIRE(std::abs(std::log(zf.at(x)) + p.lambda * static_cast<double>(h.at(x)) - p.nu * t) < 1e-11);
        REQUIRE(std::abs(h.at(x + 1) - h.at(x)) == 1);
      }
      CHECK(zf.boundary == doctest::Approx(p.mu * zf.at(0)).epsilon(1e-15));
    }
  }
}

TEST_CASE("laplacian_mu") {
  const auto pr = weak_asym_params(0.1);
  HopfColeField c;
  c.params = pr;
  c.values.assign(10, 2.5);
  c.boundary = pr.mu * 2.5;
  for (int x = 1; x < 9; ++x) CHECK(laplacian_mu(c, x) == doctest::Approx(0.0));

  const auto z = hopf_cole(make_empty_halfline(20), 0.0, pr);
  for (int x = 1; x < 19; ++x) {
    const double expect = std::pow(pr.mu, x) * (pr.mu + 1.0 / pr.mu - 2.0);
    CHECK(laplacian_mu(z, x) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(laplacian_mu(z, x) == doctest::Approx(2.0 * pr.nu * z.at(x)).epsilon(1e-10));
  }
  CHECK(laplacian_mu(z, 0) == doctest::Approx(-0.19032516392808096).epsilon(1e-12));
  CHECK_THROWS_AS(laplacian_mu(z, -1), std::out_of_range);
  CHECK_THROWS_AS(laplacian_mu(z, 20), std::out_of_range);
}

TEST_CASE("rescaled fields") {
  const double eps = 0.2;
  const auto pr = weak_asym_params(eps);
  const auto z = hopf_cole(make_empty_halfline(200), 0.0, pr);
  const auto s = rescale(z, eps, ScaleKind::zeta_neareq, 0.0);
  const auto e = rescale(z, eps, ScaleKind::zeta_empty, 0.0);
  for (int k = 0; k < 200; ++k) {
    const double u = eps * eps * k;
    CHECK(s(u) == doctest::Approx(std::pow(pr.mu, k)).epsilon(1e-12));
    CHECK(e(u) == doctest::Approx(s(u) / (eps * eps)).epsilon(1e-14));
  }
  // midpoint interpolation
  const double mid = eps * eps * 3.5;
  CHECK(s(mid) == doctest::Approx(0.5 * (std::pow(pr.mu, 3) + std::pow(pr.mu, 4))));
  CHECK_THROWS_AS(s(-0.1), std::out_of_range);
  CHECK_THROWS_AS(s(1e3), std::out_of_range);

  const auto late = hopf_cole(make_empty_halfline(10), 0.5 / std::pow(eps, 4), pr);
  CHECK_NOTHROW(rescale(late, eps, ScaleKind::zeta_empty, 0.5));
  CHECK_THROWS_AS(rescale(late, eps, ScaleKind::zeta_empty, 0.4), std::invalid_argument);
}

TEST_CASE("weak asymmetry expansion of the quadratic variation") {
  // all local patterns sigma(x), sigma(x+1) at x = 2 and sigma(1) at x = 0
  std::vector<double> worst;
  const std::vector<double> epss{0.2, 0.1, 0.05};
  for (double eps : epss) {
    const auto pr = weak_asym_params(eps);
    double w = 0.0;
    for (int bits = 0; bits < 8; ++bits) {
      auto c = make_empty_halfline(6);
      for (int k = 1; k <= 3; ++k) c.set(k, (bits >> (k - 1)) & 1);
      const auto z = hopf_cole(c, 0.0, pr);
      for (int x : {0, 2}) {
        const auto ex = qv_weak_asym_expansion(z, x);
        const double err = std::abs(qv_rate(c, z, x) - ex.leading - ex.gradient_term) / (z.at(x) * z.at(x));
        w = std::max(w, err);
      }
    }
    worst.push_back(w);
  }
  for (std::size_t i = 0; i < epss.size(); ++i) CHECK(worst[i] <= 1.5 * std::pow(epss[i], 3));
  for (std::size_t i = 0; i + 1 < epss.size(); ++i) {
    const double order = std::log(worst[i] / worst[i + 1]) / std::log(epss[i] / epss[i + 1]);
    CHECK(order > 2.8);
  }

  SUBCASE("flat patterns") {
    const double eps = 0.1;
    const auto pr = weak_asym_params(eps);
    for (int s : {0, 1}) {
      auto c = make_empty_halfline(6);
      if (s)
        for (int k = 1; k <= 6; ++k) c.set(k, 1);
      const auto z = hopf_cole(c, 0.0, pr);
      const double z2 = z.at(3) * z.at(3);
      const double expect = s ? (std::exp(eps) - 1) * (std::exp(-eps) - 1) : (std::exp(-eps) - 1) * (std::exp(eps) - 1);
      CHECK(qv_weak_asym_expansion(z, 3).gradient_term == doctest::Approx(expect * z2).epsilon(1e-12));
      CHECK(qv_rate(c, z, 3) == 0.0);
    }
  }
  SUBCASE("boundary cancellation with sigma(1) = 1") {
    for (double eps : epss) {
      const auto pr = weak_asym_params(eps);
      const auto c = parse_halfline_literal("100000");
      const auto z = hopf_cole(c, 0.0, pr);
      CHECK(qv_rate(c, z, 0) == 0.0);
      const auto ex = qv_weak_asym_expansion(z, 0);
      const double grad = (std::exp(eps) - 1.0) * z.at(0);
      CHECK(z.at(1) - z.at(0) == doctest::Approx(grad).epsilon(1e-13));
      CHECK(std::abs(ex.leading + ex.gradient_term) <= std::pow(eps, 3) * z.at(0) * z.at(0));
    }
  }
}

TEST_CASE("martingale residuals") {
  const double eps = 0.2;
  const auto pr = weak_asym_params(eps);
  const std::vector<int> sites{0, 1, 5, 12};
  const double t = 150.0;
  const int n = certified_margin(t);

  SUBCASE("t = 0") {
    const auto tr = simulate_ctmc(make_empty_halfline(n), pr, t, 1, 0, {RecordMode::full_log, {}});
    for (const auto& d : martingale_residual(tr, sites, 0.0, pr)) {
      CHECK(d.residual == 0.0);
      CHECK(d.qv_integral == 0.0);
    }
    CHECK_THROWS_AS(martingale_residual(tr, sites, t + 1.0, pr), std::invalid_argument);
  }
  SUBCASE("incremental tracker matches brute-force recomputation") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto tr = simulate_ctmc(make_empty_halfline(n), pr, t, 9, s, {RecordMode::full_log, {}});
      const auto fast = martingale_residual(tr, sites, t, pr);
      const auto slow = brute_residuals(tr, sites, t);
      for (std::size_t i = 0; i < sites.size(); ++i)
        CHECK(fast[i].residual == doctest::Approx(slow[i]).epsilon(1e-9).scale(1.0));
      REQUIRE(fast[0].cross.size() == sites.size() - 1);
      CHECK(fast[0].cross[1].y == 5);
      CHECK(fast[0].cross[1].product == doctest::Approx(fast[0].residual * fast[2].residual));
    }
  }
  SUBCASE("ensemble means vanish") {
    const int reps = 2000;
    std::vector<RunningStats> m(sites.size()), q(sites.size());
    RunningStats cross;
    for (int r = 0; r < reps; ++r) {
      Rng rng(5150, static_cast<std::uint64_t>(r));
      HalfLineSimulator sim(make_empty_halfline(n), pr, rng);
      MartingaleTracker tracker(sim.state(), pr, sites);
      while (sim.step(t)) tracker.on_event(sim.last_event());
      const auto d = tracker.finish(t);
      for (std::size_t i = 0; i < sites.size(); ++i) {
        m[i].add(d[i].residual);
        q[i].add(d[i].residual * d[i].residual - d[i].qv_integral);
      }
      cross.add(d[1].cross[0].product);
    }
    for (std::size_t i = 0; i < sites.size(); ++i) {
      CHECK(std::abs(m[i].mean()) <= 3.0 * m[i].stderr_mean());
      CHECK(std::abs(q[i].mean()) <= 3.0 * q[i].stderr_mean());
    }
    CHECK(std::abs(cross.mean()) <= 3.0 * cross.stderr_mean());
  }
}

TEST_CASE("field integrator matches direct sums") {
  const double eps = 0.2;
  const auto pr = weak_asym_params(eps);
  const double t = 100.0;
  const auto tr = simulate_ctmc(make_empty_halfline(certified_margin(t)), pr, t, 4, 0, {RecordMode::full_log, {}});
  std::vector<double> w1(40), w2(7, 0.0);
  for (std::size_t x = 0; x < w1.size(); ++x) w1[x] = std::sin(0.3 * static_cast<double>(x));
  w2[0] = 1.0;
  FieldIntegrator fi(std::get<HalfLineConfig>(tr.initial), pr, {w1, w2});

  HalfLineConfig cfg = std::get<HalfLineConfig>(tr.initial);
  double last = 0.0, i1 = 0.0, i2 = 0.0;
  auto direct = [&](const std::vector<double>& w, double time) {
    const auto z = hopf_cole(cfg, time, pr);
    double acc = 0.0;
    for (std::size_t x = 0; x < w.size(); ++x) acc += w[x] * z.at(static_cast<int>(x));
    return acc;
  };
  for (const auto& ev : tr.events) {
    i1 += direct(w1, 0.0) * exp_integral(pr.nu, last, ev.time);
    i2 += direct(w2, 0.0) * exp_integral(pr.nu, last, ev.time);
    last = ev.time;
    cfg = apply_transition(cfg, Transition{ev.kind, ev.site, 0.0});
    fi.on_event(ev);
  }
  i1 += direct(w1, 0.0) * exp_integral(pr.nu, last, t);
  i2 += direct(w2, 0.0) * exp_integral(pr.nu, last, t);
  fi.advance(t);
  CHECK(fi.current(0) == doctest::Approx(direct(w1, t)).epsilon(1e-10));
  CHECK(fi.current(1) == doctest::Approx(direct(w2, t)).epsilon(1e-10));
  CHECK(fi.integral(0) == doctest::Approx(i1).epsilon(1e-10));
  CHECK(fi.integral(1) == doctest::Approx(i2).epsilon(1e-10));
  CHECK(exp_integral(0.0, 1.0, 3.0) == 2.0);
  CHECK(exp_integral(1e-3, 0.0, 2.0) == doctest::Approx(std::expm1(2e-3) / 1e-3).epsilon(1e-14));
}

TEST_CASE("test function catalog") {
  for (const auto& name : test_function_names()) {
    const auto f = test_function(name);
    for (double u : {-0.7, -0.2, 0.0, 0.15, 0.45, 0.8, 1.3, 1.9}) {
      const double h = 1e-5;
      CHECK(f.d1(u) == doctest::Approx((f.f(u + h) - f.f(u - h)) / (2 * h)).epsilon(1e-6).scale(1.0));
      CHECK(f.d2(u) == doctest::Approx((f.d1(u + h) - f.d1(u - h)) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
    CHECK(std::abs(f.f(f.support + 1e-9)) < 1e-27);
  }
  const auto psi = test_function("bump");
  CHECK(psi.f(0.0) == 1.0);
  CHECK(psi.d1(0.0) == 0.0);
  CHECK_THROWS_AS(test_function("nope"), std::invalid_argument);
}

TEST_CASE("corrected test function") {
  const auto phi = test_function("hermite-damped");
  const auto psi = test_function("bump");
  const double eps = 0.1;
  const auto pe = corrected_test_function(phi, psi, eps);
  CHECK(pe.f(0.0) == doctest::Approx(eps).epsilon(1e-15));
  CHECK(pe.d1(0.0) == doctest::Approx(1.0));
  CHECK(pe.f(0.3) == doctest::Approx(phi.f(0.3) + eps * psi.f(0.3)));
  CHECK_THROWS_AS(corrected_test_function(psi, psi, eps), std::invalid_argument);

  // phi'(0) = 0 leaves phi unchanged
  TestFunction flat{"u^2 bump", [&](double u) { return u * u * psi.f(u); },
                    [&](double u) { return 2 * u * psi.f(u) + u * u * psi.d1(u); },
                    [&](double u) { return 2 * psi.f(u) + 4 * u * psi.d1(u) + u * u * psi.d2(u); }, 1.0};
  const auto same = corrected_test_function(flat, psi, eps);
  for (double u : {-0.5, 0.0, 0.3, 0.9}) CHECK(same.f(u) == flat.f(u));

  // eps^-2 [e^-eps phi_eps(0) - phi_eps(-eps^2)] -> 0, linearly in eps
  std::vector<double> b;
  for (double e : {0.2, 0.1, 0.05, 0.025}) {
    const auto pr = weak_asym_params(e);
    b.push_back(std::abs(boundary_combination(corrected_test_function(phi, psi, e), e, pr.mu)));
  }
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    CHECK(b[i + 1] < b[i]);
    CHECK(b[i] / b[i + 1] == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("eps pairing") {
  const auto phi = test_function("hermite-damped");
  const auto bump = test_function("bump");
  SUBCASE("constant field is a Riemann sum") {
    // int_0^1 bump = 0.4439938161680794 / e^{-1}... computed by the same bump
    std::vector<double> one(4000, 1.0);
    double fine = 0.0;
    const int m = 2000000;
    for (int i = 0; i < m; ++i) fine += bump.f((i + 0.5) / m) / m;
    const double e1 = 0.1, e2 = 0.05;
    const double err1 = std::abs(pairing_eps(one, bump.f, e1) - fine - 0.5 * e1 * e1);
    const double err2 = std::abs(pairing_eps(one, bump.f, e2) - fine - 0.5 * e2 * e2);
    // left-endpoint sum: error = f(0) eps^2 / 2 + O(eps^4)
    CHECK(err1 < 1e-5);
    CHECK(err2 < err1);
  }
  SUBCASE("linearity") {
    std::vector<double> a(300), b(300), ab(300);
    for (int x = 0; x < 300; ++x) {
      a[static_cast<std::size_t>(x)] = std::cos(0.1 * x);
      b[static_cast<std::size_t>(x)] = 1.0 / (1.0 + x);
      ab[static_cast<std::size_t>(x)] = 2.0 * a[static_cast<std::size_t>(x)] - 3.0 * b[static_cast<std::size_t>(x)];
    }
    const double e = 0.1;
    CHECK(pairing_eps(ab, phi.f, e) ==
          doctest::Approx(2.0 * pairing_eps(a, phi.f, e) - 3.0 * pairing_eps(b, phi.f, e)));
    auto sum = [&](double u) { return phi.f(u) + 0.5 * bump.f(u); };
    CHECK(pairing_eps(a, sum, e) == doctest::Approx(pairing_eps(a, phi.f, e) + 0.5 * pairing_eps(a, bump.f, e)));
  }
  SUBCASE("empty initial condition") {
    // eps^2 sum phi(eps^2 x) eps^-2 mu^x tends to phi'(0) = 1 at rate eps^2
    std::vector<double> err;
    for (double e : {0.2, 0.1, 0.05}) {
      const auto pr = weak_asym_params(e);
      const int n = static_cast<int>(9.0 / (e * e));
      const auto z = hopf_cole(make_empty_halfline(n), 0.0, pr);
      const auto r = rescale(z, e, ScaleKind::zeta_empty, 0.0);
      err.push_back(std::abs(pairing_eps(r.samples, phi.f, e) - phi.d1(0.0)));
    }
    CHECK(err[0] < 0.25);
    CHECK(err[1] < err[0]);
    CHECK(err[2] < err[1]);
    CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("Hopf-Cole parameter identities hold on every local pattern") {
  std::vector<WeakAsymParams> cases;
  for (double e : {0.05, 0.1, 0.2, 0.5, 0.9}) cases.push_back(weak_asym_params(e));
  cases.push_back(params_from_rates(0.7, 0.3));
  cases.push_back(params_from_rates(0.95, 0.05));
  for (const auto& pr : cases) {
    const auto chk = appendix_a_check(pr);
    for (double r : chk.parameter_conditions) CHECK(std::abs(r) <= 1e-12 * std::max(pr.nu, 1e-3));
    for (double r : chk.interior) CHECK(std::abs(r) <= 1e-12);
    CHECK(chk.boundary_ratio[0] == doctest::Approx(pr.mu).epsilon(1e-12));
    CHECK(chk.boundary_ratio[1] == doctest::Approx(pr.mu).epsilon(1e-12));
  }
}
