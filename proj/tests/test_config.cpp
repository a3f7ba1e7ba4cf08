#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fasep/config.hpp"
#include "fasep/dynamics.hpp"

using namespace fasep;

namespace {

// Figure 1: particles at -9..-6, -4, -2, -1, 0, 2, 4, 5, filled below -9.
const char* kFigure1 = "@-9:111101011101011";

// Direct check of the regular-set definition on an explicit window.
bool regular_by_definition(const FasepConfig& c, int L, int R) {
  for (int x = c.lo - 2; x <= L; ++x)
    if (c.eta(x) != 1) return false;
  for (int x = R; x <= c.hi() + 2; ++x)
    if (c.eta(x) != 0) return false;
  for (int x = c.lo - 2; x < R; ++x)
    if (c.eta(x) + c.eta(x + 1) < 1) return false;
  return true;
}

}  // namespace

TEST_CASE("step configuration is regular with L=0, R=1") {
  const auto c = make_step(0);
  const auto cert = validate_regular(c);
  CHECK(cert.regular);
  CHECK(cert.L == 0);
  CHECK(cert.R == 1);
  for (int x = -4; x <= 5; ++x) CHECK(c.eta(x) == (x <= 0 ? 1 : 0));
}

TEST_CASE("figure 1 configuration") {
  const auto c = parse_fasep_literal(kFigure1);
  const auto cert = validate_regular(c);
  CHECK(cert.regular);
  CHECK(cert.L == -6);
  CHECK(cert.R == 6);

  const auto labels = label_particles(c);
  CHECK(labels.positions == std::vector<int>{5, 4, 2, 0, -1, -2, -4, -6, -7, -8, -9});

  const auto s = map_to_halfline(c);
  CHECK(s.n_trunc() == 11);
  for (int k = 1; k <= 11; ++k) CHECK(s.sigma(k) == (k == 2 || k == 3 || k == 6 || k == 7 ? 1 : 0));
  CHECK(s.injections == 0);
}

TEST_CASE("non-regular configuration") {
  // eta(0) = eta(1) = 0 with a particle at 2
  const auto c = parse_fasep_literal("@-2:110010");
  CHECK_FALSE(validate_regular(c).regular);
  CHECK_THROWS_AS(label_particles(c), NotRegular);
  CHECK_THROWS_AS(map_to_halfline(c), NotRegular);
}

TEST_CASE("labels are translation equivariant") {
  auto c = parse_fasep_literal(kFigure1);
  const auto base = label_particles(c).positions;
  c.lo += 3;
  const auto shifted = label_particles(c).positions;
  REQUIRE(base.size() == shifted.size());
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(shifted[i] == base[i] + 3);
}

TEST_CASE("step maps to the empty half-line for every x0") {
  for (int x0 = -5; x0 <= 5; ++x0) {
    const auto c = make_step(x0, 3);
    const auto labels = label_particles(c).positions;
    for (std::size_t i = 0; i < labels.size(); ++i) CHECK(labels[i] == x0 - static_cast<int>(i));
    CHECK(map_to_halfline(c).particle_count() == 0);
  }
}

TEST_CASE("packed configuration with one hole at X1 - 1") {
  // particles at 3 and below 1, hole at 2
  const auto c = parse_fasep_literal("@-3:11111010");
  const auto s = map_to_halfline(c);
  CHECK(s.sigma(1) == 1);
  for (int k = 2; k <= s.n_trunc(); ++k) CHECK(s.sigma(k) == 0);
}

TEST_CASE("closure flags are required to certify L and R") {
  auto c = make_step(0);
  c.right_empty = false;
  CHECK_THROWS_AS(validate_regular(c), WindowTooSmall);
  CHECK_THROWS_AS(c.eta(c.hi() + 1), WindowTooSmall);
}

TEST_CASE("bernoulli initial conditions") {
  const auto e = make_bernoulli(0.0, 17, 100);
  CHECK(e.particle_count() == 0);
  const int n = 100000;
  const auto b = make_bernoulli(0.45, 1, n);
  const double dens = static_cast<double>(b.particle_count()) / n;
  CHECK(std::abs(dens - 0.45) <= 3.0 * std::sqrt(0.45 * 0.55 / n));
  CHECK(make_bernoulli(0.45, 1, 50) == make_bernoulli(0.45, 1, 50));
  CHECK_THROWS_AS(make_bernoulli(1.5, 1, 10), std::invalid_argument);
  CHECK_THROWS_AS(make_bernoulli(-0.1, 1, 10), std::invalid_argument);
  CHECK_THROWS_AS(make_bernoulli(0.5, 1, 0), std::invalid_argument);
}

TEST_CASE("make_initial dispatch") {
  CHECK(std::get<FasepConfig>(make_initial(StepInit{0, 4})) == make_step(0, 4));
  CHECK(std::get<HalfLineConfig>(make_initial(EmptyHalfLineInit{10})).particle_count() == 0);
  CHECK(to_literal(std::get<FasepConfig>(make_initial(ExplicitInit{kFigure1}))) == kFigure1);
}

TEST_CASE("literal round trips and parse errors") {
  const auto c = parse_fasep_literal("@-6:111101101101");
  CHECK(c.lo == -6);
  CHECK(to_literal(c) == "@-6:111101101101");
  CHECK(to_literal(parse_halfline_literal("0110011")) == "0110011");
  CHECK_THROWS_AS(parse_fasep_literal("-6:1101"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fasep_literal("@x:1101"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fasep_literal("@0:1201"), std::invalid_argument);
  CHECK_THROWS_AS(parse_halfline_literal("01a"), std::invalid_argument);
}

TEST_CASE("window enumeration") {
  CHECK(enumerate_window_configs(2).size() == 4);
  CHECK_THROWS_AS(enumerate_window_configs(17), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_window_configs(0), std::invalid_argument);

  // Size 3 by hand: only 001 has two adjacent holes left of R.
  int regular = 0;
  for (const auto& [c, cert] : enumerate_window_configs(3)) {
    if (cert.regular) {
      ++regular;
      CHECK(regular_by_definition(c, cert.L, cert.R));
    }
  }
  CHECK(regular == 7);
}

TEST_CASE("validate_regular agrees with the definition on all windows up to 12") {
  for (int n = 1; n <= 12; ++n) {
    for (const auto& [c, cert] : enumerate_window_configs(n)) {
      CHECK(cert.L < cert.R);
      for (int x = c.lo - 1; x <= cert.L; ++x) REQUIRE(c.eta(x) == 1);
      for (int x = cert.R; x <= c.hi() + 1; ++x) REQUIRE(c.eta(x) == 0);
      if (cert.L + 1 <= c.hi()) REQUIRE(c.eta(cert.L + 1) == 0);
      if (cert.R - 1 >= c.lo) REQUIRE(c.eta(cert.R - 1) == 1);
      REQUIRE(cert.regular == regular_by_definition(c, cert.L, cert.R));
    }
  }
}

TEST_CASE("regular set is preserved by every enabled transition") {
  const auto pr = weak_asym_params(0.3);
  for (int n = 1; n <= 12; ++n) {
    for (const auto& [c, cert] : enumerate_window_configs(n)) {
      if (!cert.regular) continue;
      // two sites of margin so moves at L and R stay inside the window
      FasepConfig padded;
      padded.lo = c.lo - 2;
      padded.occ = {1, 1};
      padded.occ.insert(padded.occ.end(), c.occ.begin(), c.occ.end());
      padded.occ.push_back(0);
      padded.occ.push_back(0);
      for (const auto& tr : enabled_transitions_fasep(padded, pr)) {
        const auto next = apply_transition(padded, tr);
        REQUIRE(validate_regular(next).regular);
        const auto x = label_particles(next).positions;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
          const int gap = x[i] - x[i + 1];
          REQUIRE((gap == 1 || gap == 2));
        }
      }
    }
  }
}
