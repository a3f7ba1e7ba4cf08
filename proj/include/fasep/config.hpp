#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fasep {

struct WindowTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotRegular : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// FASEP configuration on a finite window of Z. Outside the window the
// closure flags say what the configuration is; an unset flag means unknown.
struct FasepConfig {
  int lo = 0;
  std::vector<std::uint8_t> occ;  // occ[i] = eta(lo + i)
  bool left_fill = true;
  bool right_empty = true;

  int hi() const { return lo + static_cast<int>(occ.size()) - 1; }
  bool in_window(int x) const { return x >= lo && x <= hi(); }
  int eta(int x) const;
  void set(int x, int v) { occ.at(static_cast<std::size_t>(x - lo)) = static_cast<std::uint8_t>(v); }
  int particles_in_window() const;

  bool operator==(const FasepConfig&) const = default;
};

struct RegularCert {
  bool regular = false;
  int L = 0;
  int R = 0;
};

RegularCert validate_regular(const FasepConfig& cfg);

// Right-to-left positions X_1 > X_2 > ... of the particles inside the window.
struct ParticleLabels {
  std::vector<int> positions;
};

ParticleLabels label_particles(const FasepConfig& cfg);

// Half-line ASEP on sites 1..n_trunc; sigma(k) = occ[k-1].
struct HalfLineConfig {
  std::vector<std::uint8_t> occ;
  std::int64_t injections = 0;

  int n_trunc() const { return static_cast<int>(occ.size()); }
  int sigma(int k) const {
    return (k >= 1 && k <= n_trunc()) ? occ[static_cast<std::size_t>(k - 1)] : 0;
  }
  void set(int k, int v) { occ.at(static_cast<std::size_t>(k - 1)) = static_cast<std::uint8_t>(v); }
  int rightmost() const;  // 0 when empty
  int particle_count() const;
  // Explicit growth of the truncation bound; never shrinks.
  void extend(int new_n_trunc);

  bool operator==(const HalfLineConfig&) const = default;
};

// Occupations agree after zero padding; the injection counter is ignored.
bool same_occupation(const HalfLineConfig& a, const HalfLineConfig& b);

// n_trunc == 0 means "number of labels".
HalfLineConfig map_to_halfline(const FasepConfig& cfg, int n_trunc = 0);

struct StepInit {
  int x0 = 0;
  int pad = 4;
};
struct EmptyHalfLineInit {
  int n_trunc = 64;
};
struct BernoulliInit {
  double rho = 0.5;
  std::uint64_t seed = 1;
  int n_trunc = 0;
};
struct ExplicitInit {
  std::string literal;
};

using InitialSpec = std::variant<StepInit, EmptyHalfLineInit, BernoulliInit, ExplicitInit>;
using LatticeConfig = std::variant<FasepConfig, HalfLineConfig>;

FasepConfig make_step(int x0, int pad = 4);
HalfLineConfig make_empty_halfline(int n_trunc);
HalfLineConfig make_bernoulli(double rho, std::uint64_t seed, int n_trunc);
LatticeConfig make_initial(const InitialSpec& spec);

// "@lo:bits" with left fill and right empty closures, e.g. "@-6:111101101101".
FasepConfig parse_fasep_literal(const std::string& text);
std::string to_literal(const FasepConfig& cfg);
// Plain bit string for sites 1..n.
HalfLineConfig parse_halfline_literal(const std::string& bits);
std::string to_literal(const HalfLineConfig& cfg);

// All 2^n patterns on window [0, n-1] with both closures set.
std::vector<std::pair<FasepConfig, RegularCert>> enumerate_window_configs(int window_size);

}  // namespace fasep
