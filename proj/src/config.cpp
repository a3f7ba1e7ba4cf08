#include "fasep/config.hpp"

#include <algorithm>
#include <charconv>

#include "fasep/rng.hpp"

namespace fasep {

int FasepConfig::eta(int x) const {
  if (x < lo) {
    if (!left_fill) throw WindowTooSmall("eta queried left of window without fill closure");
    return 1;
  }
  if (x > hi()) {
    if (!right_empty) throw WindowTooSmall("eta queried right of window without empty closure");
    return 0;
  }
  return occ[static_cast<std::size_t>(x - lo)];
}

int FasepConfig::particles_in_window() const {
  return static_cast<int>(std::count(occ.begin(), occ.end(), std::uint8_t{1}));
}

RegularCert validate_regular(const FasepConfig& cfg) {
  if (!cfg.left_fill || !cfg.right_empty)
    throw WindowTooSmall("closure flags do not certify L and R");
  if (cfg.occ.empty()) throw WindowTooSmall("empty window");

  RegularCert c;
  // L: largest site with eta == 1 at and below it.
  int L = cfg.lo - 1;
  while (L + 1 <= cfg.hi() && cfg.eta(L + 1) == 1) ++L;
  // R: smallest site with eta == 0 at and above it.
  int R = cfg.hi() + 1;
  while (R - 1 >= cfg.lo && cfg.eta(R - 1) == 0) --R;
  c.L = L;
  c.R = R;
  for (int x = cfg.lo - 1; x < c.R; ++x) {
    if (cfg.eta(x) + cfg.eta(x + 1) < 1) return c;
  }
  c.regular = true;
  return c;
}

ParticleLabels label_particles(const FasepConfig& cfg) {
  const auto cert = validate_regular(cfg);
  if (!cert.regular) throw NotRegular("label_particles: configuration is not regular");
  ParticleLabels out;
  for (int x = cert.R - 1; x >= cfg.lo; --x)
    if (cfg.eta(x) == 1) out.positions.push_back(x);
  return out;
}

int HalfLineConfig::rightmost() const {
  for (int k = n_trunc(); k >= 1; --k)
    if (occ[static_cast<std::size_t>(k - 1)]) return k;
  return 0;
}

int HalfLineConfig::particle_count() const {
  return static_cast<int>(std::count(occ.begin(), occ.end(), std::uint8_t{1}));
}

void HalfLineConfig::extend(int new_n_trunc) {
  if (new_n_trunc > n_trunc()) occ.resize(static_cast<std::size_t>(new_n_trunc), 0);
}

bool same_occupation(const HalfLineConfig& a, const HalfLineConfig& b) {
  const int n = std::max(a.n_trunc(), b.n_trunc());
  for (int k = 1; k <= n; ++k)
    if (a.sigma(k) != b.sigma(k)) return false;
  return true;
}

HalfLineConfig map_to_halfline(const FasepConfig& cfg, int n_trunc) {
  const auto labels = label_particles(cfg);
  const int n = static_cast<int>(labels.positions.size());
  HalfLineConfig out;
  out.occ.assign(static_cast<std::size_t>(std::max(n, n_trunc)), 0);
  for (int i = 0; i < n; ++i)
    out.occ[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(1 - cfg.eta(labels.positions[i] - 1));
  return out;
}

FasepConfig make_step(int x0, int pad) {
  if (pad < 0) throw std::invalid_argument("make_step: negative pad");
  FasepConfig c;
  c.lo = x0 - pad;
  c.occ.assign(static_cast<std::size_t>(2 * pad + 2), 0);
  for (int x = c.lo; x <= x0; ++x) c.set(x, 1);
  return c;
}

HalfLineConfig make_empty_halfline(int n_trunc) {
  if (n_trunc < 1) throw std::invalid_argument("make_empty_halfline: n_trunc must be positive");
  HalfLineConfig c;
  c.occ.assign(static_cast<std::size_t>(n_trunc), 0);
  return c;
}

HalfLineConfig make_bernoulli(double rho, std::uint64_t seed, int n_trunc) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("make_bernoulli: rho outside [0,1]");
  if (n_trunc < 1) throw std::invalid_argument("make_bernoulli: a truncation bound is required");
  HalfLineConfig c = make_empty_halfline(n_trunc);
  Rng rng(seed, 0);
  for (auto& s : c.occ) s = rng.uniform() < rho ? 1 : 0;
  return c;
}

LatticeConfig make_initial(const InitialSpec& spec) {
  return std::visit(
      [](const auto& s) -> LatticeConfig {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StepInit>) return make_step(s.x0, s.pad);
        else if constexpr (std::is_same_v<T, EmptyHalfLineInit>) return make_empty_halfline(s.n_trunc);
        else if constexpr (std::is_same_v<T, BernoulliInit>) return make_bernoulli(s.rho, s.seed, s.n_trunc);
        else return parse_fasep_literal(s.literal);
      },
      spec);
}

FasepConfig parse_fasep_literal(const std::string& text) {
  if (text.size() < 3 || text[0] != '@') throw std::invalid_argument("bad config literal: " + text);
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("bad config literal: " + text);
  FasepConfig c;
  const char* first = text.data() + 1;
  const char* last = text.data() + colon;
  auto [ptr, ec] = std::from_chars(first, last, c.lo);
  if (ec != std::errc() || ptr != last) throw std::invalid_argument("bad window offset: " + text);
  for (std::size_t i = colon + 1; i < text.size(); ++i) {
    if (text[i] != '0' && text[i] != '1') throw std::invalid_argument("bad config literal: " + text);
    c.occ.push_back(static_cast<std::uint8_t>(text[i] - '0'));
  }
  if (c.occ.empty()) throw std::invalid_argument("empty config literal");
  return c;
}

std::string to_literal(const FasepConfig& cfg) {
  std::string s = "@" + std::to_string(cfg.lo) + ":";
  for (auto b : cfg.occ) s.push_back(static_cast<char>('0' + b));
  return s;
}

HalfLineConfig parse_halfline_literal(const std::string& bits) {
  HalfLineConfig c;
  for (char ch : bits) {
    if (ch != '0' && ch != '1') throw std::invalid_argument("bad half-line literal: " + bits);
    c.occ.push_back(static_cast<std::uint8_t>(ch - '0'));
  }
  return c;
}

std::string to_literal(const HalfLineConfig& cfg) {
  std::string s;
  for (auto b : cfg.occ) s.push_back(static_cast<char>('0' + b));
  return s;
}

std::vector<std::pair<FasepConfig, RegularCert>> enumerate_window_configs(int window_size) {
  if (window_size < 1 || window_size > 16)
    throw std::invalid_argument("enumerate_window_configs: window size must be in [1,16]");
  std::vector<std::pair<FasepConfig, RegularCert>> out;
  const unsigned count = 1u << window_size;
  out.reserve(count);
  for (unsigned bits = 0; bits < count; ++bits) {
    FasepConfig c;
    c.occ.resize(static_cast<std::size_t>(window_size));
    for (int i = 0; i < window_size; ++i) c.occ[static_cast<std::size_t>(i)] = (bits >> i) & 1u;
    auto cert = validate_regular(c);
    out.emplace_back(std::move(c), cert);
  }
  return out;
}

}  // namespace fasep
