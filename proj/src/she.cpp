#include "fasep/she.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <boost/random/normal_distribution.hpp>

#include "fasep/kernels.hpp"
#include "fasep/quadrature.hpp"
#include "fasep/rng.hpp"

namespace fasep {

namespace {

void check_sizes(double dt, double dx, double T, double u_max) {
  if (!(dt > 0.0 && dx > 0.0 && T > 0.0 && u_max > 0.0))
    throw std::invalid_argument("noise grid: dt, dx, T and u_max must be positive");
}

int steps(double T, double dt) { return std::max(1, static_cast<int>(std::lround(T / dt))); }
int cells(double u_max, double dx) { return std::max(2, static_cast<int>(std::lround(u_max / dx))); }

}  // namespace

NoiseGrid zero_noise(double dt, double dx, double T, double u_max) {
  check_sizes(dt, dx, T, u_max);
  NoiseGrid g;
  g.dt = dt;
  g.dx = dx;
  g.horizon = T;
  g.u_max = u_max;
  g.nt = steps(T, dt);
  g.nx = cells(u_max, dx);
  const std::size_t n = static_cast<std::size_t>(g.nt) * static_cast<std::size_t>(g.nx - 1);
  if (n > kMaxNoiseCells) throw std::length_error("noise grid exceeds the cell budget");
  g.values.assign(n, 0.0);
  return g;
}

NoiseGrid sample_noise(double dt, double dx, double T, double u_max, std::uint64_t seed, std::uint64_t stream) {
  NoiseGrid g = zero_noise(dt, dx, T, u_max);
  g.seed = seed;
  g.stream = stream;
  // ziggurat sampler, about twice as fast as the polar method for these sizes
  Rng rng(seed, stream);
  boost::random::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(dt * dx));
  for (double& v : g.values) v = normal(rng.engine());
  return g;
}

InitialCondition InitialCondition::from_samples(std::vector<double> space, std::vector<double> values) {
  if (space.size() != values.size() || space.size() < 2)
    throw std::invalid_argument("from_samples: need matching grids of size >= 2");
  return near_eq([space = std::move(space), values = std::move(values)](double u) {
    if (u < space.front() || u > space.back()) return 0.0;
    const auto it = std::upper_bound(space.begin(), space.end(), u);
    if (it == space.end()) return values.back();
    const std::size_t k = static_cast<std::size_t>(it - space.begin());
    const double w = (u - space[k - 1]) / (space[k] - space[k - 1]);
    return (1.0 - w) * values[k - 1] + w * values[k];
  });
}

std::size_t MildSolution::time_index(double t) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  if (times.empty() || std::abs(times[best] - t) > 0.5 * dt + 1e-12)
    throw std::out_of_range("MildSolution: no snapshot at the requested time");
  return best;
}

double MildSolution::at(std::size_t k, double u) const {
  if (u < 0.0 || u > space.back()) throw std::out_of_range("MildSolution: u outside the domain");
  const double dx = space[1] - space[0];
  const std::size_t j = std::min(static_cast<std::size_t>(u / dx), space.size() - 2);
  const double w = (u - space[j]) / dx;
  return (1.0 - w) * values[k][j] + w * values[k][j + 1];
}

MildSolution solve_mild(const InitialCondition& ic, const NoiseGrid& noise, const SolveOptions& opt) {
  if (!(opt.c_guard > 0.0 && opt.c_guard <= 1.0)) throw std::invalid_argument("solve_mild: c_guard must lie in (0,1]");
  const double dt = noise.dt, dx = noise.dx;
  if (dt > opt.c_guard * dx * dx * (1.0 + 1e-12))
    throw std::invalid_argument("solve_mild: stability guard dt <= c_guard dx^2 violated");
  if (ic.kind == IcKind::near_eq && !ic.g) throw std::invalid_argument("solve_mild: near_eq needs a function");

  const int nt = noise.nt, nx = noise.nx;
  // Heat step exp(dt Delta_h / 2): the continuous-time walk kernel e^{-c} I_m(c),
  // c = dt/dx^2, applied to the odd extension of the field about both walls.
  // The explicit three-point step would decouple odd and even sites at c = 1.
  std::vector<double> stencil = fullline_table(dt / (dx * dx), 64);
  while (stencil.size() > 1 && stencil.back() < 1e-18 * stencil.front()) stencil.pop_back();
  const int band = static_cast<int>(stencil.size()) - 1;
  if (band >= nx) throw std::invalid_argument("solve_mild: domain narrower than the heat stencil");
  std::vector<double> ext(static_cast<std::size_t>(nx + 2 * band) + 1, 0.0);
  std::vector<int> record;
  for (double t : opt.snapshot_times.empty() ? std::vector<double>{nt * dt} : opt.snapshot_times) {
    const long k = std::lround(t / dt);
    if (k < 0 || k > nt) throw std::invalid_argument("solve_mild: snapshot outside the horizon");
    if (k == 0 && ic.kind == IcKind::delta_prime)
      throw std::invalid_argument("solve_mild: delta_prime has no grid values at t = 0");
    record.push_back(static_cast<int>(k));
  }
  std::sort(record.begin(), record.end());
  record.erase(std::unique(record.begin(), record.end()), record.end());

  MildSolution sol;
  sol.ic_kind = ic.kind;
  sol.dt = dt;
  for (int j = 0; j <= nx; ++j) sol.space.push_back(j * dx);

  const bool dp = ic.kind == IcKind::delta_prime;
  std::vector<double> w(static_cast<std::size_t>(nx) + 1, 0.0), z(w.size(), 0.0), next(w.size(), 0.0);
  if (!dp)
    for (int j = 1; j < nx; ++j) w[j] = ic.g(j * dx);
  auto field = [&](int n) {
    if (!dp) {
      z = w;
      return;
    }
    // dP_t(j dx) with the Gaussian factor built by a product recurrence
    const double t = n * dt, a = dx * dx / (2.0 * t);
    const double c = n == 0 ? 0.0 : 2.0 * std::sqrt(2.0 / std::numbers::pi) / (t * std::sqrt(t));
    double gauss = 1.0, step = std::exp(-a);
    const double q = step * step;
    for (int j = 0; j <= nx; ++j) {
      z[j] = c * j * dx * gauss + w[j];
      gauss *= step;
      step *= q;
    }
    z[0] = 0.0;
    z[nx] = 0.0;
  };

  std::size_t rec = 0;
  const bool noisy = opt.noise_scale != 0.0 &&
                     std::any_of(noise.values.begin(), noise.values.end(), [](double v) { return v != 0.0; });
  for (int n = 0;; ++n) {
    field(n);
    if (rec < record.size() && record[rec] == n) {
      sol.times.push_back(n * dt);
      sol.values.push_back(z);
      ++rec;
    }
    if (n == nt) break;
    if (noisy)
      for (int j = 1; j < nx; ++j) w[j] += opt.noise_scale * z[j] * noise.at(n, j) * dt;
    for (int j = 0; j <= nx; ++j) ext[j + band] = w[j];
    for (int i = 1; i <= band; ++i) {
      ext[band - i] = -w[i];
      ext[nx + band + i] = -w[nx - i];
    }
    for (int j = 1; j < nx; ++j) {
      const double* e = &ext[j + band];
      double acc = stencil[0] * e[0];
      for (int m = 1; m <= band; ++m) acc += stencil[m] * (e[m] + e[-m]);
      next[j] = acc;
    }
    next[0] = next[nx] = 0.0;
    w.swap(next);

    double top = 0.0;
    for (int j = 1; j < nx; ++j) top = std::max(top, std::abs(w[j] + (dp ? z[j] : 0.0)));
    if (top > 0.0) {
      const double edge = std::abs(w[nx - 1]) + (dp ? d_dirichlet_kernel((n + 1) * dt, (nx - 1) * dx) : 0.0);
      sol.leakage = std::max(sol.leakage, edge / top);
    }
  }
  if (sol.leakage > opt.max_leakage) throw DomainLeakage("solve_mild: field reaches the far edge of the domain");
  return sol;
}

std::vector<MildSolution> solve_ensemble(const InitialCondition& ic, const EnsembleSpec& spec, const SolveOptions& opt) {
  if (spec.replicas < 1) throw std::invalid_argument("solve_ensemble: replicas < 1");
  const double u_max = spec.u_max > 0.0 ? spec.u_max : 6.0 * std::sqrt(spec.T) + spec.u_interest;
  std::vector<MildSolution> out(static_cast<std::size_t>(spec.replicas));
  parallel_for(spec.replicas, spec.threads, [&](std::int64_t i) {
    const NoiseGrid g = sample_noise(spec.dt, spec.dx, spec.T, u_max, spec.seed, static_cast<std::uint64_t>(i));
    out[static_cast<std::size_t>(i)] = solve_mild(ic, g, opt);
  });
  return out;
}

McResult moment_estimate(const std::vector<MildSolution>& ensemble, double t, double u, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("moment_estimate: order must be 1 or 2");
  if (ensemble.size() < 100) throw std::invalid_argument("moment_estimate: degenerate ensemble (fewer than 100 members)");
  RunningStats s;
  for (const auto& m : ensemble) {
    const double v = m.at(m.time_index(t), u);
    s.add(order == 1 ? v : v * v);
  }
  if (!(s.variance() > 0.0)) throw std::invalid_argument("moment_estimate: degenerate ensemble (no spread)");
  McResult r = McResult::from(s, 0, 0);
  r.t = t;
  r.u = u;
  r.experiment = order == 1 ? "she_first_moment" : "she_second_moment";
  return r;
}

double uniqueness_diagnostic(const std::vector<MildSolution>& ensemble) {
  if (ensemble.empty()) return 0.0;
  double best = 0.0;
  const auto& ref = ensemble.front();
  for (std::size_t k = 0; k < ref.times.size(); ++k)
    for (std::size_t j = 0; j < ref.space.size(); ++j) {
      double m2 = 0.0;
      for (const auto& m : ensemble) m2 += m.values[k][j] * m.values[k][j];
      best = std::max(best, ref.times[k] * ref.times[k] * m2 / ensemble.size());
    }
  return best;
}

void write_solution_csv(std::ostream& os, const MildSolution& sol) {
  os << "t,u,value\n" << std::setprecision(12);
  for (std::size_t k = 0; k < sol.times.size(); ++k)
    for (std::size_t j = 0; j < sol.space.size(); ++j)
      os << sol.times[k] << ',' << sol.space[j] << ',' << sol.values[k][j] << '\n';
}

void write_ensemble_summary_csv(std::ostream& os, const std::vector<MildSolution>& ensemble) {
  os << "t,u,mean,var,stderr,n\n" << std::setprecision(12);
  if (ensemble.empty()) return;
  const auto& ref = ensemble.front();
  for (std::size_t k = 0; k < ref.times.size(); ++k)
    for (std::size_t j = 0; j < ref.space.size(); ++j) {
      RunningStats s;
      for (const auto& m : ensemble) s.add(m.values[k][j]);
      os << ref.times[k] << ',' << ref.space[j] << ',' << s.mean() << ',' << s.variance() << ',' << s.stderr_mean()
         << ',' << s.n() << '\n';
    }
}

DeterministicOrder deterministic_order(double dx, double c_guard, double t0, double t1, double u_max) {
  if (!(t1 > t0 && t0 > 0.0)) throw std::invalid_argument("deterministic_order: need 0 < t0 < t1");
  auto error_at = [&](double h) {
    const int nt = static_cast<int>(std::ceil((t1 - t0) / (c_guard * h * h) - 1e-9));
    const double dt = (t1 - t0) / nt;
    const NoiseGrid g = zero_noise(dt, h, t1 - t0, u_max);
    SolveOptions opt;
    opt.c_guard = c_guard;
    const MildSolution s = solve_mild(InitialCondition::near_eq([&](double u) { return d_dirichlet_kernel(t0, u); }), g, opt);
    double e = 0.0;
    for (std::size_t j = 0; j < s.space.size(); ++j)
      e = std::max(e, std::abs(s.values.back()[j] - d_dirichlet_kernel(t1, s.space[j])));
    return e;
  };
  DeterministicOrder d;
  d.error_coarse = error_at(dx);
  d.error_fine = error_at(0.5 * dx);
  d.order = std::log(d.error_coarse / d.error_fine) / std::log(4.0);
  return d;
}

// ---------------------------------------------------------------------------
// Picard layers

double PicardState::second_moment(int k, std::size_t i, std::size_t j) const {
  const double d = d_dirichlet_kernel(times[i], space[j]);
  return q[static_cast<std::size_t>(k)][i][j] * d * d;
}

namespace {

struct Layer {
  const PicardGrid& g;
  const std::vector<std::vector<double>>* q;  // null for k = 0
  double u_max;

  double operator()(double s, double v) const {
    if (!q) return 1.0;
    double si = std::sqrt(s / g.T) * g.n_t;
    double vj = std::clamp(v / u_max * g.n_u, 0.0, double(g.n_u));
    si = std::clamp(si, 0.0, double(g.n_t));
    const int a = std::min(static_cast<int>(si), g.n_t - 1);
    const int b = std::min(static_cast<int>(vj), g.n_u - 1);
    const double ws = si - a, wv = vj - b;
    // time index a corresponds to t = T (a/n_t)^2; index 0 is t = 0 where q vanishes
    auto at = [&](int i, int j) { return i == 0 ? 0.0 : (*q)[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)]; };
    const double lo = (1.0 - wv) * at(a, b) + wv * at(a, b + 1);
    const double hi = (1.0 - wv) * at(a + 1, b) + wv * at(a + 1, b + 1);
    return (1.0 - ws) * lo + ws * hi;
  }
};

// The weight P_{t-s}(u,v)^2 dP_s(v)^2 / dP_t(u)^2 with the Gaussian factors
// combined, so it stays finite where dP_t(u) underflows.
double next_layer(const Layer& prev, double t, double u, const GaussLegendre& gl) {
  auto inner = [&](double s) {
    const double c = u * s / t, a = t / (s * (t - s)), sd = std::sqrt(0.5 / a);
    const double lo = std::max(0.0, c - 12.0 * sd), hi = c + 16.0 * sd;
    const double pre = t * t * t / (2.0 * std::numbers::pi * (t - s) * u * u * s * s * s);
    auto w = [&](double v) {
      const double img = -std::expm1(-2.0 * u * v / (t - s));
      return pre * img * img * v * v * std::exp(-a * (v - c) * (v - c)) * prev(s, v);
    };
    return gl.panels(w, lo, hi, prev.g.v_panels);
  };
  auto outer = [&](double phi) {
    const double s = 0.5 * t * (1.0 - std::cos(phi));
    if (!(s > 0.0 && s < t)) return 0.0;
    return std::sqrt(s * (t - s)) * inner(s);
  };
  return gl.panels(outer, 0.0, std::numbers::pi, prev.g.phi_panels);
}

}  // namespace

PicardState picard_layers(int n_max, const PicardGrid& grid) {
  if (n_max < 0 || n_max > 8) throw std::invalid_argument("picard_layers: n_max must lie in [0, 8]");
  if (grid.n_t < 2 || grid.n_u < 2 || !(grid.T > 0.0)) throw std::invalid_argument("picard_layers: bad grid");
  const GaussLegendre gl(20);
  const double u_max = grid.u_max_scale * std::sqrt(grid.T);
  PicardState st;
  st.n = n_max;
  for (int i = 1; i <= grid.n_t; ++i) st.times.push_back(grid.T * double(i * i) / (grid.n_t * grid.n_t));
  for (int j = 0; j <= grid.n_u; ++j) st.space.push_back(j == 0 ? 1e-4 * u_max / grid.n_u : j * u_max / grid.n_u);

  const std::size_t nt = st.times.size(), nu = st.space.size();
  st.q.push_back(std::vector<std::vector<double>>(nt, std::vector<double>(nu, 1.0)));
  for (int k = 0; k < n_max; ++k) {
    const Layer prev{grid, k == 0 ? nullptr : &st.q.back(), u_max};
    std::vector<std::vector<double>> next(nt, std::vector<double>(nu, 0.0));
    parallel_for(static_cast<std::int64_t>(nt * nu), 0, [&](std::int64_t idx) {
      const std::size_t i = static_cast<std::size_t>(idx) / nu, j = static_cast<std::size_t>(idx) % nu;
      next[i][j] = next_layer(prev, st.times[i], st.space[j], gl);
    });
    st.q.push_back(std::move(next));
  }
  double acc = 0.0;
  for (const auto& layer : st.q) {
    std::vector<double> f;
    double sup = 0.0;
    for (const auto& row : layer) {
      f.push_back(*std::max_element(row.begin(), row.end()));
      sup = std::max(sup, f.back());
    }
    st.f.push_back(f);
    st.norms.push_back(std::sqrt(sup));
    acc += st.norms.back();
    st.partial_sums.push_back(acc);
  }
  return st;
}

PicardBoundCheck picard_bound_check(const PicardState& st, int n_check) {
  n_check = std::min(n_check, st.n);
  auto scaled = [&](int n, std::size_t i) {
    return st.f[static_cast<std::size_t>(n)][i] * std::tgamma(n / 2 + 1.0) / std::pow(st.times[i], n / 2.0);
  };
  PicardBoundCheck out;
  for (int n = 1; n <= n_check; ++n)
    for (std::size_t i = 0; i < st.times.size(); i += 2) out.C = std::max(out.C, std::pow(scaled(n, i), 1.0 / n));
  for (int n = 0; n <= n_check; ++n)
    for (std::size_t i = 0; i < st.times.size(); ++i) {
      const double r = scaled(n, i) / std::pow(out.C, n);
      (i % 2 == 0 ? out.coarse_sup : out.fine_sup) = std::max(i % 2 == 0 ? out.coarse_sup : out.fine_sup, r);
    }
  out.pass = out.fine_sup <= 2.0;
  return out;
}

}  // namespace fasep
