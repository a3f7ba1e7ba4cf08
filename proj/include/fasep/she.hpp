#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "fasep/stats.hpp"

namespace fasep {

struct DomainLeakage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Discretised space-time white noise: one N(0, 1/(dt dx)) value per time step
// and interior grid point u_j = j dx, j = 1..nx-1.
struct NoiseGrid {
  double dt = 0.0;
  double dx = 0.0;
  double horizon = 0.0;
  double u_max = 0.0;
  int nt = 0;
  int nx = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<double> values;  // row-major, nt x (nx-1)
  double at(int step, int j) const { return values[static_cast<std::size_t>(step) * (nx - 1) + (j - 1)]; }
};

constexpr std::size_t kMaxNoiseCells = 200'000'000;

// Throws std::invalid_argument for non-positive sizes, std::length_error
// beyond kMaxNoiseCells.
NoiseGrid sample_noise(double dt, double dx, double T, double u_max, std::uint64_t seed, std::uint64_t stream = 0);
NoiseGrid zero_noise(double dt, double dx, double T, double u_max);

enum class IcKind { delta_prime, near_eq };

struct InitialCondition {
  IcKind kind = IcKind::delta_prime;
  std::function<double(double)> g;  // near_eq only

  static InitialCondition delta_prime() { return {}; }
  static InitialCondition near_eq(std::function<double(double)> g) { return {IcKind::near_eq, std::move(g)}; }
  // Piecewise-linear through (space[k], values[k]); zero outside.
  static InitialCondition from_samples(std::vector<double> space, std::vector<double> values);
};

struct SolveOptions {
  std::vector<double> snapshot_times;  // empty: the horizon only
  double c_guard = 1.0;                // dt <= c_guard dx^2, c_guard <= 1
  double noise_scale = 1.0;
  double max_leakage = 1e-6;  // |Z| next to the far edge relative to sup |Z|
};

struct MildSolution {
  std::vector<double> times;
  std::vector<double> space;                // u_j = j dx, j = 0..nx
  std::vector<std::vector<double>> values;  // values[k][j] at times[k]
  IcKind ic_kind = IcKind::delta_prime;
  double dt = 0.0;
  double leakage = 0.0;
  std::size_t time_index(double t) const;  // nearest snapshot within dt/2, else std::out_of_range
  double at(std::size_t k, double u) const;  // linear in u
};

// Explicit Duhamel stepping Z <- S(Z + gamma Z xi dt) with S the Dirichlet heat
// step. For delta_prime the field is dP_t(u) + W with W stepped from 0, so the
// singular initial datum is never put on the grid.
MildSolution solve_mild(const InitialCondition& ic, const NoiseGrid& noise, const SolveOptions& opt = {});

struct EnsembleSpec {
  double dt = 1e-4;
  double dx = 0.01;
  double T = 0.5;
  double u_max = 0.0;  // 0: 6 sqrt(T) + u_interest
  double u_interest = 1.0;
  std::uint64_t seed = 1;
  int replicas = 100;
  int threads = 0;
};
std::vector<MildSolution> solve_ensemble(const InitialCondition& ic, const EnsembleSpec& spec, const SolveOptions& opt = {});

// Order 1: E[Z_t(u)]. Order 2: E[Z_t(u)^2]. Throws std::invalid_argument for
// fewer than 100 members, for an ensemble with no spread, or order not in {1,2}.
McResult moment_estimate(const std::vector<MildSolution>& ensemble, double t, double u, int order);

// sup over snapshots and grid points of s^2 E[Z_s(X)^2]
double uniqueness_diagnostic(const std::vector<MildSolution>& ensemble);

void write_solution_csv(std::ostream& os, const MildSolution& sol);
void write_ensemble_summary_csv(std::ostream& os, const std::vector<MildSolution>& ensemble);

// Zero-noise restart from dP_{t0} sampled on the grid, stepped to t1 and
// compared with dP_{t1}, at dx and dx/2 (dt = c dx^2 at both levels).
struct DeterministicOrder {
  double error_coarse = 0.0;
  double error_fine = 0.0;
  double order = 0.0;  // in dt
};
DeterministicOrder deterministic_order(double dx, double c_guard, double t0, double t1, double u_max);

// ---- Picard chaos layers of the second moment ----

struct PicardGrid {
  double T = 1.0;
  int n_t = 16;  // t_i = T (i/n_t)^2, i = 1..n_t
  int n_u = 32;  // u_j = j u_max / n_u, j = 0..n_u (u_0 taken as a small positive point)
  double u_max_scale = 4.0;  // u_max = u_max_scale sqrt(T)
  int phi_panels = 4;
  int v_panels = 6;
};

struct PicardState {
  int n = 0;
  std::vector<double> times, space;
  // q[k][i][j] = E[U_k(t_i,u_j)^2] / dP_{t_i}(u_j)^2
  std::vector<std::vector<std::vector<double>>> q;
  std::vector<std::vector<double>> f;  // f[k][i] = sup_j q[k][i][j]
  std::vector<double> norms;           // sup_i sqrt(f[k][i])
  std::vector<double> partial_sums;    // sum_{l <= k} norms[l]
  double second_moment(int k, std::size_t i, std::size_t j) const;  // E[U_k^2]
};

// E[U_{n+1}(t,u)^2] = int_0^t ds int dv P_{t-s}(u,v)^2 E[U_n(s,v)^2], U_0 = dP.
// The s integral uses s = t(1 - cos phi)/2, which absorbs both endpoint
// singularities. Throws std::invalid_argument for n_max > 8.
PicardState picard_layers(int n_max, const PicardGrid& grid = {});

struct PicardBoundCheck {
  double C = 0.0;          // fitted on even time indices
  double coarse_sup = 0.0;  // sup of f_n floor(n/2)! / (C^n t^{n/2}), = 1 by construction
  double fine_sup = 0.0;    // same on odd time indices
  bool pass = false;        // fine_sup <= 2
};
PicardBoundCheck picard_bound_check(const PicardState& st, int n_check = 6);

}  // namespace fasep
