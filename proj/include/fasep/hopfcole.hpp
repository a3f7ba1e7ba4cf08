#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fasep/config.hpp"
#include "fasep/dynamics.hpp"

namespace fasep {

struct HeightField {
  std::int64_t h0 = 0;
  std::vector<std::int64_t> values;  // h(x), x = 0..N
  int n() const { return static_cast<int>(values.size()) - 1; }
  // Beyond N every site is empty, so h keeps decreasing by one per site.
  std::int64_t at(int x) const {
    return x <= n() ? values[static_cast<std::size_t>(x)] : values.back() - (x - n());
  }
};

HeightField height_field(const HalfLineConfig& cfg);

struct HopfColeField {
  double t_micro = 0.0;
  std::vector<double> values;  // Z(x), x = 0..N
  double boundary = 0.0;       // Z(-1)
  WeakAsymParams params;
  int n() const { return static_cast<int>(values.size()) - 1; }
  // x = -1 gives the boundary value, x > N uses Z(x+1) = mu Z(x) on empty sites.
  double at(int x) const;
};

HopfColeField hopf_cole(const HeightField& h, double t_micro, const WeakAsymParams& params);
HopfColeField hopf_cole(const HalfLineConfig& cfg, double t_micro, const WeakAsymParams& params);

// Z(x+1) + Z(x-1) - 2Z(x), with Z(-1) = mu Z(0) at x = 0.
double laplacian_mu(const HopfColeField& z, int x);

enum class ScaleKind { zeta_empty, zeta_neareq };

struct RescaledField {
  double t_macro = 0.0;
  double epsilon = 0.0;
  ScaleKind scale = ScaleKind::zeta_empty;
  std::vector<double> samples;  // at u = eps^2 k
  double prefactor() const { return scale == ScaleKind::zeta_empty ? 1.0 / (epsilon * epsilon) : 1.0; }
  // Piecewise-linear on [0, eps^2 (size-1)], zero beyond.
  double operator()(double u) const;
};

// Throws std::invalid_argument unless z.t_micro == eps^-4 t_macro.
RescaledField rescale(const HopfColeField& z, double epsilon, ScaleKind scale, double t_macro);

// Exact d[M(x)]_t/dt for the current configuration.
double qv_rate(const HalfLineConfig& cfg, const HopfColeField& z, int x);

struct QvExpansion {
  double leading = 0.0;
  double gradient_term = 0.0;
};
QvExpansion qv_weak_asym_expansion(const HopfColeField& z, int x);

struct CrossPair {
  int x = 0;
  int y = 0;
  double product = 0.0;
};

struct MartingaleDiag {
  int site = 0;
  double residual = 0.0;
  double qv_integral = 0.0;
  std::vector<CrossPair> cross;  // pairs (site, y) with y a later entry of the site list
};

// Accumulates M_t(x) and its compensator along a half-line path fed one event
// at a time. The integrals over each holding interval are done in closed form
// because Z only grows like e^{nu s} between events.
class MartingaleTracker {
 public:
  MartingaleTracker(const HalfLineConfig& init, const WeakAsymParams& params, std::vector<int> sites);
  void on_event(const Event& ev);
  std::vector<MartingaleDiag> finish(double t);

 private:
  void flush(std::size_t i, double t);
  void refresh(std::size_t i);
  double z0(int x) const;  // e^{-lambda h(x)}

  WeakAsymParams params_;
  std::vector<int> sites_;
  std::vector<std::int64_t> h_;  // sites 0..max+1
  std::vector<double> init_z_;
  std::vector<double> drift_coef_, qv_coef_, drift_int_, qv_int_, t_last_;
  double t_ = 0.0;
};

// Requires traj recorded with RecordMode::full_log from a half-line start.
std::vector<MartingaleDiag> martingale_residual(const Trajectory& traj, const std::vector<int>& sites, double t,
                                                const WeakAsymParams& params);

// int_a^b e^{rate s} ds
double exp_integral(double rate, double a, double b);

// Weighted sums S_k(t) = sum_x w_k(x) Z_t(x) and their time integrals along a
// half-line path, O(1) work per weight per event.
class FieldIntegrator {
 public:
  FieldIntegrator(const HalfLineConfig& init, const WeakAsymParams& params, std::vector<std::vector<double>> weights);
  void on_event(const Event& ev);
  void advance(double t);
  double time() const { return t_; }
  std::size_t size() const { return weights_.size(); }
  double initial(std::size_t k) const { return init_[k]; }
  double current(std::size_t k) const;
  double integral(std::size_t k) const { return integral_[k]; }

 private:
  WeakAsymParams params_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::int64_t> h_;
  std::vector<double> s_, integral_, init_;
  double t_ = 0.0;
};

struct TestFunction {
  std::string name;
  std::function<double(double)> f, d1, d2;
  double support = 1.0;  // f vanishes (or is below 1e-27) for |u| > support
  double operator()(double u) const { return f(u); }
};

// Built-in catalog: "hermite-damped" u e^{-u^2}, "bump" exp(1 - 1/(1-u^2)),
// "polynomial-cutoff" u * bump(u/2).
TestFunction test_function(const std::string& name);
std::vector<std::string> test_function_names();

// phi + eps phi'(0) psi. Throws std::invalid_argument if phi(0) != 0.
TestFunction corrected_test_function(const TestFunction& phi, const TestFunction& psi, double epsilon);

// eps^2 sum_x phi(eps^2 x) field(x)
double pairing_eps(const std::vector<double>& field, const std::function<double(double)>& phi, double epsilon);

// eps^-2 [mu phi(0) - phi(-eps^2)]
double boundary_combination(const TestFunction& phi, double epsilon, double mu);

struct AppendixACheck {
  std::array<double, 3> parameter_conditions{};  // residuals of the three identification equations
  std::array<double, 8> interior{};              // (nu Z + LZ - D Delta Z)(2) / Z(2), patterns of sigma(1..3)
  std::array<double, 2> boundary_ratio{};        // Z(-1)/Z(0) implied by sigma(1) = 1 and sigma(1) = 0
};
// Applies the generator to Z(x) on explicit configurations.
AppendixACheck appendix_a_check(const WeakAsymParams& params);

}  // namespace fasep
