#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fasep/quadrature.hpp"

namespace fasep {

// ---- full-line kernel p_t(x), rate-1 walk with dp/dt = (1/2) Delta p ----

// e^{-t} I_x(t) for |x| <= t, the theta integral otherwise.
double fullline_kernel(double t, int x);
double fullline_kernel_bessel(double t, int x);
double fullline_kernel_integral(double t, int x);
// p_t(0..nmax). Entries that underflow are zero.
std::vector<double> fullline_table(double t, int nmax);

// ---- Robin kernel on N with p(-1, .) = mu p(0, .) ----

enum class RobinMethod { image_series, quadrature, ode_oracle };

struct RobinKernelSpec {
  double mu = 1.0;
  RobinMethod method = RobinMethod::image_series;
  double tol = 1e-14;    // image series: mu^{z*} < tol
  int nodes = 20;        // quadrature: Gauss-Legendre order per panel
  int lattice_size = 0;  // ode oracle: 0 picks a certified size
  void validate() const;  // throws std::invalid_argument
};

double robin_kernel(const RobinKernelSpec& spec, double t, int x, int y);

// Image-series evaluator for one (mu, t), valid for x, y >= -1 and x + y <= max_index.
// Holds p_t and the geometric tail T(n) = sum_k mu^k p_t(n+k).
class RobinSeries {
 public:
  RobinSeries(double mu, double t, int max_index, double tol = 1e-14);
  double operator()(int x, int y) const;
  double mu() const { return mu_; }
  double t() const { return t_; }
  int max_index() const { return max_index_; }
  double p(int n) const;     // p_t(n), zero beyond the table
  double tail(int n) const;  // T(n)
  // mu p(m) + (mu^2 - 1) T(m+1): the image part as a function of x + y + 1
  double image(int m) const;

 private:
  double mu_, t_;
  int max_index_;
  std::vector<double> p_, tail_;
};

// Spectral solution of the Robin ODE on {0..L-1}, absorbing at L.
class RobinOde {
 public:
  RobinOde(double mu, int lattice_size);
  double operator()(double t, int x, int y) const;
  Eigen::MatrixXd matrix(double t, int n) const;  // x, y in 0..n-1
  int lattice_size() const { return static_cast<int>(evals_.size()); }
  // Lattice size for which the far boundary is reached with probability < 1e-16.
  static int certified_size(double t, int max_xy);
  // Upper bound on the probability of travelling distance d by time t.
  static double leakage_bound(double t, int d);

 private:
  Eigen::VectorXd evals_;
  Eigen::MatrixXd evecs_;
};

double robin_kernel_quadrature(double mu, double t, int x, int y, int nodes = 20);

// Rows/columns 0..n-1 by the requested method.
Eigen::MatrixXd robin_kernel_matrix(const RobinKernelSpec& spec, double t, int n);

struct KernelTableRow {
  double t = 0.0;
  int x = 0;
  int y = 0;
  double value = 0.0;
  std::string method;
};
std::vector<KernelTableRow> robin_kernel_table(const RobinKernelSpec& spec, const std::vector<double>& times, int n);
void write_kernel_table_csv(std::ostream& os, const std::vector<KernelTableRow>& rows);
std::string method_name(RobinMethod m);

// ---- key cancellation ----

enum class GreenRoute { time_integral, green_solve };

struct GreenCancellation {
  double value = 0.0;
  double quadrature_part = 0.0;  // time route: integral over [0, t_max]
  double tail = 0.0;             // time route: exact remainder beyond t_max
};

// sum_y int_0^inf grad+ p_t(x,y) grad+ p_t(x',y) dt. The time route integrates
// to t_max and adds the exact remainder p_{2T}(x-x') - image_{2T}(x+x'+2).
// Throws std::invalid_argument unless 0 < mu < 1 and t_max > 0.
GreenCancellation green_cancellation(double mu, int x, int xp, double t_max, double tol, GreenRoute route);

// Expected occupation time of the killed walk, (-A)^{-1}, on 0..n-1.
Eigen::MatrixXd killed_green_matrix(double mu, int n);

// ---- first moment from the empty initial condition ----

// E[Z_t(x)] = sum_y p^eps_t(x,y) mu^y with mu = e^{-eps}, unit-circle quadrature.
double first_moment_exact(double epsilon, double t_micro, int x);
// Same quantity by direct summation over the image series.
double first_moment_convolution(double epsilon, double t_micro, int x);

// ---- continuum kernels ----

struct ContinuousKernelEval {
  double t = 0.0;
  double u = 0.0;
  double v = 0.0;
  double value = 0.0;
};

double dirichlet_kernel(double t, double u, double v);
ContinuousKernelEval evaluate_dirichlet(double t, double u, double v);
// 2 sqrt(2/pi) u e^{-u^2/2t} / t^{3/2}
double d_dirichlet_kernel(double t, double u);
// (1/pi) int_0^inf 4 theta sin(theta u) e^{-t theta^2/2} d theta
double d_dirichlet_kernel_theta(double t, double u);

struct GtValue {
  double value = 0.0;
  double ratio_to_bound = 0.0;  // value / (dP_t(u)^2 sqrt(t/(s(t-s))))
};
GtValue gt_function(double t, double s, double u);
// int_0^inf P_{t-s}(u,v)^2 dP_s(v)^2 dv by quadrature
double gt_quadrature(double t, double s, double u);
double gt_ratio_bound();  // 3 / (4 sqrt(pi))

// e^{w^2} erfc(w)
double erfcx(double w);

struct SecondMoment {
  double ratio = 0.0;  // ||Z_t(u)||^2 / dP_t(u)^2
  double bound = 0.0;  // u -> 0 envelope
};
SecondMoment second_moment_exact(double t, double u);
double second_moment_envelope(double t);

struct NestedIntegral {
  double value = 0.0;  // E[Z_t(u)^2]
  double ratio = 0.0;  // value / dP_t(u)^2
  double imag = 0.0;   // should vanish
  int nodes_per_dim = 0;
  double cutoff = 0.0;            // |Im z| <= cutoff
  double truncation_bound = 0.0;  // relative size of the dropped Gaussian tail
  double refinement_diff = 0.0;   // |ratio(h) - ratio(h/2)|
};
// Double vertical-line quadrature, z1 on 1 + eta + iR, z2 on iR.
// Throws QuadratureError when refinement moves the ratio by more than rel_tol.
NestedIntegral second_moment_nested(double t, double u, double eta = 0.5, double rel_tol = 1e-9);

// ---- kernel bound suite ----

struct BoundsGrid {
  int coarse = 9;    // points per axis on the fitting grid
  int fine = 14;     // points per axis on the disjoint verification grid
  double a = 1.0;
  double b = 1.0;
  double alpha = 0.25;
  double t_min = 0.01;
  double x_max_scale = 3.0;  // x up to x_max_scale * eps^-2
};

struct BoundsRow {
  std::string name;
  int n_coarse = 0;
  int n_fine = 0;
  double empirical_constant = 0.0;  // sup of LHS / shape on the coarse grid
  double fitted_constant = 0.0;     // 2 x empirical_constant
  double fine_sup = 0.0;            // sup on the fine grid
  double reference = -1.0;          // fixed constant the sup must not exceed, < 0 if none
  bool pass = false;
};

struct BoundsReport {
  double epsilon = 0.0;
  double T = 0.0;
  std::vector<BoundsRow> rows;
  bool all_pass() const;
  const BoundsRow* find(const std::string& name) const;
};

BoundsReport bounds_suite(double epsilon, double T, const BoundsGrid& grid = {});
void write_bounds_csv(std::ostream& os, const BoundsReport& r);
void write_bounds_text(std::ostream& os, const BoundsReport& r);

// (1/pi) int e^{-z^2/5} dz
double heat_kernel_long_time_constant();

}  // namespace fasep
