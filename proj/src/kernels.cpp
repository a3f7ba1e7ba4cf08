#include "fasep/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_bessel.h>

namespace fasep {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTiny = 1e-280;

void gsl_quiet() {
  static const bool once = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)once;
}

double bessel_scaled(int n, double t) {
  gsl_quiet();
  gsl_sf_result r;
  const int st = gsl_sf_bessel_In_scaled_e(n, t, &r);
  return st == GSL_SUCCESS ? r.val : 0.0;
}

const GaussLegendre& gl20() {
  static const GaussLegendre g(20);
  return g;
}

// theta beyond which e^{t(cos theta - 1)} < 1e-18
double theta_cutoff(double t) { return t <= 0.0 ? kPi : std::min(kPi, kPi * std::sqrt(20.7 / t)); }

int spread(double t) { return static_cast<int>(std::ceil(12.0 * std::sqrt(t) + 40.0)); }

}  // namespace

// ---------------------------------------------------------------------------
// full-line kernel

std::vector<double> fullline_table(double t, int nmax) {
  if (t < 0.0) throw std::invalid_argument("fullline_table: t < 0");
  if (nmax < 0) throw std::invalid_argument("fullline_table: nmax < 0");
  std::vector<double> r(static_cast<std::size_t>(nmax) + 1, 0.0);
  if (t == 0.0) {
    r[0] = 1.0;
    return r;
  }
  // Miller: the downward recurrence I_{n-1} = (2n/t) I_n + I_{n+1} from an
  // arbitrary start far past the mass converges to the minimal solution, and
  // sum_n e^{-t} I_n = 1 fixes the scale. GSL's In_scaled reports underflow
  // for every n >= 150, so it cannot be used for the start values.
  const int start = std::max(nmax, static_cast<int>(std::ceil(t))) + 60 +
                    static_cast<int>(std::ceil(12.0 * std::sqrt(t + nmax)));
  std::vector<double> w(static_cast<std::size_t>(start) + 2, 0.0);
  w[static_cast<std::size_t>(start)] = 1e-300;
  for (int n = start; n >= 1; --n) {
    const auto i = static_cast<std::size_t>(n);
    w[i - 1] = (2.0 * n / t) * w[i] + w[i + 1];
    if (w[i - 1] > 1e250)
      for (std::size_t j = i - 1; j < w.size(); ++j) w[j] *= 1e-250;
  }
  double mass = w[0];
  for (std::size_t i = 1; i < w.size(); ++i) mass += 2.0 * w[i];
  for (int n = 0; n <= nmax; ++n) {
    const double v = w[static_cast<std::size_t>(n)] / mass;
    r[static_cast<std::size_t>(n)] = v < kTiny ? 0.0 : v;
  }
  return r;
}

double fullline_kernel_bessel(double t, int x) {
  if (t < 0.0) throw std::invalid_argument("fullline_kernel: t < 0");
  if (t == 0.0) return x == 0 ? 1.0 : 0.0;
  const int n = std::abs(x);
  if (n < 150) return bessel_scaled(n, t);
  return fullline_table(t, n).back();
}

double fullline_kernel_integral(double t, int x) {
  if (t < 0.0) throw std::invalid_argument("fullline_kernel: t < 0");
  if (t == 0.0) return x == 0 ? 1.0 : 0.0;
  const double th = theta_cutoff(t);
  const double h = std::min({0.5, 0.5 / std::sqrt(t), 1.5 / (std::abs(x) + 1.0)});
  const int n0 = std::max(2, static_cast<int>(std::ceil(th / h)));
  auto f = [&](double a) { return std::exp(t * (std::cos(a) - 1.0)) * std::cos(x * a) / kPi; };
  return gl20().converged(f, 0.0, th, n0, 1e-16);
}

double fullline_kernel(double t, int x) {
  if (t < 0.0) throw std::invalid_argument("fullline_kernel: t < 0");
  return std::abs(x) <= t ? fullline_kernel_bessel(t, x) : fullline_kernel_integral(t, x);
}

// ---------------------------------------------------------------------------
// Robin kernel

void RobinKernelSpec::validate() const {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("RobinKernelSpec: mu must lie in (0,1]");
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("RobinKernelSpec: tol must lie in (0,1)");
  if (nodes < 2) throw std::invalid_argument("RobinKernelSpec: nodes < 2");
  if (lattice_size < 0) throw std::invalid_argument("RobinKernelSpec: lattice_size < 0");
}

std::string method_name(RobinMethod m) {
  switch (m) {
    case RobinMethod::image_series: return "image_series";
    case RobinMethod::quadrature: return "quadrature";
    case RobinMethod::ode_oracle: return "ode_oracle";
  }
  return "?";
}

RobinSeries::RobinSeries(double mu, double t, int max_index, double tol) : mu_(mu), t_(t), max_index_(max_index) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("RobinSeries: mu must lie in (0,1]");
  if (t < 0.0) throw std::invalid_argument("RobinSeries: t < 0");
  if (max_index < 0) throw std::invalid_argument("RobinSeries: max_index < 0");
  int k = 0;
  if (mu < 1.0) {
    const double zstar = std::ceil(std::log(tol) / std::log(mu));
    k = static_cast<int>(std::min<double>(zstar, spread(t)));
  }
  const int n = max_index + 4 + std::max(k, spread(t));
  p_ = fullline_table(t, n);
  tail_.assign(p_.size(), 0.0);
  if (mu < 1.0) {
    // Terms past index max_index + 4 + k carry weight below tol or below the
    // kernel's own tail, so the recursion starts there.
    tail_.back() = p_.back();
    for (std::size_t i = p_.size() - 1; i-- > 0;) tail_[i] = p_[i] + mu * tail_[i + 1];
  }
}

double RobinSeries::p(int n) const {
  const std::size_t i = static_cast<std::size_t>(std::abs(n));
  return i < p_.size() ? p_[i] : 0.0;
}

double RobinSeries::tail(int n) const {
  if (n < 0) throw std::out_of_range("RobinSeries::tail: negative index");
  const std::size_t i = static_cast<std::size_t>(n);
  return i < tail_.size() ? tail_[i] : 0.0;
}

double RobinSeries::image(int m) const {
  double v = mu_ * p(m);
  if (mu_ < 1.0) v += (mu_ * mu_ - 1.0) * tail(m + 1);
  return v;
}

double RobinSeries::operator()(int x, int y) const {
  if (x < -1 || y < -1 || x + y > max_index_) throw std::out_of_range("RobinSeries: index outside table");
  return p(x - y) + image(x + y + 1);
}

RobinOde::RobinOde(double mu, int n) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("RobinOde: mu must lie in (0,1]");
  if (n < 2) throw std::invalid_argument("RobinOde: lattice too small");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = -1.0;
    if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = 0.5;
  }
  a(0, 0) = 0.5 * (mu - 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw std::runtime_error("RobinOde: eigensolver failed");
  evals_ = es.eigenvalues();
  evecs_ = es.eigenvectors();
}

double RobinOde::operator()(double t, int x, int y) const {
  const int n = lattice_size();
  if (x < 0 || y < 0 || x >= n || y >= n) throw std::out_of_range("RobinOde: index outside lattice");
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += evecs_(x, k) * std::exp(evals_(k) * t) * evecs_(y, k);
  return s;
}

Eigen::MatrixXd RobinOde::matrix(double t, int n) const {
  if (n > lattice_size()) throw std::out_of_range("RobinOde: matrix larger than lattice");
  const Eigen::VectorXd e = (evals_.array() * t).exp();
  const Eigen::MatrixXd v = evecs_.topRows(n);
  return v * e.asDiagonal() * v.transpose();
}

double RobinOde::leakage_bound(double t, int d) {
  if (d <= 0) return 1.0;
  // Bernstein for the +-1 compound Poisson walk, doubled for the running maximum
  return std::min(1.0, 2.0 * std::exp(-double(d) * d / (2.0 * (t + d / 3.0))));
}

int RobinOde::certified_size(double t, int max_xy) {
  int d = 10;
  while (leakage_bound(t, d) >= 1e-16) d += 5;
  return max_xy + d + 1;
}

double robin_kernel_quadrature(double mu, double t, int x, int y, int nodes) {
  if (t == 0.0) return x == y ? 1.0 : 0.0;
  const double th = theta_cutoff(t);
  const double smu = mu < 1.0 ? std::max(1.0 - mu, 1e-3) : 1.0;
  const double h = 0.5 * std::min({1.0, 1.0 / std::sqrt(t), 2.0 / (x + y + 2.0), 2.0 * smu});
  const int n0 = std::max(2, static_cast<int>(std::ceil(th / h)));
  const GaussLegendre g(nodes);
  auto f = [&](double a) {
    const std::complex<double> xi = std::polar(1.0, a);
    const std::complex<double> img = std::polar(1.0, a * (x + y + 1)) * (mu - xi) / (1.0 - mu * xi);
    return std::exp(t * (std::cos(a) - 1.0)) * (std::cos(a * (x - y)) + img.real()) / kPi;
  };
  return g.converged(f, 0.0, th, n0, 1e-15);
}

double robin_kernel(const RobinKernelSpec& spec, double t, int x, int y) {
  spec.validate();
  if (t < 0.0) throw std::invalid_argument("robin_kernel: t < 0");
  if (x < 0 || y < 0) throw std::invalid_argument("robin_kernel: negative site");
  switch (spec.method) {
    case RobinMethod::image_series: return RobinSeries(spec.mu, t, x + y, spec.tol)(x, y);
    case RobinMethod::quadrature: return robin_kernel_quadrature(spec.mu, t, x, y, spec.nodes);
    case RobinMethod::ode_oracle: {
      int n = spec.lattice_size;
      if (n == 0) {
        n = RobinOde::certified_size(t, std::max(x, y));
      } else if (RobinOde::leakage_bound(t, n - 1 - std::max(x, y)) > 1e-12) {
        throw std::invalid_argument("robin_kernel: lattice too small for the requested time");
      }
      return RobinOde(spec.mu, n)(t, x, y);
    }
  }
  return 0.0;
}

Eigen::MatrixXd robin_kernel_matrix(const RobinKernelSpec& spec, double t, int n) {
  spec.validate();
  if (t < 0.0) throw std::invalid_argument("robin_kernel_matrix: t < 0");
  if (n < 1) throw std::invalid_argument("robin_kernel_matrix: n < 1");
  Eigen::MatrixXd m(n, n);
  switch (spec.method) {
    case RobinMethod::image_series: {
      const RobinSeries s(spec.mu, t, 2 * n - 2, spec.tol);
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) m(x, y) = s(x, y);
      break;
    }
    case RobinMethod::quadrature:
      for (int x = 0; x < n; ++x)
        for (int y = 0; y <= x; ++y) m(x, y) = m(y, x) = robin_kernel_quadrature(spec.mu, t, x, y, spec.nodes);
      break;
    case RobinMethod::ode_oracle: {
      const int size = spec.lattice_size > 0 ? spec.lattice_size : RobinOde::certified_size(t, n - 1);
      m = RobinOde(spec.mu, size).matrix(t, n);
      break;
    }
  }
  return m;
}

std::vector<KernelTableRow> robin_kernel_table(const RobinKernelSpec& spec, const std::vector<double>& times, int n) {
  std::vector<KernelTableRow> rows;
  for (double t : times) {
    const Eigen::MatrixXd m = robin_kernel_matrix(spec, t, n);
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) rows.push_back({t, x, y, m(x, y), method_name(spec.method)});
  }
  return rows;
}

void write_kernel_table_csv(std::ostream& os, const std::vector<KernelTableRow>& rows) {
  os << "t,x,y,value,method\n" << std::setprecision(17);
  for (const auto& r : rows) os << r.t << ',' << r.x << ',' << r.y << ',' << r.value << ',' << r.method << '\n';
}

// ---------------------------------------------------------------------------
// key cancellation

Eigen::MatrixXd killed_green_matrix(double mu, int n) {
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("killed_green_matrix: need 0 < mu < 1");
  if (n < 2) throw std::invalid_argument("killed_green_matrix: n < 2");
  // -A with the Robin row at 0 and a reflecting row at n-1. Columns of the
  // infinite-lattice Green function are flat beyond their index, so every
  // entry with both indices <= n-2 is exact.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -0.5;
  }
  a(0, 0) = 1.0 - 0.5 * mu;
  a(n - 1, n - 1) = 0.5;
  return a.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
}

GreenCancellation green_cancellation(double mu, int x, int xp, double t_max, double tol, GreenRoute route) {
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("green_cancellation: need 0 < mu < 1");
  if (x < 0 || xp < 0) throw std::invalid_argument("green_cancellation: negative site");
  if (!(tol > 0.0)) throw std::invalid_argument("green_cancellation: tol must be positive");
  GreenCancellation out;
  if (route == GreenRoute::green_solve) {
    const Eigen::MatrixXd g = killed_green_matrix(mu, std::max(x, xp) + 3);
    out.value = 0.5 * (g(x + 1, xp + 1) + g(x, xp) - g(x + 1, xp) - g(x, xp + 1));
    return out;
  }
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("green_cancellation: tail not certified");

  const int lo = std::min(x, xp), hi = std::max(x, xp) + 1;
  auto integrand = [&](double t) {
    const int k = spread(t);
    const int ymax = hi + k;
    const RobinSeries s(mu, t, hi + ymax + 1);
    double sum = 0.0;
    for (int y = std::max(0, lo - k); y <= ymax; ++y)
      sum += (s(x + 1, y) - s(x, y)) * (s(xp + 1, y) - s(xp, y));
    return sum;
  };
  // geometric segments [0,1], [1,2], [2,4], ...
  double a = 0.0, b = std::min(1.0, t_max), q = 0.0;
  while (a < t_max) {
    q += gl20().converged(integrand, a, b, 1, 0.01 * tol);
    a = b;
    b = std::min(2.0 * b, t_max);
  }
  const RobinSeries tail(mu, 2.0 * t_max, x + xp + 4);
  out.quadrature_part = q;
  out.tail = tail.p(x - xp) - tail.image(x + xp + 2);
  if (!std::isfinite(out.tail) || !std::isfinite(q)) throw std::runtime_error("green_cancellation: tail not certified");
  out.value = q + out.tail;
  return out;
}

// ---------------------------------------------------------------------------
// first moment

double first_moment_exact(double epsilon, double t, int x) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("first_moment_exact: epsilon must be positive");
  if (t < 0.0 || x < 0) throw std::invalid_argument("first_moment_exact: need t >= 0, x >= 0");
  const double mu = std::exp(-epsilon);
  if (t == 0.0) return std::pow(mu, x);
  const double th = theta_cutoff(t);
  const double h = 0.5 * std::min({1.0, 1.0 / std::sqrt(t), 2.0 / (x + 2.0), 2.0 * (1.0 - mu)});
  const int n0 = std::max(2, static_cast<int>(std::ceil(th / h)));
  auto f = [&](double a) {
    const std::complex<double> xi = std::polar(1.0, a);
    const std::complex<double> den = (1.0 - mu / xi) * (1.0 - mu * xi) * (1.0 - mu * xi);
    const std::complex<double> F = (1.0 - mu * mu) * (1.0 - xi * xi) / den;
    return std::exp(t * (std::cos(a) - 1.0)) * (std::polar(1.0, a * x) * F).real() / kPi;
  };
  // the answer is O(eps^2) at diffusive scales; roundoff grows with the node count
  return gl20().converged(f, 0.0, th, n0, 1e-13 + 1e-9 * epsilon * epsilon);
}

double first_moment_convolution(double epsilon, double t, int x) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("first_moment_convolution: epsilon must be positive");
  if (t < 0.0 || x < 0) throw std::invalid_argument("first_moment_convolution: need t >= 0, x >= 0");
  const double mu = std::exp(-epsilon);
  const int ymax = x + spread(t);
  const RobinSeries s(mu, t, x + ymax);
  double sum = 0.0, w = 1.0;
  for (int y = 0; y <= ymax; ++y, w *= mu) sum += s(x, y) * w;
  return sum;
}

// ---------------------------------------------------------------------------
// continuum kernels

double dirichlet_kernel(double t, double u, double v) {
  if (!(t > 0.0)) throw std::invalid_argument("dirichlet_kernel: t <= 0");
  const double d = u - v;
  return std::exp(-d * d / (2.0 * t)) * -std::expm1(-2.0 * u * v / t) / std::sqrt(2.0 * kPi * t);
}

ContinuousKernelEval evaluate_dirichlet(double t, double u, double v) { return {t, u, v, dirichlet_kernel(t, u, v)}; }

double d_dirichlet_kernel(double t, double u) {
  if (!(t > 0.0)) throw std::invalid_argument("d_dirichlet_kernel: t <= 0");
  return 2.0 * std::sqrt(2.0 / kPi) * u * std::exp(-u * u / (2.0 * t)) / std::pow(t, 1.5);
}

double d_dirichlet_kernel_theta(double t, double u) {
  if (!(t > 0.0)) throw std::invalid_argument("d_dirichlet_kernel_theta: t <= 0");
  const double th = std::sqrt(90.0 / t);
  const double h = std::min(0.5 / std::sqrt(t), 1.5 / (u + 1.0));
  const int n0 = std::max(2, static_cast<int>(std::ceil(th / h)));
  auto f = [&](double a) { return 4.0 * a * std::sin(a * u) * std::exp(-t * a * a / 2.0) / kPi; };
  const double scale = 1.0 / t;
  return gl20().converged(f, 0.0, th, n0, 1e-14 * scale);
}

double gt_ratio_bound() { return 3.0 / (4.0 * std::sqrt(kPi)); }

GtValue gt_function(double t, double s, double u) {
  if (!(s > 0.0 && s < t)) throw std::invalid_argument("gt_function: need 0 < s < t");
  if (!(u > 0.0)) throw std::invalid_argument("gt_function: need u > 0");
  const double r = t * (t - s) / s;
  const double bracket = r * -std::expm1(-u * u / r) + 2.0 * u * u;
  GtValue g;
  g.value = 2.0 * std::exp(-u * u / t) * bracket /
            (std::pow(kPi, 1.5) * std::pow(t, 2.5) * std::sqrt(s * (t - s)));
  g.ratio_to_bound = bracket / (4.0 * std::sqrt(kPi) * u * u);
  return g;
}

double gt_quadrature(double t, double s, double u) {
  if (!(s > 0.0 && s < t)) throw std::invalid_argument("gt_quadrature: need 0 < s < t");
  auto f = [&](double v) {
    const double a = dirichlet_kernel(t - s, u, v), b = d_dirichlet_kernel(s, v);
    return a * a * b * b;
  };
  const double vmax = u + 15.0 * std::sqrt(t);
  const double h = 0.25 * std::min(std::sqrt(t - s), std::sqrt(s));
  const int n0 = std::max(4, static_cast<int>(std::ceil(vmax / h)));
  const double rough = gl20().panels(f, 0.0, vmax, n0);
  return gl20().converged(f, 0.0, vmax, n0, 1e-13 * std::abs(rough) + 1e-300);
}

double erfcx(double w) {
  if (w < 25.0) return std::exp(w * w) * std::erfc(w);
  double k = w;
  for (int n = 60; n >= 1; --n) k = w + (0.5 * n) / k;
  return 1.0 / (std::sqrt(kPi) * k);
}

SecondMoment second_moment_exact(double t, double u) {
  if (!(t > 0.0 && u > 0.0)) throw std::invalid_argument("second_moment_exact: need t > 0, u > 0");
  const double rt = std::sqrt(t);
  const double g = std::exp(t / 4.0) * (1.0 + std::erf(rt / 2.0));
  const double a = std::sqrt(kPi * t) * (g * (t * (u - 1.0) + 2.0 * u * u) + t * erfcx((2.0 * u - t) / (2.0 * rt)));
  return {(a + 2.0 * u * (t + 2.0 * u)) / (4.0 * u * u), second_moment_envelope(t)};
}

double second_moment_envelope(double t) {
  if (!(t > 0.0)) throw std::invalid_argument("second_moment_envelope: t <= 0");
  const double rt = std::sqrt(t);
  return (std::sqrt(kPi) * std::exp(t / 4.0) * rt * (t + 6.0) * (1.0 + std::erf(rt / 2.0)) + 2.0 * (t + 4.0)) / 8.0;
}

namespace {

struct NestedPass {
  std::complex<double> value;
  int nodes = 0;
};

NestedPass nested_pass(double t, double u, double eta, double cut, double h) {
  using C = std::complex<double>;
  const GaussLegendre& g = gl20();
  const int panels = static_cast<int>(std::ceil(2.0 * cut / h));
  const double w = 2.0 * cut / panels;
  std::vector<double> y, wt;
  for (int k = 0; k < panels; ++k) {
    const double c = -cut + (k + 0.5) * w;
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
      y.push_back(c + 0.5 * w * g.nodes()[i]);
      wt.push_back(0.5 * w * g.weights()[i]);
    }
  }
  const std::size_t n = y.size();
  std::vector<C> z1(n), z2(n), a1(n), a2(n);
  for (std::size_t i = 0; i < n; ++i) {
    z1[i] = C(1.0 + eta, y[i]);
    z2[i] = C(0.0, y[i]);
    a1[i] = std::exp(t * z1[i] * z1[i] / 2.0 - u * z1[i]) * z1[i] * wt[i];
    a2[i] = std::exp(t * z2[i] * z2[i] / 2.0 - u * z2[i]) * z2[i] * wt[i];
  }
  C total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    C row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const C d = z1[i] - z2[j], s = z1[i] + z2[j];
      row += a2[j] * (d / (d - 1.0)) * (s / (s - 1.0));
    }
    total += a1[i] * row;
  }
  return {16.0 * total / (4.0 * kPi * kPi), static_cast<int>(n)};
}

}  // namespace

NestedIntegral second_moment_nested(double t, double u, double eta, double rel_tol) {
  if (!(t > 0.0 && u > 0.0 && eta > 0.0)) throw std::invalid_argument("second_moment_nested: need t, u, eta > 0");
  NestedIntegral out;
  out.cutoff = std::sqrt(80.0 / t);
  out.truncation_bound = std::exp(-t * out.cutoff * out.cutoff / 2.0 + t * (1.0 + eta) * (1.0 + eta) / 2.0) *
                         (1.0 + out.cutoff) * (1.0 + out.cutoff);
  const double h = std::min({0.5 * eta, 0.5 / std::sqrt(t), 1.0 / (t * (1.0 + eta) + u + 1.0)});
  const double dp2 = std::pow(d_dirichlet_kernel(t, u), 2);
  const NestedPass coarse = nested_pass(t, u, eta, out.cutoff, h);
  const NestedPass fine = nested_pass(t, u, eta, out.cutoff, 0.5 * h);
  out.value = fine.value.real();
  out.imag = fine.value.imag();
  out.ratio = out.value / dp2;
  out.nodes_per_dim = fine.nodes;
  out.refinement_diff = std::abs(fine.value.real() - coarse.value.real()) / dp2;
  if (out.refinement_diff > rel_tol * std::abs(out.ratio))
    throw QuadratureError("second_moment_nested: no convergence with " + std::to_string(fine.nodes) +
                          " nodes per dimension");
  return out;
}

// ---------------------------------------------------------------------------
// bound suite

double heat_kernel_long_time_constant() { return std::sqrt(5.0 / kPi); }

bool BoundsReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const BoundsRow& r) { return r.pass; });
}

const BoundsRow* BoundsReport::find(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

namespace {

struct Sup {
  double value = 0.0;
  int count = 0;
  void add(double r) {
    if (std::isfinite(r)) value = std::max(value, r);
    ++count;
  }
};

// Coarse grids include both endpoints; fine grids sit at log-midpoints.
std::vector<double> log_grid(double lo, double hi, int n, bool fine) {
  std::vector<double> g;
  for (int k = 0; k < n; ++k) {
    const double f = fine ? (k + 0.5) / n : (n == 1 ? 0.0 : double(k) / (n - 1));
    g.push_back(lo * std::pow(hi / lo, f));
  }
  return g;
}

std::vector<int> int_grid(int hi, int n, bool fine) {
  std::vector<int> g;
  if (!fine) g.push_back(0);
  for (double v : log_grid(1.0, double(hi), n, fine)) g.push_back(static_cast<int>(std::lround(v)));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

template <class T>
std::vector<T> minus(std::vector<T> a, const std::vector<T>& b) {
  std::erase_if(a, [&](T v) {
    return std::any_of(b.begin(), b.end(), [&](T w) { return std::abs(double(v) - double(w)) <= 1e-9 * std::abs(double(w)); });
  });
  return a;
}

struct SuiteContext {
  double eps, T, mu, tM, a, b, alpha;
  int X;
};

using SupMap = std::vector<std::pair<std::string, Sup>>;

Sup& slot(SupMap& m, const std::string& name) {
  for (auto& [n, s] : m)
    if (n == name) return s;
  m.emplace_back(name, Sup{});
  return m.back().second;
}

// Sum over y >= 1 of |grad+ p grad- p| e^{a eps^2 |x-y|} for each x.
std::vector<double> cancel_integrand(const SuiteContext& c, double r, const std::vector<int>& xs) {
  const int k = spread(r);
  const int xmax = *std::max_element(xs.begin(), xs.end());
  const RobinSeries s(c.mu, r, 2 * (xmax + k) + 4);
  std::vector<double> out;
  for (int x : xs) {
    double sum = 0.0;
    for (int y = std::max(1, x - k); y <= x + k; ++y) {
      const double px = s(x, y);
      sum += std::abs((s(x + 1, y) - px) * (s(x - 1, y) - px)) * std::exp(c.a * c.eps * c.eps * std::abs(x - y));
    }
    out.push_back(sum);
  }
  return out;
}

// Geometric panels on [0, R] with weight w(r).
template <class W>
std::vector<double> integrate_cancel(const SuiteContext& c, double R, const std::vector<int>& xs, W weight,
                                     double a0 = 0.0) {
  std::vector<double> acc(xs.size(), 0.0);
  const GaussLegendre& g = gl20();
  double a = a0, b = std::min(a0 + 1.0 / 16.0, R);
  while (a < R) {
    const double cc = 0.5 * (a + b), h = 0.5 * (b - a);
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
      const double r = cc + h * g.nodes()[i];
      const auto v = cancel_integrand(c, r, xs);
      const double w = h * g.weights()[i] * weight(r);
      for (std::size_t j = 0; j < xs.size(); ++j) acc[j] += w * v[j];
    }
    a = b;
    b = std::min(a0 + 2.0 * (b - a0), R);
  }
  return acc;
}

void sweep(const SuiteContext& c, const std::vector<double>& ts, const std::vector<int>& xs,
           const std::vector<double>& ts_cancel, const std::vector<int>& xs_cancel, SupMap& m) {
  const double e2 = c.eps * c.eps;
  const int xmax = *std::max_element(xs.begin(), xs.end());
  std::vector<RobinSeries> series;
  for (double t : ts) {
    const int k = spread(t);
    const int d = static_cast<int>(std::ceil(std::sqrt(t)));
    series.emplace_back(c.mu, t, 2 * (xmax + d + k) + 6);
  }
  const std::vector<double> vs = {0.0, 0.5, 1.0};
  for (std::size_t it = 0; it < ts.size(); ++it) {
    const double t = ts[it];
    const RobinSeries& s = series[it];
    const int k = spread(t);
    const double damp = std::min(1.0, 1.0 / std::sqrt(t));
    std::vector<double> conv;
    for (int x : xs) {
      double m1 = 0.0, ic = 0.0, w = std::pow(c.mu, std::max(0, x - k)), sup_p = 0.0;
      double g5p = 0.0, g5m = 0.0;
      double g4p[3] = {0, 0, 0}, g4m[3] = {0, 0, 0};
      for (int y = std::max(0, x - k); y <= x + k; ++y, w *= c.mu) {
        const double p = s(x, y);
        m1 += p * std::exp(c.a * e2 * (y - x));
        ic += p * w;
        sup_p = std::max(sup_p, p);
        const double gp = std::abs(s(x + 1, y) - p), gm = std::abs(s(x - 1, y) - p);
        const double wt = std::exp(c.a * e2 * (y - x) + c.a * std::abs(x - y) * damp);
        g5p += gp * wt;
        g5m += gm * wt;
        for (int iv = 0; iv < 3; ++iv) {
          const double shape = std::min(1.0, std::pow(t, -(1.0 + vs[iv]) / 2.0)) * std::exp(-c.b * std::abs(y - x) * damp);
          g4p[iv] = std::max(g4p[iv], gp / shape);
          g4m[iv] = std::max(g4m[iv], gm / shape);
        }
      }
      slot(m, "hkbound1").add(m1);
      slot(m, "hkbound5+").add(g5p * std::sqrt(t));
      slot(m, "hkbound5-").add(g5m * std::sqrt(t));
      for (int iv = 0; iv < 3; ++iv) {
        const std::string v = vs[iv] == 0.0 ? "0" : vs[iv] == 0.5 ? "0.5" : "1";
        slot(m, "hkbound4+[v=" + v + "]").add(g4p[iv]);
        slot(m, "hkbound4-[v=" + v + "]").add(g4m[iv]);
      }
      if (t >= 1.0) slot(m, "boundheatkernel").add(std::sqrt(t) * sup_p);
      // x >= k: the ic sum above skipped y < x - k where p is negligible anyway
      conv.push_back(ic / e2);
      slot(m, "boundIC1").add((ic / e2) / std::min(1.0 / (e2 * e2 * t), 1.0 / e2));

      // Hoelder in the first variable, |x - y| <= ceil(sqrt t)
      const int dmax = static_cast<int>(std::ceil(std::sqrt(t)));
      std::vector<int> ds;
      for (int d = 1; d < dmax; d *= 2) ds.push_back(d);
      ds.push_back(dmax);
      for (int d : ds) {
        double diff = 0.0;
        for (int z = std::max(0, x - k); z <= x + d + k; ++z) diff = std::max(diff, std::abs(s(x + d, z) - s(x, z)));
        for (int iv = 0; iv < 3; ++iv) {
          const std::string v = vs[iv] == 0.0 ? "0" : vs[iv] == 0.5 ? "0.5" : "1";
          const double shape = std::min(1.0, std::pow(t, -(1.0 + vs[iv]) / 2.0)) * std::pow(double(d), vs[iv]);
          slot(m, "hkbound2[v=" + v + "]").add(diff / shape);
        }
      }
    }
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = i + 1; j < xs.size(); ++j) {
        const double d = std::abs(xs[i] - xs[j]);
        const double shape = std::pow(e2 * d, c.alpha) * std::pow(e2 * e2 * t, -1.0 - c.alpha / 2.0);
        slot(m, "boundIC2").add(std::abs(conv[i] - conv[j]) / shape);
      }
  }

  // p_s <= e^{t-s} p_t
  Sup& mono = slot(m, "hkbound3");
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      const double f = std::exp(-(ts[j] - ts[i]));
      for (int x : xs)
        for (int y : xs) {
          const double pt = series[j](x, y);
          if (pt > 1e-10) mono.add(f * series[i](x, y) / pt);
        }
    }

  // contraction: the x list excludes 0
  std::vector<int> xs1;
  for (int x : xs_cancel)
    if (x >= 1) xs1.push_back(x);
  const auto c1 = integrate_cancel(c, c.tM, xs1, [](double) { return 1.0; });
  for (double v : c1) slot(m, "hkboundcancel1").add(v);

  for (double t : ts_cancel) {
    const double R = t / (e2 * e2);
    // [0, R/2] geometric; [R/2, R] after r = R - w^2
    auto lower = integrate_cancel(c, 0.5 * R, xs1, [&](double r) { return 1.0 / std::sqrt(R - r); });
    const double wmax = std::sqrt(0.5 * R);
    const GaussLegendre& g = gl20();
    const int panels = 16;
    const double hw = wmax / panels;
    for (int p = 0; p < panels; ++p) {
      for (std::size_t i = 0; i < g.nodes().size(); ++i) {
        const double w = (p + 0.5) * hw + 0.5 * hw * g.nodes()[i];
        const auto v = cancel_integrand(c, R - w * w, xs1);
        for (std::size_t j = 0; j < xs1.size(); ++j) lower[j] += 0.5 * hw * g.weights()[i] * 2.0 * v[j];
      }
    }
    for (double v : lower) slot(m, "hkboundcancel2").add(v / e2);
  }
}

}  // namespace

BoundsReport bounds_suite(double epsilon, double T, const BoundsGrid& grid) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("bounds_suite: need 0 < epsilon < 1");
  if (!(T > 0.0)) throw std::invalid_argument("bounds_suite: need T > 0");
  if (grid.coarse < 2 || grid.fine < 2) throw std::invalid_argument("bounds_suite: grid too small");
  SuiteContext c{epsilon, T, std::exp(-epsilon), T / std::pow(epsilon, 4), grid.a, grid.b, grid.alpha, 0};
  c.X = static_cast<int>(std::ceil(grid.x_max_scale / (epsilon * epsilon)));
  const double t_lo = std::min(grid.t_min, 0.5 * c.tM);

  const auto tc = log_grid(t_lo, c.tM, grid.coarse, false);
  const auto tf = minus(log_grid(t_lo, c.tM, grid.fine, true), tc);
  const auto xc = int_grid(c.X, grid.coarse, false);
  const auto xf = minus(int_grid(c.X, grid.fine, true), xc);
  // cancellation integrals are costlier: fewer points, t in (0, T]
  const int nc = std::max(2, grid.coarse / 2), nf = std::max(2, grid.fine / 2);
  const auto cc = log_grid(0.05 * T, T, nc, false);
  const auto cf = minus(log_grid(0.05 * T, T, nf, true), cc);
  const auto xcc = int_grid(c.X, nc, false);
  const auto xcf = minus(int_grid(c.X, nf, true), xcc);

  SupMap coarse, fine;
  sweep(c, tc, xc, cc, xcc, coarse);
  sweep(c, tf, xf, cf, xcf, fine);

  BoundsReport rep;
  rep.epsilon = epsilon;
  rep.T = T;
  for (const auto& [name, sc] : coarse) {
    const Sup& sf = slot(fine, name);
    BoundsRow r;
    r.name = name;
    r.n_coarse = sc.count;
    r.n_fine = sf.count;
    r.empirical_constant = sc.value;
    r.fitted_constant = 2.0 * sc.value;
    r.fine_sup = sf.value;
    if (name == "hkbound3") r.reference = 1.0 + 1e-9;
    if (name == "boundheatkernel") r.reference = heat_kernel_long_time_constant();
    if (name == "hkboundcancel1") r.reference = 1.0;
    r.pass = sf.count > 0 && sc.count > 0 && r.fine_sup <= r.fitted_constant;
    if (r.reference > 0.0) {
      const double worst = std::max(r.empirical_constant, r.fine_sup);
      r.pass = r.pass && (name == "hkboundcancel1" ? worst < r.reference : worst <= r.reference);
    }
    rep.rows.push_back(r);
  }
  return rep;
}

void write_bounds_csv(std::ostream& os, const BoundsReport& r) {
  os << "name,grid_size,empirical_constant,fitted_constant,fine_sup,reference,pass\n" << std::setprecision(10);
  for (const auto& row : r.rows) {
    os << row.name << ',' << row.n_coarse + row.n_fine << ',' << row.empirical_constant << ',' << row.fitted_constant
       << ',' << row.fine_sup << ',';
    if (row.reference > 0.0) os << row.reference;
    os << ',' << (row.pass ? "PASS" : "FAIL") << '\n';
  }
}

void write_bounds_text(std::ostream& os, const BoundsReport& r) {
  os << "kernel bounds, eps=" << r.epsilon << " T=" << r.T << '\n';
  for (const auto& row : r.rows) {
    os << std::left << std::setw(22) << row.name << " coarse sup " << std::setw(12) << std::setprecision(6)
       << row.empirical_constant << " fine sup " << std::setw(12) << row.fine_sup << " C " << std::setw(12)
       << row.fitted_constant;
    if (row.reference > 0.0) os << " ref " << row.reference;
    os << (row.pass ? "  PASS" : "  FAIL") << '\n';
  }
}

}  // namespace fasep
