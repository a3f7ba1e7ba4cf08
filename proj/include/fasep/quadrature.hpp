#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fasep {

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed-order Gauss-Legendre rule (nodes from GSL's glfixed tables).
class GaussLegendre {
 public:
  explicit GaussLegendre(int n = 20);
  int order() const { return static_cast<int>(x_.size()); }

  template <class F>
  double integrate(F&& f, double a, double b) const {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) s += w_[i] * f(c + h * x_[i]);
    return h * s;
  }

  // n equal panels on [a,b]
  template <class F>
  double panels(F&& f, double a, double b, int n) const {
    const double h = (b - a) / n;
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += integrate(f, a + k * h, a + (k + 1) * h);
    return s;
  }

  // Doubles the panel count until two successive sums differ by at most
  // abs_tol; throws QuadratureError after max_doublings.
  template <class F>
  double converged(F&& f, double a, double b, int n0, double abs_tol, int max_doublings = 6) const {
    double prev = panels(f, a, b, n0);
    int n = n0;
    for (int k = 0; k < max_doublings; ++k) {
      n *= 2;
      const double cur = panels(f, a, b, n);
      if (std::abs(cur - prev) <= abs_tol) return cur;
      prev = cur;
    }
    throw QuadratureError("quadrature did not converge with " + std::to_string(n) + " panels of " +
                          std::to_string(order()) + " nodes");
  }

  const std::vector<double>& nodes() const { return x_; }
  const std::vector<double>& weights() const { return w_; }

 private:
  std::vector<double> x_, w_;
};

}  // namespace fasep
