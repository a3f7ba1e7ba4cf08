#include "fasep/quadrature.hpp"

#include <gsl/gsl_integration.h>

namespace fasep {

GaussLegendre::GaussLegendre(int n) {
  if (n < 1) throw std::invalid_argument("GaussLegendre: order must be positive");
  gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(static_cast<std::size_t>(n));
  x_.resize(static_cast<std::size_t>(n));
  w_.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < x_.size(); ++i) gsl_integration_glfixed_point(-1.0, 1.0, i, &x_[i], &w_[i], t);
  gsl_integration_glfixed_table_free(t);
}

}  // namespace fasep
