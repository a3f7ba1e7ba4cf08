#include "fasep/hopfcole.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fasep {

HeightField height_field(const HalfLineConfig& cfg) {
  HeightField h;
  h.h0 = -2 * cfg.injections;
  h.values.resize(static_cast<std::size_t>(cfg.n_trunc()) + 1);
  h.values[0] = h.h0;
  for (int k = 1; k <= cfg.n_trunc(); ++k)
    h.values[static_cast<std::size_t>(k)] = h.values[static_cast<std::size_t>(k - 1)] + 2 * cfg.sigma(k) - 1;
  return h;
}

double HopfColeField::at(int x) const {
  if (x < -1) throw std::out_of_range("HopfColeField::at: site below -1");
  if (x == -1) return boundary;
  if (x <= n()) return values[static_cast<std::size_t>(x)];
  return values.back() * std::pow(params.mu, x - n());
}

HopfColeField hopf_cole(const HeightField& h, double t_micro, const WeakAsymParams& params) {
  HopfColeField z;
  z.t_micro = t_micro;
  z.params = params;
  z.values.resize(h.values.size());
  for (std::size_t x = 0; x < h.values.size(); ++x)
    z.values[x] = std::exp(-params.lambda * static_cast<double>(h.values[x]) + params.nu * t_micro);
  z.boundary = params.mu * z.values[0];
  return z;
}

HopfColeField hopf_cole(const HalfLineConfig& cfg, double t_micro, const WeakAsymParams& params) {
  return hopf_cole(height_field(cfg), t_micro, params);
}

double laplacian_mu(const HopfColeField& z, int x) {
  if (x < 0 || x + 1 > z.n()) throw std::out_of_range("laplacian_mu: site outside field range");
  const auto& v = z.values;
  const auto i = static_cast<std::size_t>(x);
  if (x == 0) return v[1] + z.params.mu * v[0] - 2.0 * v[0];
  return v[i + 1] + v[i - 1] - 2.0 * v[i];
}

double RescaledField::operator()(double u) const {
  if (u < 0.0) throw std::out_of_range("RescaledField: negative argument");
  const double k = u / (epsilon * epsilon);
  const double last = static_cast<double>(samples.size() - 1);
  if (k > last + 1e-9) throw std::out_of_range("RescaledField: argument beyond stored range");
  const auto i = static_cast<std::size_t>(std::min(std::floor(k), std::max(last - 1.0, 0.0)));
  if (samples.size() == 1) return samples[0];
  const double w = k - static_cast<double>(i);
  return (1.0 - w) * samples[i] + w * samples[i + 1];
}

RescaledField rescale(const HopfColeField& z, double epsilon, ScaleKind scale, double t_macro) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rescale: epsilon must be positive");
  const double expect = t_macro / std::pow(epsilon, 4);
  if (std::abs(z.t_micro - expect) > 1e-9 * std::max(1.0, expect))
    throw std::invalid_argument("rescale: field time does not match eps^-4 t_macro");
  RescaledField r;
  r.t_macro = t_macro;
  r.epsilon = epsilon;
  r.scale = scale;
  const double c = r.prefactor();
  r.samples.reserve(z.values.size());
  for (double v : z.values) r.samples.push_back(c * v);
  return r;
}

namespace {

double qv_factor(int s_here, int s_next, const WeakAsymParams& pr) {
  const double d2 = (pr.p - pr.q) * (pr.p - pr.q);
  return s_here * (1 - s_next) * d2 / pr.p + s_next * (1 - s_here) * d2 / pr.q;
}

double qv_factor0(int s1, const WeakAsymParams& pr) {
  return (1 - s1) * (pr.p - pr.q) * (pr.p - pr.q) / pr.p;
}

}  // namespace

double qv_rate(const HalfLineConfig& cfg, const HopfColeField& z, int x) {
  if (x < 0 || x > z.n()) throw std::out_of_range("qv_rate: site outside field range");
  const double z2 = z.at(x) * z.at(x);
  if (x == 0) return z2 * qv_factor0(cfg.sigma(1), z.params);
  return z2 * qv_factor(cfg.sigma(x), cfg.sigma(x + 1), z.params);
}

QvExpansion qv_weak_asym_expansion(const HopfColeField& z, int x) {
  if (x < 0 || x + 1 > z.n()) throw std::out_of_range("qv_weak_asym_expansion: site outside field range");
  const double e = z.params.epsilon;
  const double zx = z.at(x);
  const double grad_plus = z.at(x + 1) - zx;
  QvExpansion out;
  out.leading = e * e * zx * zx;
  if (x == 0)
    out.gradient_term = -e * zx * grad_plus;
  else
    out.gradient_term = grad_plus * (z.at(x - 1) - zx);
  return out;
}

double exp_integral(double rate, double a, double b) {
  if (rate == 0.0) return b - a;
  return std::exp(rate * a) * std::expm1(rate * (b - a)) / rate;
}

namespace {

// Bond whose height changes and the change: injections lower h(0) by two,
// a right jump across (b, b+1) lowers h(b) by two, a left jump raises it.
std::pair<int, int> height_update(const Event& ev) {
  switch (ev.kind) {
    case TransitionKind::asep_inject:
      return {0, -2};
    case TransitionKind::asep_right:
      return {ev.site, -2};
    case TransitionKind::asep_left:
      return {ev.site, 2};
    default:
      throw std::invalid_argument("half-line tracker fed a FASEP event");
  }
}

std::vector<std::int64_t> heights_upto(const HalfLineConfig& cfg, int xmax) {
  const auto hf = height_field(cfg);
  std::vector<std::int64_t> h(static_cast<std::size_t>(xmax) + 1);
  for (int x = 0; x <= xmax; ++x) h[static_cast<std::size_t>(x)] = hf.at(x);
  return h;
}

}  // namespace

MartingaleTracker::MartingaleTracker(const HalfLineConfig& init, const WeakAsymParams& params, std::vector<int> sites)
    : params_(params), sites_(std::move(sites)) {
  int xmax = 1;
  for (int x : sites_) {
    if (x < 0) throw std::invalid_argument("MartingaleTracker: negative site");
    xmax = std::max(xmax, x + 1);
  }
  h_ = heights_upto(init, xmax);
  const std::size_t n = sites_.size();
  drift_coef_.assign(n, 0.0);
  qv_coef_.assign(n, 0.0);
  drift_int_.assign(n, 0.0);
  qv_int_.assign(n, 0.0);
  t_last_.assign(n, 0.0);
  init_z_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    init_z_[i] = z0(sites_[i]);
    refresh(i);
  }
}

double MartingaleTracker::z0(int x) const {
  return std::exp(-params_.lambda * static_cast<double>(h_[static_cast<std::size_t>(x)]));
}

void MartingaleTracker::refresh(std::size_t i) {
  const int x = sites_[i];
  auto sig = [&](int k) {
    return static_cast<int>((h_[static_cast<std::size_t>(k)] - h_[static_cast<std::size_t>(k - 1)] + 1) / 2);
  };
  const double zx = z0(x);
  if (x == 0) {
    drift_coef_[i] = params_.diffusion * (z0(1) + params_.mu * zx - 2.0 * zx);
    qv_coef_[i] = zx * zx * qv_factor0(sig(1), params_);
  } else {
    drift_coef_[i] = params_.diffusion * (z0(x + 1) + z0(x - 1) - 2.0 * zx);
    qv_coef_[i] = zx * zx * qv_factor(sig(x), sig(x + 1), params_);
  }
}

void MartingaleTracker::flush(std::size_t i, double t) {
  drift_int_[i] += drift_coef_[i] * exp_integral(params_.nu, t_last_[i], t);
  qv_int_[i] += qv_coef_[i] * exp_integral(2.0 * params_.nu, t_last_[i], t);
  t_last_[i] = t;
}

void MartingaleTracker::on_event(const Event& ev) {
  if (ev.time < t_) throw std::invalid_argument("MartingaleTracker: events out of order");
  t_ = ev.time;
  const auto [b, dh] = height_update(ev);
  if (b >= static_cast<int>(h_.size())) return;
  for (std::size_t i = 0; i < sites_.size(); ++i)
    if (std::abs(sites_[i] - b) <= 1) flush(i, ev.time);
  h_[static_cast<std::size_t>(b)] += dh;
  for (std::size_t i = 0; i < sites_.size(); ++i)
    if (std::abs(sites_[i] - b) <= 1) refresh(i);
}

std::vector<MartingaleDiag> MartingaleTracker::finish(double t) {
  if (t < t_) throw std::invalid_argument("MartingaleTracker: finish before last event");
  std::vector<MartingaleDiag> out(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    flush(i, t);
    out[i].site = sites_[i];
    out[i].residual = z0(sites_[i]) * std::exp(params_.nu * t) - init_z_[i] - drift_int_[i];
    out[i].qv_integral = qv_int_[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j)
      out[i].cross.push_back({out[i].site, out[j].site, out[i].residual * out[j].residual});
  t_ = t;
  return out;
}

std::vector<MartingaleDiag> martingale_residual(const Trajectory& traj, const std::vector<int>& sites, double t,
                                                const WeakAsymParams& params) {
  if (t > traj.t_end) throw std::invalid_argument("martingale_residual: t exceeds trajectory horizon");
  const auto* init = std::get_if<HalfLineConfig>(&traj.initial);
  if (!init) throw std::invalid_argument("martingale_residual: half-line trajectory required");
  MartingaleTracker tracker(*init, params, sites);
  for (const auto& ev : traj.events) {
    if (ev.time > t) break;
    tracker.on_event(ev);
  }
  return tracker.finish(t);
}

FieldIntegrator::FieldIntegrator(const HalfLineConfig& init, const WeakAsymParams& params,
                                 std::vector<std::vector<double>> weights)
    : params_(params), weights_(std::move(weights)) {
  std::size_t len = 1;
  for (const auto& w : weights_) len = std::max(len, w.size());
  h_ = heights_upto(init, static_cast<int>(len) - 1);
  s_.assign(weights_.size(), 0.0);
  integral_.assign(weights_.size(), 0.0);
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    double acc = 0.0;
    for (std::size_t x = 0; x < weights_[k].size(); ++x)
      if (weights_[k][x] != 0.0) acc += weights_[k][x] * std::exp(-params_.lambda * static_cast<double>(h_[x]));
    s_[k] = acc;
  }
  init_ = s_;
}

void FieldIntegrator::advance(double t) {
  if (t < t_) throw std::invalid_argument("FieldIntegrator: time went backwards");
  if (t == t_) return;
  const double e = exp_integral(params_.nu, t_, t);
  for (std::size_t k = 0; k < s_.size(); ++k) integral_[k] += s_[k] * e;
  t_ = t;
}

void FieldIntegrator::on_event(const Event& ev) {
  advance(ev.time);
  const auto [b, dh] = height_update(ev);
  const auto ub = static_cast<std::size_t>(b);
  if (ub >= h_.size()) return;
  const double before = std::exp(-params_.lambda * static_cast<double>(h_[ub]));
  h_[ub] += dh;
  const double diff = std::exp(-params_.lambda * static_cast<double>(h_[ub])) - before;
  for (std::size_t k = 0; k < weights_.size(); ++k)
    if (ub < weights_[k].size()) s_[k] += weights_[k][ub] * diff;
}

double FieldIntegrator::current(std::size_t k) const { return s_[k] * std::exp(params_.nu * t_); }

namespace {

double bump(double u) { return std::abs(u) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - u * u)) : 0.0; }
double bump_d1(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  const double a = 1.0 - u * u;
  return bump(u) * (-2.0 * u / (a * a));
}
double bump_d2(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  const double a = 1.0 - u * u;
  const double g1 = -2.0 * u / (a * a);
  const double g2 = -2.0 / (a * a) - 8.0 * u * u / (a * a * a);
  return bump(u) * (g1 * g1 + g2);
}

}  // namespace

TestFunction test_function(const std::string& name) {
  if (name == "hermite-damped") {
    return {name, [](double u) { return u * std::exp(-u * u); },
            [](double u) { return (1.0 - 2.0 * u * u) * std::exp(-u * u); },
            [](double u) { return (4.0 * u * u * u - 6.0 * u) * std::exp(-u * u); }, 8.5};
  }
  if (name == "bump") return {name, bump, bump_d1, bump_d2, 1.0};
  if (name == "polynomial-cutoff") {
    return {name, [](double u) { return u * bump(u / 2); },
            [](double u) { return bump(u / 2) + 0.5 * u * bump_d1(u / 2); },
            [](double u) { return bump_d1(u / 2) + 0.25 * u * bump_d2(u / 2); }, 2.0};
  }
  throw std::invalid_argument("unknown test function: " + name);
}

std::vector<std::string> test_function_names() { return {"hermite-damped", "bump", "polynomial-cutoff"}; }

TestFunction corrected_test_function(const TestFunction& phi, const TestFunction& psi, double epsilon) {
  if (std::abs(phi.f(0.0)) > 1e-14) throw std::invalid_argument("corrected_test_function: phi(0) != 0");
  const double c = epsilon * phi.d1(0.0);
  TestFunction out;
  out.name = phi.name + "+eps";
  out.f = [phi, psi, c](double u) { return phi.f(u) + c * psi.f(u); };
  out.d1 = [phi, psi, c](double u) { return phi.d1(u) + c * psi.d1(u); };
  out.d2 = [phi, psi, c](double u) { return phi.d2(u) + c * psi.d2(u); };
  out.support = std::max(phi.support, psi.support);
  return out;
}

double pairing_eps(const std::vector<double>& field, const std::function<double(double)>& phi, double epsilon) {
  const double e2 = epsilon * epsilon;
  double acc = 0.0;
  for (std::size_t x = 0; x < field.size(); ++x) acc += phi(e2 * static_cast<double>(x)) * field[x];
  return e2 * acc;
}

double boundary_combination(const TestFunction& phi, double epsilon, double mu) {
  const double e2 = epsilon * epsilon;
  return (mu * phi.f(0.0) - phi.f(-e2)) / e2;
}

AppendixACheck appendix_a_check(const WeakAsymParams& pr) {
  AppendixACheck out;
  const double D = pr.diffusion, l = pr.lambda;
  out.parameter_conditions[0] = pr.nu - D * (std::exp(l) + std::exp(-l) - 2.0);
  out.parameter_conditions[1] = pr.nu - (D * (2.0 * std::exp(l) - 2.0) - pr.p * (std::exp(2.0 * l) - 1.0));
  out.parameter_conditions[2] = pr.nu - (D * (2.0 * std::exp(-l) - 2.0) - pr.q * (std::exp(-2.0 * l) - 1.0));

  auto zat = [&](int x) {
    return [&pr, x](const HalfLineConfig& c) { return std::exp(-pr.lambda * static_cast<double>(height_field(c).at(x))); };
  };
  for (int bits = 0; bits < 8; ++bits) {
    HalfLineConfig cfg = make_empty_halfline(6);
    for (int k = 1; k <= 3; ++k) cfg.set(k, (bits >> (k - 1)) & 1);
    const double z1 = zat(1)(cfg), z2 = zat(2)(cfg), z3 = zat(3)(cfg);
    const double lz = generator_at(cfg, zat(2), pr);
    out.interior[static_cast<std::size_t>(bits)] = (pr.nu * z2 + lz - D * (z3 + z1 - 2.0 * z2)) / z2;
  }
  for (int s1 = 1; s1 >= 0; --s1) {
    HalfLineConfig cfg = make_empty_halfline(6);
    cfg.set(1, s1);
    const double z0 = zat(0)(cfg), z1 = zat(1)(cfg);
    const double lz = generator_at(cfg, zat(0), pr);
    const double zm1 = (pr.nu * z0 + lz) / D - z1 + 2.0 * z0;
    out.boundary_ratio[static_cast<std::size_t>(1 - s1)] = zm1 / z0;
  }
  return out;
}

}  // namespace fasep
