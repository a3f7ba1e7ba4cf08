#include "fasep/stats.hpp"

#include <gsl/gsl_cdf.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace fasep {

void RunningStats::add(double x) {
  ++n_;
  const double d = x - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (x - mean_);
}

void RunningStats::merge(const RunningStats& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
  const double d = o.mean_ - mean_;
  const double n = na + nb;
  mean_ += d * nb / n;
  m2_ += o.m2_ + d * d * na * nb / n;
  n_ += o.n_;
}

double RunningStats::variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

double RunningStats::stderr_mean() const {
  return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

McResult McResult::from(const RunningStats& s, std::uint64_t seed, std::uint64_t first_stream) {
  McResult r;
  r.estimate = s.mean();
  r.stderr_ = s.stderr_mean();
  r.n = s.n();
  r.seed = seed;
  r.first_stream = first_stream;
  r.last_stream = first_stream + static_cast<std::uint64_t>(std::max<std::int64_t>(s.n(), 1)) - 1;
  return r;
}

bool McResult::consistent_with(double target, double k) const {
  return std::abs(estimate - target) <= k * stderr_;
}

ChiSquareResult chi_square_two_sample(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("chi_square_two_sample: size mismatch");
  double na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]);
  }
  if (na == 0 || nb == 0) throw std::invalid_argument("chi_square_two_sample: empty sample");
  ChiSquareResult r;
  int cells = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double tot = static_cast<double>(a[i] + b[i]);
    if (tot == 0) continue;
    ++cells;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    r.statistic += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
  }
  r.dof = std::max(cells - 1, 1);
  r.p_value = gsl_cdf_chisq_Q(r.statistic, r.dof);
  return r;
}

ChiSquareResult chi_square_gof(const std::vector<std::int64_t>& observed, const std::vector<double>& probs,
                               double min_expected) {
  if (observed.size() != probs.size()) throw std::invalid_argument("chi_square_gof: size mismatch");
  double n = 0;
  for (auto o : observed) n += static_cast<double>(o);
  ChiSquareResult r;
  double pooled_obs = 0, pooled_exp = 0;
  int cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = n * probs[i];
    if (e < min_expected) {
      pooled_obs += static_cast<double>(observed[i]);
      pooled_exp += e;
      continue;
    }
    ++cells;
    r.statistic += (observed[i] - e) * (observed[i] - e) / e;
  }
  if (pooled_exp > 0) {
    ++cells;
    r.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
  }
  r.dof = std::max(cells - 1, 1);
  r.p_value = gsl_cdf_chisq_Q(r.statistic, r.dof);
  return r;
}

int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body) {
  if (n <= 0) return;
  if (threads <= 0) threads = default_threads();
  threads = static_cast<int>(std::min<std::int64_t>(threads, n));
  if (threads == 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      try {
        for (std::int64_t i = next++; i < n; i = next++) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace fasep
