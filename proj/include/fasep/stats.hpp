#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fasep {

// Mean/variance accumulator. merge() is associative, so partial sums from
// workers can be combined in any order.
class RunningStats {
 public:
  void add(double x);
  void merge(const RunningStats& other);
  std::int64_t n() const { return n_; }
  double mean() const { return n_ ? mean_ : 0.0; }
  double variance() const;  // unbiased
  double stderr_mean() const;

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct McResult {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::uint64_t first_stream = 0;
  std::uint64_t last_stream = 0;
  double epsilon = 0.0;
  double t = 0.0;
  double u = 0.0;
  std::string experiment;

  static McResult from(const RunningStats& s, std::uint64_t seed, std::uint64_t first_stream);
  // |estimate - target| <= k * stderr
  bool consistent_with(double target, double k = 3.0) const;
};

// Pearson chi-square statistic and upper-tail p-value for a two-sample
// homogeneity test on category counts. Categories empty in both samples
// are dropped.
struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};
ChiSquareResult chi_square_two_sample(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b);
// Goodness of fit of observed counts to expected probabilities. Cells with
// expected count below min_expected are pooled into one.
ChiSquareResult chi_square_gof(const std::vector<std::int64_t>& observed, const std::vector<double>& probs,
                               double min_expected = 5.0);

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware).
// Callers write into per-index slots and reduce sequentially afterwards, which
// keeps every estimate bit-identical across thread counts.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body);

int default_threads();

}  // namespace fasep
