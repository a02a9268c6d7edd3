#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace bactipot {

/// Neumaier-compensated running sum.
class compensated_sum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double mean(std::span<const double> xs) {
  compensated_sum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

/// Unbiased sample covariance (n - 1 denominator). Requires xs.size() >= 2.
inline double sample_covariance(std::span<const double> xs, std::span<const double> ys) {
  const double mx = mean(xs);
  const double my = mean(ys);
  compensated_sum s;
  for (std::size_t i = 0; i < xs.size(); ++i) s.add((xs[i] - mx) * (ys[i] - my));
  return s.value() / static_cast<double>(xs.size() - 1);
}

inline double sample_variance(std::span<const double> xs) { return sample_covariance(xs, xs); }

}  // namespace bactipot
