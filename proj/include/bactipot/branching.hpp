#pragma once

// Two-type Galton-Watson process of alive (X) and accumulated dead (Y) cells.
// Each alive cell independently dies, survives as one cell, or divides into
// two with probabilities (p0, p1, p2).

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bactipot/errors.hpp"
#include "bactipot/rng.hpp"

namespace bactipot {

using count_t = std::int64_t;

class OffspringDistribution {
 public:
  static constexpr double sum_tolerance = 1e-12;

  OffspringDistribution(double p0, double p1, double p2) : p0_(p0), p1_(p1), p2_(p2) {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(p0) || !in_unit(p1) || !in_unit(p2)) {
      throw invalid_parameter("offspring probabilities must lie in [0, 1]");
    }
    if (std::abs(p0 + p1 + p2 - 1.0) > sum_tolerance) {
      throw invalid_parameter("offspring probabilities must sum to 1");
    }
  }

  double p0() const noexcept { return p0_; }
  double p1() const noexcept { return p1_; }
  double p2() const noexcept { return p2_; }

  /// Offspring mean p1 + 2 p2.
  double mean() const noexcept { return p1_ + 2.0 * p2_; }

  friend bool operator==(const OffspringDistribution&, const OffspringDistribution&) = default;

 private:
  double p0_;
  double p1_;
  double p2_;
};

struct PopulationState {
  count_t alive = 0;
  count_t dead = 0;
  count_t generation = 0;

  count_t total() const noexcept { return alive + dead; }

  friend bool operator==(const PopulationState&, const PopulationState&) = default;
};

/// Dose-response parameters of m(c) = 2 / (1 + alpha c^beta).
class GrowthParams {
 public:
  GrowthParams(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw invalid_parameter("alpha must be positive");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw invalid_parameter("beta must be positive");
  }

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

  /// Concentration at which the offspring mean equals 1.
  double mic() const { return std::pow(alpha_, -1.0 / beta_); }

 private:
  double alpha_;
  double beta_;
};

namespace detail {

inline void require_generations(int n, int minimum) {
  if (n < minimum) {
    throw invalid_parameter("generation count must be at least " + std::to_string(minimum));
  }
}

// sum_{j=0}^{n-1} m^j by Horner; exact at m = 1.
inline double geometric_sum(double m, int n) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) s = s * m + 1.0;
  return s;
}

inline count_t checked_add(count_t a, count_t b) {
  count_t r{};
  if (__builtin_add_overflow(a, b, &r)) throw count_overflow("population count overflow");
  return r;
}

inline count_t checked_mul(count_t a, count_t b) {
  count_t r{};
  if (__builtin_mul_overflow(a, b, &r)) throw count_overflow("population count overflow");
  return r;
}

}  // namespace detail

/// m(c) = 2 / (1 + alpha c^beta). c = 0 gives 2.
inline double mean_from_concentration(const GrowthParams& params, double c) {
  if (!(c >= 0.0)) throw invalid_parameter("concentration must be non-negative");
  return 2.0 / (1.0 + params.alpha() * std::pow(c, params.beta()));
}

/// Death-or-division distribution (1 - m/2, 0, m/2) with offspring mean m.
inline OffspringDistribution dist_from_mean(double m) {
  if (!(m >= 0.0 && m <= 2.0)) throw invalid_parameter("offspring mean must lie in [0, 2]");
  return {1.0 - m / 2.0, 0.0, m / 2.0};
}

/// E Z_n for x0 = 1: m^n + p0 (1 + m + ... + m^{n-1}).
inline double mean_total(const OffspringDistribution& dist, int n) {
  detail::require_generations(n, 0);
  const double m = dist.mean();
  return std::pow(m, n) + dist.p0() * detail::geometric_sum(m, n);
}

/// E Z_n for x0 = 1 when p1 = 0: (m/2)(m^{n-1} + ... + 1) + 1.
/// Strictly increasing on [0, 2] from 1 to 2^n.
inline double mean_total_p1_zero(double m, int n) {
  detail::require_generations(n, 1);
  return 0.5 * m * detail::geometric_sum(m, n) + 1.0;
}

/// d/dm of mean_total_p1_zero: (1/2) sum_{j=1}^n j m^{j-1}.
inline double mean_total_derivative(double m, int n) {
  detail::require_generations(n, 1);
  double d = 0.0;
  for (int j = n; j >= 1; --j) d = d * m + static_cast<double>(j);
  return 0.5 * d;
}

struct MeanBounds {
  double lower;
  double upper;
};

/// Sharp bounds on E Z_n over all offspring laws with mean m. The upper bound
/// is attained by the death-or-division law, so it coincides with
/// mean_total_p1_zero.
inline MeanBounds mu_bounds(double m, int n) {
  detail::require_generations(n, 1);
  if (!(m >= 0.0 && m <= 2.0)) throw invalid_parameter("offspring mean must lie in [0, 2]");
  const double lower = m > 1.0 ? std::pow(m, n) : 1.0;
  return {lower, mean_total_p1_zero(m, n)};
}

/// Probability that the alive line dies out, started from a single cell.
inline double extinction_probability(const OffspringDistribution& dist) {
  if (dist.mean() <= 1.0) return 1.0;
  return dist.p0() / dist.p2();
}

/// One generation: (D0, D1, D2) ~ Multinomial(X; p0, p1, p2) drawn as two
/// binomials, then X' = D1 + 2 D2 and Y' = Y + D0.
inline PopulationState step(const PopulationState& state, const OffspringDistribution& dist,
                            rng_stream& rng) {
  PopulationState next{0, state.dead, state.generation + 1};
  if (state.alive == 0) return next;

  const count_t x = state.alive;
  count_t deaths = 0;
  if (dist.p0() >= 1.0) {
    deaths = x;
  } else if (dist.p0() > 0.0) {
    deaths = std::binomial_distribution<count_t>(x, dist.p0())(rng);
  }
  const count_t rest = x - deaths;
  count_t divisions = 0;
  const double survivors_mass = dist.p1() + dist.p2();
  if (rest > 0 && survivors_mass > 0.0) {
    const double p_div = dist.p2() / survivors_mass;
    if (p_div >= 1.0) {
      divisions = rest;
    } else if (p_div > 0.0) {
      divisions = std::binomial_distribution<count_t>(rest, p_div)(rng);
    }
  }
  const count_t survivals = rest - divisions;
  next.alive = detail::checked_add(survivals, detail::checked_mul(2, divisions));
  next.dead = detail::checked_add(state.dead, deaths);
  // Z_n must stay representable too.
  (void)detail::checked_add(next.alive, next.dead);
  return next;
}

/// Trajectory (X_k, Y_k), k = 0..n, started from (x0, 0).
inline std::vector<PopulationState> simulate(count_t x0, const OffspringDistribution& dist, int n,
                                             rng_stream& rng) {
  if (x0 < 1) throw invalid_parameter("initial population must be at least 1");
  detail::require_generations(n, 0);
  std::vector<PopulationState> path;
  path.reserve(static_cast<std::size_t>(n) + 1);
  path.push_back({x0, 0, 0});
  for (int k = 0; k < n; ++k) path.push_back(step(path.back(), dist, rng));
  return path;
}

/// Z_n only, without storing the path.
inline count_t simulate_total(count_t x0, const OffspringDistribution& dist, int n,
                              rng_stream& rng) {
  if (x0 < 1) throw invalid_parameter("initial population must be at least 1");
  detail::require_generations(n, 0);
  PopulationState s{x0, 0, 0};
  for (int k = 0; k < n; ++k) s = step(s, dist, rng);
  return s.total();
}

/// Exact law of one step from `alive` cells, keyed by (alive', deaths).
/// Multinomial pmf evaluated directly; intended for small populations.
inline std::map<std::pair<count_t, count_t>, double> step_distribution(
    count_t alive, const OffspringDistribution& dist) {
  if (alive < 0 || alive > 60) throw invalid_parameter("step_distribution supports 0..60 cells");
  std::map<std::pair<count_t, count_t>, double> law;
  // Binomial coefficients up to `alive` as doubles (exact for alive <= 60).
  std::vector<std::vector<double>> binom(static_cast<std::size_t>(alive) + 1);
  for (count_t i = 0; i <= alive; ++i) {
    auto& row = binom[static_cast<std::size_t>(i)];
    row.assign(static_cast<std::size_t>(i) + 1, 1.0);
    for (count_t j = 1; j < i; ++j) {
      row[static_cast<std::size_t>(j)] = binom[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)] +
                                         binom[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
    }
  }
  for (count_t d0 = 0; d0 <= alive; ++d0) {
    for (count_t d2 = 0; d0 + d2 <= alive; ++d2) {
      const count_t d1 = alive - d0 - d2;
      const double coef = binom[static_cast<std::size_t>(alive)][static_cast<std::size_t>(d0)] *
                          binom[static_cast<std::size_t>(alive - d0)][static_cast<std::size_t>(d2)];
      const double p = coef * std::pow(dist.p0(), static_cast<double>(d0)) *
                       std::pow(dist.p1(), static_cast<double>(d1)) *
                       std::pow(dist.p2(), static_cast<double>(d2));
      if (p > 0.0) law[{d1 + 2 * d2, d0}] += p;
    }
  }
  return law;
}

}  // namespace bactipot
