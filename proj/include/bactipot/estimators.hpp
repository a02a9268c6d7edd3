#pragma once

// Estimation chain from Ct values to the dose-response fit:
//   Ct lane -> log2 mu_hat -> m_hat = psi_n(mu_hat) -> least squares in
//   (log c, log(2/m - 1)) -> (alpha_hat, beta_hat, mic_hat),
// plus the asymptotic covariance of sqrt(N)(alpha_hat - alpha, beta_hat - beta)
// and of sqrt(N)(mic_hat - mic).
//
// Logarithm bases: the regression uses natural logs, Ct arithmetic uses log2.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bactipot/branching.hpp"
#include "bactipot/errors.hpp"
#include "bactipot/measurement.hpp"
#include "bactipot/stats.hpp"

namespace bactipot {

struct MeanEstimate {
  double concentration = 0.0;
  double mu_hat = 1.0;   // after clamping into [1, 2^n]
  double m_hat = 0.0;
  bool clamped = false;  // raw mu_hat fell outside [1, 2^n]
};

/// Least-squares inputs: points (l_i, f_i) with l_i strictly increasing.
class RegressionInputs {
 public:
  RegressionInputs(std::vector<double> log_c, std::vector<double> f) : l_(std::move(log_c)), f_(std::move(f)) {
    if (l_.size() != f_.size()) throw invalid_parameter("regression inputs differ in length");
    if (l_.size() < 2) throw insufficient_data("at least two concentrations are needed");
    for (std::size_t i = 1; i < l_.size(); ++i) {
      if (!(l_[i] > l_[i - 1])) throw invalid_parameter("log concentrations must be strictly increasing");
    }
    compensated_sum s1, s2;
    for (double l : l_) {
      s1.add(l);
      s2.add(l * l);
    }
    l1_ = s1.value();
    l2_ = s2.value();
    if (!(denominator() > 0.0)) throw singular_design("degenerate design: K L2 - L1^2 <= 0");
  }

  std::size_t size() const noexcept { return l_.size(); }
  const std::vector<double>& log_c() const noexcept { return l_; }
  const std::vector<double>& f() const noexcept { return f_; }
  double l1() const noexcept { return l1_; }
  double l2() const noexcept { return l2_; }
  double denominator() const noexcept {
    const double k = static_cast<double>(l_.size());
    return k * l2_ - l1_ * l1_;
  }

 private:
  std::vector<double> l_;
  std::vector<double> f_;
  double l1_ = 0.0;
  double l2_ = 0.0;
};

struct Exclusion {
  double concentration;
  std::string reason;
};

struct FitResult {
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double mic_hat = 0.0;
  std::vector<double> used_concentrations;
  std::vector<Exclusion> excluded;
};

struct AsymptoticCovariance {
  double sigma2_alpha = 0.0;
  double sigma_alphabeta = 0.0;
  double sigma2_beta = 0.0;
  double sigma2_theta = 0.0;
  std::vector<double> k_factors;
};

/// Which estimates enter the regression. With an explicit subset only the
/// clamped points (m_hat in {0, 2}) are dropped from it; otherwise every
/// point with m_hat in [lower_m, upper_m] is used.
struct FitSelection {
  std::optional<std::vector<double>> concentrations;
  double lower_m = 0.05;
  double upper_m = 1.95;
};

// ---------------------------------------------------------------------------

/// log2 mu_hat = a - log2 x0 - mean(Ct).
inline double estimate_log_mu(std::span<const double> cts, double a, count_t x0) {
  if (cts.empty()) throw invalid_parameter("no Ct values in lane");
  if (x0 < 1) throw invalid_parameter("x0 must be at least 1");
  return a - std::log2(static_cast<double>(x0)) - mean(cts);
}

/// Inverse of mean_total_p1_zero(., n) on [1, 2^n], by bisection.
inline double psi_inverse(double mu, int n, double tol = 1e-12) {
  detail::require_generations(n, 1);
  const double top = std::ldexp(1.0, n);
  if (!(mu >= 1.0 && mu <= top)) {
    std::ostringstream msg;
    msg << "mu = " << mu << " outside [1, 2^" << n << "]";
    throw domain_error(msg.str());
  }
  if (mu == 1.0) return 0.0;
  if (mu == top) return 2.0;
  double lo = 0.0;
  double hi = 2.0;
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mean_total_p1_zero(mid, n) < mu) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline MeanEstimate estimate_m(double concentration, std::span<const double> cts, double a,
                               count_t x0, int n) {
  detail::require_generations(n, 1);
  const double raw = std::exp2(estimate_log_mu(cts, a, x0));
  const double top = std::ldexp(1.0, n);
  MeanEstimate est;
  est.concentration = concentration;
  est.mu_hat = std::clamp(raw, 1.0, top);
  est.clamped = raw != est.mu_hat;
  est.m_hat = psi_inverse(est.mu_hat, n);
  return est;
}

/// log(2/m - 1), the linearised response.
inline double linearised_response(double m) { return std::log(2.0 / m - 1.0); }

/// Closed-form least squares on (l_i, f_i):
///   beta  = (K sum f l - sum f L1) / (K L2 - L1^2)
///   alpha = exp((sum f - beta L1) / K)
inline FitResult fit_regression(const RegressionInputs& in) {
  const double k = static_cast<double>(in.size());
  compensated_sum sf, sfl;
  for (std::size_t i = 0; i < in.size(); ++i) {
    sf.add(in.f()[i]);
    sfl.add(in.f()[i] * in.log_c()[i]);
  }
  FitResult r;
  r.beta_hat = (k * sfl.value() - sf.value() * in.l1()) / in.denominator();
  r.alpha_hat = std::exp((sf.value() - r.beta_hat * in.l1()) / k);
  if (!(r.beta_hat > 0.0) || !std::isfinite(r.beta_hat)) {
    throw fit_failure("fitted beta is not positive");
  }
  if (!(r.alpha_hat > 0.0) || !std::isfinite(r.alpha_hat)) {
    throw fit_failure("fitted alpha is not a positive finite number");
  }
  r.mic_hat = std::pow(r.alpha_hat, -1.0 / r.beta_hat);
  return r;
}

inline FitResult fit_alpha_beta(std::span<const MeanEstimate> estimates,
                                const FitSelection& selection = {}) {
  std::vector<MeanEstimate> sorted(estimates.begin(), estimates.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const MeanEstimate& x, const MeanEstimate& y) { return x.concentration < y.concentration; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].concentration == sorted[i - 1].concentration) {
      throw invalid_parameter("duplicate concentration among mean estimates");
    }
  }
  if (selection.concentrations) {
    for (double c : *selection.concentrations) {
      const bool present = std::any_of(sorted.begin(), sorted.end(),
                                       [c](const MeanEstimate& e) { return e.concentration == c; });
      if (!present) {
        throw invalid_parameter("selected concentration " + format_concentration(c) +
                                " has no estimate");
      }
    }
  }

  std::vector<double> used, l, f;
  std::vector<Exclusion> excluded;
  for (const auto& e : sorted) {
    if (selection.concentrations) {
      const auto& subset = *selection.concentrations;
      if (std::find(subset.begin(), subset.end(), e.concentration) == subset.end()) {
        excluded.push_back({e.concentration, "not selected"});
        continue;
      }
    }
    if (e.clamped || !(e.m_hat > 0.0 && e.m_hat < 2.0)) {
      excluded.push_back({e.concentration, "m_hat on boundary of [0, 2] (clamped)"});
      continue;
    }
    if (!selection.concentrations && (e.m_hat < selection.lower_m || e.m_hat > selection.upper_m)) {
      std::ostringstream why;
      why << "m_hat = " << e.m_hat << " outside [" << selection.lower_m << ", " << selection.upper_m
          << "]";
      excluded.push_back({e.concentration, why.str()});
      continue;
    }
    if (!(e.concentration > 0.0)) {
      excluded.push_back({e.concentration, "non-positive concentration"});
      continue;
    }
    used.push_back(e.concentration);
    l.push_back(std::log(e.concentration));
    f.push_back(linearised_response(e.m_hat));
  }
  if (used.size() < 2) {
    std::ostringstream msg;
    msg << "fewer than two usable concentrations";
    if (!excluded.empty()) {
      msg << "; excluded:";
      for (const auto& x : excluded) msg << ' ' << format_concentration(x.concentration) << " (" << x.reason << ')';
    }
    throw insufficient_data(msg.str());
  }
  FitResult r = fit_regression(RegressionInputs(std::move(l), std::move(f)));
  r.used_concentrations = std::move(used);
  r.excluded = std::move(excluded);
  return r;
}

/// k_i = -2/(m(2-m)) * sigma_eps mu_n(m) log 2 / mu_n'(m), m = m(c).
/// sqrt(N)(f_i - f(c_i)) is asymptotically k_i times a standard normal.
inline double k_factor(double c, const GrowthParams& params, int n, double sigma_eps) {
  const double m = mean_from_concentration(params, c);
  if (!(m > 0.0 && m < 2.0)) {
    throw singular_design("m(c) = " + format_real(m) + " at c = " + format_real(c) +
                          " is on the boundary of (0, 2)");
  }
  return -2.0 / (m * (2.0 - m)) * sigma_eps * mean_total_p1_zero(m, n) * std::numbers::ln2 /
         mean_total_derivative(m, n);
}

inline AsymptoticCovariance asymptotic_covariance(std::span<const double> grid,
                                                  const GrowthParams& params, int n,
                                                  double sigma_eps) {
  detail::require_grid(grid);
  if (grid.size() < 2) throw insufficient_data("a design needs at least two concentrations");
  if (!(sigma_eps >= 0.0)) throw invalid_parameter("sigma_eps must be non-negative");

  AsymptoticCovariance cov;
  std::vector<double> l;
  for (double c : grid) {
    cov.k_factors.push_back(k_factor(c, params, n, sigma_eps));
    l.push_back(std::log(c));
  }
  const RegressionInputs design(l, std::vector<double>(l.size(), 0.0));
  const double kk = static_cast<double>(grid.size());
  const double l1 = design.l1();
  const double l2 = design.l2();
  const double d2 = design.denominator() * design.denominator();
  const double alpha = params.alpha();
  const double beta = params.beta();
  const double log_alpha = std::log(alpha);
  const double theta = params.mic();

  compensated_sum saa, sab, sbb, stt;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double k2 = cov.k_factors[i] * cov.k_factors[i];
    const double u = l2 - l1 * l[i];  // intercept weight
    const double v = kk * l[i] - l1;  // slope weight
    saa.add(k2 * u * u);
    sab.add(k2 * v * u);
    sbb.add(k2 * v * v);
    // (log a)^2 (u / log a - v / b)^2 written without dividing by log a.
    const double w = u - log_alpha * v / beta;
    stt.add(k2 * w * w);
  }
  cov.sigma2_alpha = alpha * alpha / d2 * saa.value();
  cov.sigma_alphabeta = alpha / d2 * sab.value();
  cov.sigma2_beta = sbb.value() / d2;
  cov.sigma2_theta = theta * theta / (beta * beta * d2) * stt.value();
  return cov;
}

// ---------------------------------------------------------------------------
// Nuisance parameters

/// a_hat = mean(Ct) + log2 x0 over lanes where growth is fully suppressed.
inline double estimate_a(std::span<const double> high_c_cts, count_t x0) {
  if (high_c_cts.empty()) throw insufficient_data("no Ct values at high concentration");
  return mean(high_c_cts) + std::log2(static_cast<double>(x0));
}

/// n_hat = a_hat - log2 x0 - mean(Ct) over freely growing lanes.
inline double estimate_n(std::span<const double> low_c_cts, double a_hat, count_t x0) {
  if (low_c_cts.empty()) throw insufficient_data("no Ct values at low concentration");
  return a_hat - std::log2(static_cast<double>(x0)) - mean(low_c_cts);
}

/// Nearest integer, halves rounded up.
inline int round_generations(double n_hat) { return static_cast<int>(std::floor(n_hat + 0.5)); }

/// Pooled within-group standard deviation, sum of squared deviations over
/// sum of (n_g - 1).
inline double estimate_sigma_eps(std::span<const std::vector<double>> groups) {
  compensated_sum ss;
  std::size_t dof = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    const double m = mean(g);
    for (double x : g) ss.add((x - m) * (x - m));
    dof += g.size() - 1;
  }
  if (dof == 0) throw insufficient_data("sigma_eps needs a group with at least two replicates");
  return std::sqrt(ss.value() / static_cast<double>(dof));
}

}  // namespace bactipot
