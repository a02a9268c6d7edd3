#pragma once

// Monte Carlo validation of the estimators, design comparison tables and the
// end-to-end fitting pipeline for a Ct dataset.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bactipot/branching.hpp"
#include "bactipot/errors.hpp"
#include "bactipot/estimators.hpp"
#include "bactipot/measurement.hpp"
#include "bactipot/rng.hpp"
#include "bactipot/stats.hpp"

namespace bactipot {

struct McStudyConfig {
  GrowthParams params{10.0, 1.0};
  std::vector<double> grid;
  MeasurementConfig measurement;
  int n_measurements = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_measurements < 2) throw invalid_parameter("n_measurements must be at least 2");
    detail::require_grid(grid);
    if (grid.size() < 2) throw invalid_parameter("grid needs at least two concentrations");
    measurement.validate();
  }
};

/// Empirical moments are over successful fits only. Variances and the
/// covariance are of the sqrt(N)-scaled errors, with an n-1 denominator.
struct McStudyReport {
  double mean_alpha = 0.0;
  double mean_beta = 0.0;
  double mean_theta = 0.0;
  double emp_var_alpha = 0.0;
  double emp_cov_alphabeta = 0.0;
  double emp_var_beta = 0.0;
  double emp_var_theta = 0.0;
  std::optional<AsymptoticCovariance> theoretical;
  int successes = 0;
  int failures = 0;
};

namespace detail {

struct McSample {
  bool ok = false;
  double alpha = 0.0;
  double beta = 0.0;
  double theta = 0.0;
};

inline McSample run_one_measurement(const McStudyConfig& cfg, std::uint64_t index) {
  auto rng = derive_stream(cfg.seed, index);
  const auto& mc = cfg.measurement;
  McSample s;
  try {
    const CtDataset data = simulate_experiment(cfg.params, cfg.grid, mc, rng);
    std::vector<MeanEstimate> estimates;
    estimates.reserve(cfg.grid.size());
    for (double c : cfg.grid) {
      estimates.push_back(estimate_m(c, data.cts_at(c), mc.a, mc.x0, mc.n_generations));
    }
    FitSelection all;
    all.concentrations = cfg.grid;
    const FitResult fit = fit_alpha_beta(estimates, all);
    s = {true, fit.alpha_hat, fit.beta_hat, fit.mic_hat};
  } catch (const insufficient_data&) {
  } catch (const fit_failure&) {
  }
  return s;
}

/// Runs body(i) for i in [0, count) on `threads` workers.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
}

}  // namespace detail

/// Repeats the whole experiment n_measurements times, fitting (alpha, beta)
/// each time with a and n known. Repetition i uses derive_stream(seed, i), so
/// the report does not depend on the thread count.
inline McStudyReport run_mc_study(const McStudyConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  std::vector<detail::McSample> samples(static_cast<std::size_t>(cfg.n_measurements));
  detail::parallel_for(samples.size(), threads,
                       [&](std::size_t i) { samples[i] = detail::run_one_measurement(cfg, i); });

  const double root_n = std::sqrt(static_cast<double>(cfg.measurement.replicates));
  const double alpha = cfg.params.alpha();
  const double beta = cfg.params.beta();
  const double theta = cfg.params.mic();
  std::vector<double> ea, eb, et;
  compensated_sum sa, sb, st;
  McStudyReport rep;
  for (const auto& s : samples) {
    if (!s.ok) {
      ++rep.failures;
      continue;
    }
    ++rep.successes;
    sa.add(s.alpha);
    sb.add(s.beta);
    st.add(s.theta);
    ea.push_back(root_n * (s.alpha - alpha));
    eb.push_back(root_n * (s.beta - beta));
    et.push_back(root_n * (s.theta - theta));
  }
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (rep.successes > 0) {
    rep.mean_alpha = sa.value() / rep.successes;
    rep.mean_beta = sb.value() / rep.successes;
    rep.mean_theta = st.value() / rep.successes;
  } else {
    rep.mean_alpha = rep.mean_beta = rep.mean_theta = nan;
  }
  if (rep.successes >= 2) {
    rep.emp_var_alpha = sample_variance(ea);
    rep.emp_cov_alphabeta = sample_covariance(ea, eb);
    rep.emp_var_beta = sample_variance(eb);
    rep.emp_var_theta = sample_variance(et);
  } else {
    rep.emp_var_alpha = rep.emp_cov_alphabeta = rep.emp_var_beta = rep.emp_var_theta = nan;
  }
  try {
    rep.theoretical = asymptotic_covariance(cfg.grid, cfg.params, cfg.measurement.n_generations,
                                            cfg.measurement.sigma_eps);
  } catch (const singular_design&) {
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct DesignRow {
  std::vector<double> grid;
  std::optional<AsymptoticCovariance> covariance;
  std::string error;  // set when covariance is empty
};

struct DesignTable {
  std::vector<DesignRow> rows;
  std::optional<std::size_t> best;  // row with the smallest sigma2_theta
};

inline DesignTable evaluate_designs(std::span<const std::vector<double>> designs,
                                    const GrowthParams& params, int n, double sigma_eps) {
  DesignTable table;
  for (const auto& grid : designs) {
    DesignRow row{grid, std::nullopt, {}};
    try {
      row.covariance = asymptotic_covariance(grid, params, n, sigma_eps);
    } catch (const error& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cov = table.rows[i].covariance;
    if (!cov) continue;
    if (!table.best || cov->sigma2_theta < table.rows[*table.best].covariance->sigma2_theta) {
      table.best = i;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

struct PipelineConfig {
  double high_c_threshold = 0.0;  // lanes with c >= this estimate a and sigma_eps
  double low_c_choice = 0.0;      // the freely growing lane used for n
  std::optional<std::vector<double>> fit_concentrations;  // empty: automatic window
  count_t x0 = 10000;
};

struct CtResidual {
  double concentration;
  int replicate;
  double observed;
  double predicted;
  double residual;
};

struct PipelineResult {
  FitResult fit;
  double a_hat = 0.0;
  std::optional<double> sigma_eps_hat;
  double n_hat = 0.0;
  int n_used = 0;
  std::vector<MeanEstimate> estimates;
  std::vector<CtResidual> residuals;
};

namespace detail {

inline std::optional<double> find_in_grid(std::span<const double> grid, double c) {
  for (double g : grid) {
    if (g == c || std::abs(g - c) <= 1e-9 * std::abs(c)) return g;
  }
  return std::nullopt;
}

}  // namespace detail

/// a from the high-concentration lanes, n from the low lane, m_hat per
/// concentration, then the least-squares fit on the selected subset.
inline PipelineResult fit_dataset(const CtDataset& data, const PipelineConfig& cfg) {
  if (cfg.x0 < 1) throw invalid_parameter("x0 must be at least 1");
  const auto grid = data.concentrations();
  if (grid.empty()) throw insufficient_data("dataset is empty");

  PipelineResult out;
  std::vector<double> high_cts;
  std::vector<std::vector<double>> high_groups;
  for (double c : grid) {
    if (c >= cfg.high_c_threshold) {
      auto cts = data.cts_at(c);
      high_cts.insert(high_cts.end(), cts.begin(), cts.end());
      high_groups.push_back(std::move(cts));
    }
  }
  if (high_cts.empty()) {
    throw insufficient_data("no lanes at or above the high-concentration threshold " +
                            format_concentration(cfg.high_c_threshold));
  }
  out.a_hat = estimate_a(high_cts, cfg.x0);
  try {
    out.sigma_eps_hat = estimate_sigma_eps(high_groups);
  } catch (const insufficient_data&) {
  }

  const auto low = detail::find_in_grid(grid, cfg.low_c_choice);
  if (!low) {
    throw insufficient_data("low concentration " + format_concentration(cfg.low_c_choice) +
                            " is not in the dataset");
  }
  out.n_hat = estimate_n(data.cts_at(*low), out.a_hat, cfg.x0);
  out.n_used = round_generations(out.n_hat);
  if (out.n_used < 1) {
    throw insufficient_data("estimated generation count " + format_real(out.n_hat) +
                            " rounds below 1; is the low lane really growing freely?");
  }

  for (double c : grid) {
    out.estimates.push_back(estimate_m(c, data.cts_at(c), out.a_hat, cfg.x0, out.n_used));
  }

  FitSelection sel;
  if (cfg.fit_concentrations) {
    std::vector<double> subset;
    for (double c : *cfg.fit_concentrations) {
      const auto g = detail::find_in_grid(grid, c);
      if (!g) {
        throw insufficient_data("fit concentration " + format_concentration(c) +
                                " is not in the dataset");
      }
      subset.push_back(*g);
    }
    sel.concentrations = std::move(subset);
  }
  out.fit = fit_alpha_beta(out.estimates, sel);

  const GrowthParams fitted(out.fit.alpha_hat, out.fit.beta_hat);
  const double log2_x0 = std::log2(static_cast<double>(cfg.x0));
  for (const auto& o : data.observations()) {
    const double m = mean_from_concentration(fitted, o.concentration);
    const double predicted = out.a_hat - log2_x0 - std::log2(mean_total_p1_zero(m, out.n_used));
    out.residuals.push_back({o.concentration, o.replicate, o.ct, predicted, o.ct - predicted});
  }
  return out;
}

// ---------------------------------------------------------------------------

struct CurvePoint {
  double concentration;
  double m;
};

/// `count` log-spaced points from lo to hi inclusive.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t count = 200) {
  if (!(lo > 0.0) || !(hi >= lo)) throw invalid_parameter("curve range must satisfy 0 < lo <= hi");
  if (count < 2 || lo == hi) return {lo};
  std::vector<double> out(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

inline std::vector<CurvePoint> emit_curve(const GrowthParams& params, std::span<const double> grid) {
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (double c : grid) out.push_back({c, mean_from_concentration(params, c)});
  return out;
}

inline std::vector<CurvePoint> emit_curve(const FitResult& fit, std::span<const double> grid) {
  return emit_curve(GrowthParams(fit.alpha_hat, fit.beta_hat), grid);
}

}  // namespace bactipot
