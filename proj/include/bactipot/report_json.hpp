#pragma once

// JSON forms of the result types. Field names match the struct members and
// are part of the public interface; non-finite numbers become null.

#include <cmath>

#include <nlohmann/json.hpp>

#include "bactipot/estimators.hpp"
#include "bactipot/harness.hpp"
#include "bactipot/measurement.hpp"

namespace bactipot {

namespace detail {
inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace detail

inline nlohmann::json to_json(const AsymptoticCovariance& c) {
  return {{"sigma2_alpha", detail::number(c.sigma2_alpha)},
          {"sigma_alphabeta", detail::number(c.sigma_alphabeta)},
          {"sigma2_beta", detail::number(c.sigma2_beta)},
          {"sigma2_theta", detail::number(c.sigma2_theta)},
          {"k_factors", c.k_factors}};
}

inline nlohmann::json to_json(const FitResult& r) {
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& e : r.excluded) excluded.push_back({{"concentration", e.concentration}, {"reason", e.reason}});
  return {{"alpha_hat", detail::number(r.alpha_hat)},
          {"beta_hat", detail::number(r.beta_hat)},
          {"mic_hat", detail::number(r.mic_hat)},
          {"used_concentrations", r.used_concentrations},
          {"excluded", excluded}};
}

inline nlohmann::json to_json(const MeanEstimate& e) {
  return {{"concentration", e.concentration},
          {"mu_hat", detail::number(e.mu_hat)},
          {"m_hat", detail::number(e.m_hat)},
          {"clamped", e.clamped}};
}

inline nlohmann::json to_json(const MeasurementConfig& m) {
  return {{"a", m.a},
          {"sigma_eps", m.sigma_eps},
          {"x0", m.x0},
          {"n_generations", m.n_generations},
          {"replicates", m.replicates}};
}

inline nlohmann::json to_json(const McStudyReport& r) {
  return {{"mean_alpha", detail::number(r.mean_alpha)},
          {"mean_beta", detail::number(r.mean_beta)},
          {"mean_theta", detail::number(r.mean_theta)},
          {"emp_var_alpha", detail::number(r.emp_var_alpha)},
          {"emp_cov_alphabeta", detail::number(r.emp_cov_alphabeta)},
          {"emp_var_beta", detail::number(r.emp_var_beta)},
          {"emp_var_theta", detail::number(r.emp_var_theta)},
          {"theoretical", r.theoretical ? to_json(*r.theoretical) : nlohmann::json(nullptr)},
          {"successes", r.successes},
          {"failures", r.failures}};
}

inline nlohmann::json to_json(const McStudyConfig& c) {
  return {{"alpha", c.params.alpha()},
          {"beta", c.params.beta()},
          {"grid", c.grid},
          {"measurement", to_json(c.measurement)},
          {"n_measurements", c.n_measurements},
          {"seed", c.seed}};
}

inline nlohmann::json to_json(const PipelineResult& p) {
  nlohmann::json estimates = nlohmann::json::array();
  for (const auto& e : p.estimates) estimates.push_back(to_json(e));
  nlohmann::json residuals = nlohmann::json::array();
  for (const auto& r : p.residuals) {
    residuals.push_back({{"concentration", r.concentration},
                         {"replicate", r.replicate},
                         {"observed", r.observed},
                         {"predicted", detail::number(r.predicted)},
                         {"residual", detail::number(r.residual)}});
  }
  nlohmann::json j = to_json(p.fit);
  j["a_hat"] = detail::number(p.a_hat);
  j["sigma_eps_hat"] = p.sigma_eps_hat ? detail::number(*p.sigma_eps_hat) : nlohmann::json(nullptr);
  j["sigma_eps_method"] = "pooled within-group standard deviation of the high-concentration lanes";
  j["n_hat"] = detail::number(p.n_hat);
  j["n_used"] = p.n_used;
  j["estimates"] = estimates;
  j["residuals"] = residuals;
  return j;
}

}  // namespace bactipot
