#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "bactipot/estimators.hpp"
#include "bactipot/harness.hpp"
#include "oracles.hpp"

using namespace bactipot;
using Catch::Approx;

namespace {

std::vector<double> pow2(std::initializer_list<int> exps) {
  std::vector<double> out;
  for (int e : exps) out.push_back(std::ldexp(1.0, e));
  return out;
}

// Mean estimates carrying the true m(c) exactly.
std::vector<MeanEstimate> exact_estimates(const GrowthParams& p, const std::vector<double>& grid) {
  std::vector<MeanEstimate> out;
  for (double c : grid) out.push_back({c, 0.0, mean_from_concentration(p, c), false});
  return out;
}

const double log2_x0 = std::log2(1e4);

}  // namespace

TEST_CASE("estimate_log_mu", "[estimators]") {
  const std::vector<double> dead{0.0 - log2_x0};
  CHECK(estimate_log_mu(dead, 0.0, 10000) == 0.0);
  const std::vector<double> grow{7.0 - log2_x0 - 10.0};
  CHECK(estimate_log_mu(grow, 7.0, 10000) == Approx(10.0).epsilon(1e-14));
  CHECK_THROWS_AS(estimate_log_mu(std::vector<double>{}, 0.0, 10000), invalid_parameter);

  SECTION("synthetic lane converges at the sigma_eps mu log2 / sqrt(N) rate") {
    const GrowthParams p(10.0, 1.0);
    MeasurementConfig cfg;
    cfg.replicates = 100;
    const double c = std::ldexp(1.0, -4);
    auto rng = make_stream(404);
    const auto data = simulate_experiment(p, std::vector<double>{c}, cfg, rng);
    const double mu_hat = std::exp2(estimate_log_mu(data.cts_at(c), cfg.a, cfg.x0));
    const double mu = mean_total_p1_zero(mean_from_concentration(p, c), 10);
    CHECK(std::abs(mu_hat - mu) <= 3 * 0.2 * std::numbers::ln2 * mu / std::sqrt(100.0));
  }
}

TEST_CASE("psi_inverse", "[estimators]") {
  CHECK(psi_inverse(1.0, 10) == 0.0);
  CHECK(psi_inverse(1024.0, 10) == 2.0);
  CHECK(psi_inverse(6.0, 10) == Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(psi_inverse(0.999, 10), domain_error);
  CHECK_THROWS_AS(psi_inverse(1025.0, 10), domain_error);

  SECTION("round trip over a dense grid") {
    for (int n = 1; n <= 20; ++n) {
      for (int i = 0; i <= 400; ++i) {
        const double m = 0.005 * i;
        CHECK(std::abs(psi_inverse(mean_total_p1_zero(m, n), n) - m) < 1e-9);
      }
    }
  }
}

TEST_CASE("estimate_m", "[estimators]") {
  auto dead = estimate_m(1.0, std::vector<double>{3.0 - log2_x0, 3.0 - log2_x0}, 3.0, 10000, 10);
  CHECK(dead.m_hat == 0.0);
  CHECK(dead.mu_hat == 1.0);
  CHECK_FALSE(dead.clamped);

  auto grow = estimate_m(0.01, std::vector<double>{-log2_x0 - 10.0}, 0.0, 10000, 10);
  CHECK(grow.mu_hat == Approx(1024.0).epsilon(1e-14));
  CHECK(grow.m_hat == Approx(2.0).margin(1e-12));

  // mu_hat = 0.97: noise pushed the lane below the all-dead floor
  const double ct = -log2_x0 - std::log2(0.97);
  auto low = estimate_m(0.5, std::vector<double>{ct}, 0.0, 10000, 10);
  CHECK(low.clamped);
  CHECK(low.mu_hat == 1.0);
  CHECK(low.m_hat == 0.0);

  auto high = estimate_m(0.5, std::vector<double>{-log2_x0 - 10.5}, 0.0, 10000, 10);
  CHECK(high.clamped);
  CHECK(high.m_hat == 2.0);
}

TEST_CASE("fit_alpha_beta", "[estimators]") {
  const GrowthParams truth(10.0, 1.0);

  SECTION("noiseless responses are interpolated exactly") {
    for (const auto& grid : {pow2({-6, -4, -2}), pow2({-9, -8, -7, -6, -5, -4, -3, -2, -1, 0}), pow2({-5, -1})}) {
      const auto fit = fit_alpha_beta(exact_estimates(truth, grid));
      CHECK(fit.alpha_hat == Approx(10.0).epsilon(1e-12));
      CHECK(fit.beta_hat == Approx(1.0).epsilon(1e-12));
      CHECK(fit.mic_hat == Approx(0.1).epsilon(1e-12));
      CHECK(fit.mic_hat == std::pow(fit.alpha_hat, -1.0 / fit.beta_hat));
    }
  }
  SECTION("K = 2 always passes through both points") {
    std::vector<MeanEstimate> est{{0.03, 0, 1.6, false}, {0.4, 0, 0.3, false}};
    const auto fit = fit_alpha_beta(est);
    const GrowthParams fitted(fit.alpha_hat, fit.beta_hat);
    CHECK(mean_from_concentration(fitted, 0.03) == Approx(1.6).epsilon(1e-12));
    CHECK(mean_from_concentration(fitted, 0.4) == Approx(0.3).epsilon(1e-12));
  }
  SECTION("matches an independent OLS") {
    std::vector<MeanEstimate> est{{0.01, 0, 1.8, false}, {0.05, 0, 1.2, false}, {0.2, 0, 0.9, false}, {0.7, 0, 0.2, false}};
    std::vector<double> x, y;
    for (const auto& e : est) {
      x.push_back(std::log(e.concentration));
      y.push_back(std::log(2.0 / e.m_hat - 1.0));
    }
    const auto [icpt, slope] = oracle::ols(x, y);
    const auto fit = fit_alpha_beta(est);
    CHECK(fit.beta_hat == Approx(slope).epsilon(1e-12));
    CHECK(fit.alpha_hat == Approx(std::exp(icpt)).epsilon(1e-12));
  }
  SECTION("filtering and exclusion reasons") {
    std::vector<MeanEstimate> est = exact_estimates(truth, pow2({-9, -6, -4, -2, 3}));
    est.push_back({64.0, 1.0, 0.0, true});
    const auto fit = fit_alpha_beta(est);
    // m(2^-9) = 1.961 and m(8) = 0.0247 fall outside [0.05, 1.95]
    CHECK(fit.used_concentrations == pow2({-6, -4, -2}));
    REQUIRE(fit.excluded.size() == 3);
    CHECK(fit.excluded[2].concentration == 64.0);
    CHECK(fit.excluded[2].reason.find("clamped") != std::string::npos);

    FitSelection pick;
    pick.concentrations = pow2({-9, -4, 6});
    const auto manual = fit_alpha_beta(est, pick);
    CHECK(manual.used_concentrations == pow2({-9, -4}));
    CHECK(manual.alpha_hat == Approx(10.0).epsilon(1e-12));
  }
  SECTION("insufficient data names the excluded points") {
    std::vector<MeanEstimate> est{{0.1, 1.0, 0.0, true}, {0.2, 1024.0, 2.0, true}, {0.3, 5.0, 1.0, false}};
    try {
      (void)fit_alpha_beta(est);
      FAIL("expected insufficient_data");
    } catch (const insufficient_data& e) {
      CHECK(std::string(e.what()).find("0.1") != std::string::npos);
    }
    FitSelection pick;
    pick.concentrations = std::vector<double>{0.5};
    CHECK_THROWS_AS(fit_alpha_beta(est, pick), invalid_parameter);
  }
  SECTION("negative slope is a fit failure") {
    std::vector<MeanEstimate> est{{0.1, 0, 0.5, false}, {0.2, 0, 1.5, false}};
    CHECK_THROWS_AS(fit_alpha_beta(est), fit_failure);
  }
  SECTION("grid scaling: beta unchanged, MIC scales by s") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> m(0.1, 1.9), s(0.01, 100.0);
    for (int t = 0; t < 200; ++t) {
      const auto grid = pow2({-7, -5, -4, -2});
      std::vector<MeanEstimate> a, b;
      double prev_m = 2.0;
      const double scale = s(gen);
      for (double c : grid) {
        // decreasing m so beta_hat > 0
        prev_m = std::min(prev_m - 0.01, m(gen));
        if (prev_m <= 0.05) prev_m = 0.05 + 0.001 * a.size();
        a.push_back({c, 0, prev_m, false});
        b.push_back({c * scale, 0, prev_m, false});
      }
      FitResult fa, fb;
      try {
        fa = fit_alpha_beta(a);
        fb = fit_alpha_beta(b);
      } catch (const fit_failure&) {
        continue;
      }
      CHECK(fb.beta_hat == Approx(fa.beta_hat).epsilon(1e-10));
      CHECK(fb.mic_hat == Approx(fa.mic_hat * scale).epsilon(1e-10));
    }
  }
}

TEST_CASE("k_factor", "[estimators]") {
  const GrowthParams p(10.0, 1.0);
  CHECK(k_factor(0.05, p, 10, 0.0) == 0.0);
  CHECK(k_factor(0.05, p, 10, 0.2) < 0.0);
  CHECK_THROWS_AS(k_factor(0.0, p, 10, 0.2), singular_design);
  CHECK_THROWS_AS(k_factor(1e308, p, 10, 0.2), singular_design);

  SECTION("equals the delta-method slope of f = log(2/m - 1) at mu_n") {
    // k = sigma mu log2 * d f / d mu
    const double c = 0.0625;
    const double m = mean_from_concentration(p, c);
    const double mu = mean_total_p1_zero(m, 10);
    auto f_of_mu = [](double x) { return std::log(2.0 / psi_inverse(x, 10) - 1.0); };
    const double dfdmu = oracle::central_difference(f_of_mu, mu, 1e-5 * mu);
    CHECK(k_factor(c, p, 10, 0.2) == Approx(0.2 * mu * std::numbers::ln2 * dfdmu).epsilon(1e-5));
  }
}

TEST_CASE("asymptotic_covariance", "[estimators]") {
  SECTION("design c2 at (10, 1)") {
    const auto cov = asymptotic_covariance(pow2({-2, -1, 0}), GrowthParams(10, 1), 10, 0.2);
    CHECK(cov.sigma2_alpha == Approx(112).epsilon(0.005));
    CHECK(cov.sigma_alphabeta == Approx(9.41).epsilon(0.005));
    CHECK(cov.sigma2_beta == Approx(0.833).epsilon(0.005));
    CHECK(cov.sigma2_theta == Approx(0.012).epsilon(0.005));
    CHECK(cov.k_factors.size() == 3);
  }
  SECTION("design c6 at (100, 2)") {
    const auto cov = asymptotic_covariance(pow2({-5, -4, -3}), GrowthParams(100, 2), 10, 0.2);
    CHECK(cov.sigma2_alpha == Approx(1431).epsilon(0.005));
    CHECK(cov.sigma_alphabeta == Approx(5.49).epsilon(0.005));
    CHECK(cov.sigma2_beta == Approx(0.0216).epsilon(0.005));
    CHECK(cov.sigma2_theta == Approx(0.0000126).epsilon(0.005));
  }
  SECTION("no noise, no variance") {
    const auto cov = asymptotic_covariance(pow2({-6, -4, -2}), GrowthParams(10, 1), 10, 0.0);
    CHECK(cov.sigma2_alpha == 0.0);
    CHECK(cov.sigma_alphabeta == 0.0);
    CHECK(cov.sigma2_beta == 0.0);
    CHECK(cov.sigma2_theta == 0.0);
  }
  SECTION("variances scale with sigma_eps^2") {
    const auto a = asymptotic_covariance(pow2({-6, -4, -2}), GrowthParams(10, 1), 10, 0.2);
    const auto b = asymptotic_covariance(pow2({-6, -4, -2}), GrowthParams(10, 1), 10, 0.4);
    CHECK(b.sigma2_alpha == Approx(4 * a.sigma2_alpha).epsilon(1e-13));
    CHECK(b.sigma2_theta == Approx(4 * a.sigma2_theta).epsilon(1e-13));
  }
  SECTION("alpha = 1 has no singularity") {
    const auto cov = asymptotic_covariance(pow2({-2, 0, 2}), GrowthParams(1.0, 1.5), 10, 0.2);
    CHECK(std::isfinite(cov.sigma2_theta));
    CHECK(cov.sigma2_theta > 0.0);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(asymptotic_covariance(pow2({-2}), GrowthParams(10, 1), 10, 0.2), insufficient_data);
    CHECK_THROWS_AS(asymptotic_covariance(std::vector<double>{0.5, 0.5}, GrowthParams(10, 1), 10, 0.2),
                    invalid_parameter);
    CHECK_THROWS_AS(asymptotic_covariance(std::vector<double>{0.5, 1e308}, GrowthParams(10, 1), 10, 0.2),
                    singular_design);
  }
  SECTION("delta-method identity and Cauchy-Schwarz on random designs") {
    std::mt19937_64 gen(2718);
    std::uniform_real_distribution<double> la(std::log(0.5), std::log(500.0)), b(0.4, 3.0), u(0.0, 1.0);
    std::uniform_int_distribution<int> kk(2, 8), nn(3, 15);
    for (int t = 0; t < 300; ++t) {
      const GrowthParams p(std::exp(la(gen)), b(gen));
      const int k = kk(gen);
      std::vector<double> grid;
      // spread the design around the MIC in log space
      double lc = std::log(p.mic()) - 2.0 + 0.5 * u(gen);
      for (int i = 0; i < k; ++i) {
        grid.push_back(std::exp(lc));
        lc += 0.1 + 0.8 * u(gen);
      }
      const auto cov = asymptotic_covariance(grid, p, nn(gen), 0.2);
      const double th = p.mic();
      const double ga = -th / (p.alpha() * p.beta());
      const double gb = th * std::log(p.alpha()) / (p.beta() * p.beta());
      const double quad = ga * ga * cov.sigma2_alpha + 2 * ga * gb * cov.sigma_alphabeta + gb * gb * cov.sigma2_beta;
      CHECK(cov.sigma2_theta == Approx(quad).epsilon(1e-9));
      CHECK(cov.sigma_alphabeta * cov.sigma_alphabeta <= cov.sigma2_alpha * cov.sigma2_beta * (1 + 1e-12));
    }
  }
}

TEST_CASE("estimate_a", "[estimators]") {
  CHECK(estimate_a(std::vector<double>(6, -log2_x0), 10000) == 0.0);
  CHECK(estimate_a(std::vector<double>(3, 5.0 - log2_x0), 10000) == Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(estimate_a(std::vector<double>{}, 10000), insufficient_data);

  SECTION("coverage of |a_hat - a| < 3 sigma / sqrt(N)") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> eps(0.0, 0.2);
    int inside = 0;
    for (int t = 0; t < 10000; ++t) {
      std::vector<double> cts;
      for (int i = 0; i < 6; ++i) cts.push_back(2.0 - log2_x0 + eps(gen));
      inside += std::abs(estimate_a(cts, 10000) - 2.0) < 3 * 0.2 / std::sqrt(6.0);
    }
    CHECK(inside >= 9900);
  }
}

TEST_CASE("estimate_n", "[estimators]") {
  CHECK(estimate_n(std::vector<double>(3, 4.0 - log2_x0 - 10.0), 4.0, 10000) == Approx(10.0).epsilon(1e-14));
  CHECK(estimate_n(std::vector<double>(3, 4.0 - log2_x0), 4.0, 10000) == 0.0);
  CHECK_THROWS_AS(estimate_n(std::vector<double>{}, 0.0, 10000), insufficient_data);
  CHECK(round_generations(9.5) == 10);
  CHECK(round_generations(9.49) == 9);
  CHECK(round_generations(10.4) == 10);

  SECTION("variance is about 2 sigma^2 / N") {
    std::mt19937_64 gen(23);
    std::normal_distribution<double> eps(0.0, 0.2);
    std::vector<double> ns;
    const int N = 3;
    for (int t = 0; t < 10000; ++t) {
      std::vector<double> high, low;
      for (int i = 0; i < N; ++i) {
        high.push_back(-log2_x0 + eps(gen));
        low.push_back(-log2_x0 - 10.0 + eps(gen));
      }
      ns.push_back(estimate_n(low, estimate_a(high, 10000), 10000));
    }
    CHECK(sample_variance(ns) == Approx(2 * 0.04 / N).epsilon(0.10));
  }
}

TEST_CASE("estimate_sigma_eps", "[estimators]") {
  CHECK(estimate_sigma_eps(std::vector<std::vector<double>>{{1, 1, 1}, {4, 4}}) == 0.0);
  CHECK(estimate_sigma_eps(std::vector<std::vector<double>>{{0, 2}, {1, 3}}) == Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(estimate_sigma_eps(std::vector<std::vector<double>>{{0, 2}, {7}}) == Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(estimate_sigma_eps(std::vector<std::vector<double>>{{1}, {2}}), insufficient_data);

  SECTION("coverage of [0.15, 0.25] with 12 groups x 3 replicates") {
    // 24 s^2 / sigma^2 ~ chi2(24): P(13.5 <= chi2 <= 37.5) = 0.91817 (scipy)
    const double exact = 0.9181677083162694;
    std::mt19937_64 gen(29);
    std::normal_distribution<double> eps(0.0, 0.2);
    int inside = 0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
      std::vector<std::vector<double>> groups(12);
      for (int g = 0; g < 12; ++g) {
        for (int i = 0; i < 3; ++i) groups[g].push_back(g + eps(gen));
      }
      const double s = estimate_sigma_eps(groups);
      inside += s >= 0.15 && s <= 0.25;
    }
    const double rate = static_cast<double>(inside) / trials;
    CHECK(std::abs(rate - exact) <= 3 * std::sqrt(exact * (1 - exact) / trials));
  }
}
