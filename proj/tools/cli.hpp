#pragma once

// Command-line front end. run_cli() takes the argument list and streams so the
// test suite can drive it in-process; tools/main.cpp is a thin wrapper.
//
// Exit status: 0 success, 1 data error, 2 usage error.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "bactipot/bactipot.hpp"
#include "bactipot/report_json.hpp"

namespace bactipot::cli {

inline constexpr const char* version = "0.1.0";

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One concentration: a decimal or 2^k.
inline double parse_concentration(std::string token, const std::string& flag) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  token = trim(token);
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (s.empty() || used != s.size()) {
      throw usage_error(flag + ": malformed concentration '" + token + "'");
    }
    return v;
  };
  double v = 0.0;
  if (token.rfind("2^", 0) == 0) {
    v = std::exp2(to_double(token.substr(2)));
  } else {
    v = to_double(token);
  }
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw usage_error(flag + ": concentration '" + token + "' must be positive");
  }
  return v;
}

/// Comma-separated concentrations with 2^k sugar; "2^a..2^b" expands to the
/// two-fold ladder 2^a, 2^(a+1), ..., 2^b. Must be strictly increasing.
inline std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto dots = token.find("..");
    if (dots != std::string::npos) {
      const double lo = parse_concentration(token.substr(0, dots), flag);
      const double hi = parse_concentration(token.substr(dots + 2), flag);
      const double steps = std::log2(hi / lo);
      if (!(steps >= 0.0) || std::abs(steps - std::round(steps)) > 1e-9) {
        throw usage_error(flag + ": range '" + token + "' is not a two-fold ladder");
      }
      for (int i = 0; i <= static_cast<int>(std::round(steps)); ++i) grid.push_back(std::ldexp(lo, i));
    } else {
      grid.push_back(parse_concentration(token, flag));
    }
  }
  if (grid.empty()) throw usage_error(flag + ": empty concentration list");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw usage_error(flag + ": concentrations must be strictly increasing");
  }
  return grid;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string join_grid(const std::vector<double>& grid, char sep) {
  std::string s;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) s += sep;
    s += format_concentration(grid[i]);
  }
  return s;
}

inline std::string sig3(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

struct Common {
  std::uint64_t seed = 0;
  bool no_timestamp = false;
  bool pretty = false;
};

inline int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Branching-process dose-response estimation from qPCR Ct data", "bactipot"};
  app.set_version_flag("--version", version);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Master seed (env BACTIPOT_SEED)")->envname("BACTIPOT_SEED");
  };
  auto add_meta = [&](CLI::App* sub) {
    sub->add_flag("--no-timestamp", common.no_timestamp, "Omit the generation timestamp");
  };

  // simulate
  std::optional<double> sim_p0, sim_p1, sim_p2, sim_m;
  count_t sim_x0 = 1;
  int sim_gens = 10;
  int sim_reps = 1;
  bool sim_trajectory = false;
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate Galton-Watson trajectories (CSV)");
  auto* opt_p0 = simulate_cmd->add_option("--p0", sim_p0, "Death probability");
  auto* opt_p1 = simulate_cmd->add_option("--p1", sim_p1, "Survival probability");
  auto* opt_p2 = simulate_cmd->add_option("--p2", sim_p2, "Division probability");
  auto* opt_m = simulate_cmd->add_option("--m", sim_m, "Offspring mean; uses (1-m/2, 0, m/2)");
  opt_m->excludes(opt_p0)->excludes(opt_p1)->excludes(opt_p2);
  opt_p0->needs(opt_p2);
  opt_p2->needs(opt_p0);
  simulate_cmd->add_option("--x0", sim_x0, "Initial alive cells")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--gens", sim_gens, "Generations")->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--reps", sim_reps, "Independent runs")->check(CLI::PositiveNumber);
  simulate_cmd->add_flag("--trajectory", sim_trajectory, "Emit every generation, not just the last");
  add_seed(simulate_cmd);
  add_meta(simulate_cmd);

  // synth
  double syn_alpha = 10.0, syn_beta = 1.0;
  std::string syn_grid;
  MeasurementConfig syn_cfg;
  std::string syn_output;
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize a Ct dataset (CSV)");
  synth_cmd->add_option("--alpha", syn_alpha)->required();
  synth_cmd->add_option("--beta", syn_beta)->required();
  synth_cmd->add_option("--grid", syn_grid, "Concentrations, e.g. 2^-7..2^4 or 0.25,0.5")->required();
  synth_cmd->add_option("--a", syn_cfg.a, "qPCR constant a");
  synth_cmd->add_option("--sigma-eps", syn_cfg.sigma_eps, "Ct noise s.d.");
  synth_cmd->add_option("--x0", syn_cfg.x0, "Initial cells")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--gens", syn_cfg.n_generations, "Generations")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--reps", syn_cfg.replicates, "Replicates per concentration")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--output", syn_output, "Write CSV here instead of stdout");
  add_seed(synth_cmd);
  add_meta(synth_cmd);

  // fit
  std::string fit_input;
  std::string fit_high, fit_low;
  std::string fit_c = "auto";
  count_t fit_x0 = 10000;
  auto* fit_cmd = app.add_subcommand("fit", "Fit (alpha, beta, MIC) to a Ct CSV (JSON)");
  fit_cmd->add_option("--input", fit_input, "Ct CSV file, '-' for stdin")->required();
  fit_cmd->add_option("--high-c", fit_high, "Lanes with c >= this estimate a and sigma_eps")->required();
  fit_cmd->add_option("--low-c", fit_low, "Freely growing lane used to estimate n")->required();
  fit_cmd->add_option("--fit-c", fit_c, "'auto' or the concentrations to regress on");
  fit_cmd->add_option("--x0", fit_x0, "Initial cells")->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--pretty", common.pretty, "Human-readable summary");
  add_meta(fit_cmd);

  // mc-study
  double mc_alpha = 10.0, mc_beta = 1.0;
  std::string mc_grid;
  MeasurementConfig mc_cfg;
  int mc_measurements = 1000;
  unsigned mc_threads = std::max(1u, std::thread::hardware_concurrency());
  auto* mc_cmd = app.add_subcommand("mc-study", "Monte Carlo validation of the estimators (JSON)");
  mc_cmd->add_option("--alpha", mc_alpha)->required();
  mc_cmd->add_option("--beta", mc_beta)->required();
  mc_cmd->add_option("--grid", mc_grid, "Design concentrations")->required();
  mc_cmd->add_option("--a", mc_cfg.a, "qPCR constant a");
  mc_cmd->add_option("--sigma-eps", mc_cfg.sigma_eps, "Ct noise s.d.");
  mc_cmd->add_option("--x0", mc_cfg.x0, "Initial cells")->check(CLI::PositiveNumber);
  mc_cmd->add_option("--gens", mc_cfg.n_generations, "Generations")->check(CLI::PositiveNumber);
  mc_cmd->add_option("--reps", mc_cfg.replicates, "Replicates N per concentration")
      ->check(CLI::PositiveNumber);
  mc_cmd->add_option("--measurements", mc_measurements, "Monte Carlo repetitions")
      ->check(CLI::Range(2, 100000000));
  mc_cmd->add_option("--threads", mc_threads, "Worker threads")->check(CLI::PositiveNumber);
  mc_cmd->add_flag("--pretty", common.pretty, "Human-readable table");
  add_seed(mc_cmd);
  add_meta(mc_cmd);

  // design-eval
  double de_alpha = 10.0, de_beta = 1.0;
  std::vector<std::string> de_designs;
  int de_gens = 10;
  double de_sigma = 0.2;
  auto* de_cmd = app.add_subcommand("design-eval", "Asymptotic variances per design (CSV)");
  de_cmd->add_option("--alpha", de_alpha)->required();
  de_cmd->add_option("--beta", de_beta)->required();
  de_cmd->add_option("--designs", de_designs, "Designs; repeat the flag or separate with ';'")->required();
  de_cmd->add_option("--gens", de_gens, "Generations")->check(CLI::PositiveNumber);
  de_cmd->add_option("--sigma-eps", de_sigma, "Ct noise s.d.");
  de_cmd->add_flag("--pretty", common.pretty, "Human-readable table, 3 significant figures");

  // curve
  double cu_alpha = 10.0, cu_beta = 1.0;
  std::string cu_range = "2^-9,1";
  std::size_t cu_points = 200;
  auto* curve_cmd = app.add_subcommand("curve", "Tabulate m(c) (CSV)");
  curve_cmd->add_option("--alpha", cu_alpha)->required();
  curve_cmd->add_option("--beta", cu_beta)->required();
  curve_cmd->add_option("--range", cu_range, "lo,hi");
  curve_cmd->add_option("--points", cu_points, "Log-spaced points")->check(CLI::Range(2, 1000000));

  std::vector<const char*> argv;
  argv.push_back("bactipot");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  auto csv_metadata = [&](std::ostream& os, const std::string& command) {
    os << "# bactipot " << command << " seed=" << common.seed << '\n';
    if (!common.no_timestamp) os << "# generated=" << utc_timestamp() << '\n';
  };
  auto json_metadata = [&](const std::string& command, bool stochastic) {
    nlohmann::json meta{{"command", command}, {"version", version}};
    if (stochastic) meta["seed"] = common.seed;
    if (!common.no_timestamp) meta["timestamp"] = utc_timestamp();
    return meta;
  };

  try {
    if (simulate_cmd->parsed()) {
      std::optional<OffspringDistribution> dist;
      if (sim_m) {
        dist = dist_from_mean(*sim_m);
      } else if (sim_p0 && sim_p2) {
        dist = OffspringDistribution(*sim_p0, sim_p1.value_or(1.0 - *sim_p0 - *sim_p2), *sim_p2);
      } else {
        throw usage_error("simulate: give either --m or --p0/--p2 (and optionally --p1)");
      }
      csv_metadata(out, "simulate");
      out << (sim_trajectory ? "replicate,generation,alive,dead,total\n" : "replicate,alive,dead,total\n");
      for (int r = 0; r < sim_reps; ++r) {
        auto rng = derive_stream(common.seed, static_cast<std::uint64_t>(r));
        const auto path = simulate(sim_x0, *dist, sim_gens, rng);
        if (sim_trajectory) {
          for (const auto& s : path) {
            out << r + 1 << ',' << s.generation << ',' << s.alive << ',' << s.dead << ',' << s.total() << '\n';
          }
        } else {
          const auto& s = path.back();
          out << r + 1 << ',' << s.alive << ',' << s.dead << ',' << s.total() << '\n';
        }
      }
      return 0;
    }

    if (synth_cmd->parsed()) {
      const auto grid = parse_grid(syn_grid, "--grid");
      const GrowthParams params(syn_alpha, syn_beta);
      auto rng = make_stream(common.seed);
      const auto data = simulate_experiment(params, grid, syn_cfg, rng);
      auto emit = [&](std::ostream& os) {
        csv_metadata(os, "synth");
        os << "# alpha=" << format_real(syn_alpha) << " beta=" << format_real(syn_beta)
           << " a=" << format_real(syn_cfg.a) << " sigma_eps=" << format_real(syn_cfg.sigma_eps)
           << " x0=" << syn_cfg.x0 << " gens=" << syn_cfg.n_generations << " reps=" << syn_cfg.replicates
           << '\n';
        write_dataset(data, os);
      };
      if (syn_output.empty()) {
        emit(out);
      } else {
        std::ofstream f(syn_output);
        if (!f) throw usage_error("--output: cannot open '" + syn_output + "' for writing");
        emit(f);
      }
      return 0;
    }

    if (fit_cmd->parsed()) {
      PipelineConfig cfg;
      cfg.high_c_threshold = parse_concentration(fit_high, "--high-c");
      cfg.low_c_choice = parse_concentration(fit_low, "--low-c");
      if (fit_c != "auto") cfg.fit_concentrations = parse_grid(fit_c, "--fit-c");
      cfg.x0 = fit_x0;
      CtDataset data;
      if (fit_input == "-") {
        data = read_dataset(in);
      } else {
        std::ifstream f(fit_input);
        if (!f) throw usage_error("--input: cannot open '" + fit_input + "'");
        data = read_dataset(f);
      }
      const auto result = fit_dataset(data, cfg);
      if (common.pretty) {
        out << "alpha_hat  " << sig3(result.fit.alpha_hat) << '\n'
            << "beta_hat   " << sig3(result.fit.beta_hat) << '\n'
            << "mic_hat    " << sig3(result.fit.mic_hat) << '\n'
            << "a_hat      " << sig3(result.a_hat) << '\n'
            << "n_hat      " << sig3(result.n_hat) << " (using " << result.n_used << ")\n"
            << "sigma_eps  " << (result.sigma_eps_hat ? sig3(*result.sigma_eps_hat) : std::string("n/a")) << '\n'
            << "fitted on  " << join_grid(result.fit.used_concentrations, ' ') << '\n';
        return 0;
      }
      nlohmann::json j = to_json(result);
      j["metadata"] = json_metadata("fit", false);
      out << j.dump(2) << '\n';
      return 0;
    }

    if (mc_cmd->parsed()) {
      McStudyConfig cfg{GrowthParams(mc_alpha, mc_beta), parse_grid(mc_grid, "--grid"), mc_cfg,
                        mc_measurements, common.seed};
      const auto report = run_mc_study(cfg, mc_threads);
      if (common.pretty) {
        out << std::left << std::setw(12) << "" << std::setw(12) << "mean" << "\n";
        out << std::setw(12) << "alpha" << sig3(report.mean_alpha) << '\n'
            << std::setw(12) << "beta" << sig3(report.mean_beta) << '\n'
            << std::setw(12) << "theta" << sig3(report.mean_theta) << "\n\n";
        out << std::setw(16) << "" << std::setw(12) << "empirical" << "asymptotic\n";
        auto row = [&](const char* name, double e, std::optional<double> t) {
          out << std::setw(16) << name << std::setw(12) << sig3(e) << (t ? sig3(*t) : "n/a") << '\n';
        };
        const auto& th = report.theoretical;
        row("sigma2_alpha", report.emp_var_alpha, th ? std::optional(th->sigma2_alpha) : std::nullopt);
        row("sigma_alphabeta", report.emp_cov_alphabeta, th ? std::optional(th->sigma_alphabeta) : std::nullopt);
        row("sigma2_beta", report.emp_var_beta, th ? std::optional(th->sigma2_beta) : std::nullopt);
        row("sigma2_theta", report.emp_var_theta, th ? std::optional(th->sigma2_theta) : std::nullopt);
        out << "\nfailures " << report.failures << " of " << cfg.n_measurements << '\n';
        return 0;
      }
      nlohmann::json j = to_json(report);
      j["config"] = to_json(cfg);
      j["metadata"] = json_metadata("mc-study", true);
      out << j.dump(2) << '\n';
      return 0;
    }

    if (de_cmd->parsed()) {
      std::vector<std::vector<double>> designs;
      for (const auto& d : de_designs) {
        std::stringstream ss(d);
        std::string part;
        while (std::getline(ss, part, ';')) {
          if (part.find_first_not_of(" \t") == std::string::npos) continue;
          designs.push_back(parse_grid(part, "--designs"));
        }
      }
      const auto table = evaluate_designs(designs, GrowthParams(de_alpha, de_beta), de_gens, de_sigma);
      if (common.pretty) {
        std::size_t width = 8;
        for (const auto& r : table.rows) width = std::max(width, join_grid(r.grid, ' ').size() + 2);
        const int w = static_cast<int>(width);
        out << std::left << std::setw(w) << "design" << std::setw(12) << "s2_alpha" << std::setw(12)
            << "s_alphabeta" << std::setw(12) << "s2_beta" << std::setw(12) << "s2_theta" << '\n';
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
          const auto& r = table.rows[i];
          out << std::setw(w) << join_grid(r.grid, ' ');
          if (r.covariance) {
            out << std::setw(12) << sig3(r.covariance->sigma2_alpha) << std::setw(12)
                << sig3(r.covariance->sigma_alphabeta) << std::setw(12) << sig3(r.covariance->sigma2_beta)
                << std::setw(12) << sig3(r.covariance->sigma2_theta);
          } else {
            out << "singular: " << r.error;
          }
          if (table.best && *table.best == i) out << " *";
          out << '\n';
        }
        return 0;
      }
      out << "design,K,sigma2_alpha,sigma_alphabeta,sigma2_beta,sigma2_theta,best,error\n";
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        out << join_grid(r.grid, ' ') << ',' << r.grid.size() << ',';
        if (r.covariance) {
          out << format_real(r.covariance->sigma2_alpha) << ',' << format_real(r.covariance->sigma_alphabeta)
              << ',' << format_real(r.covariance->sigma2_beta) << ',' << format_real(r.covariance->sigma2_theta);
        } else {
          out << ",,,";
        }
        out << ',' << (table.best && *table.best == i ? 1 : 0) << ',';
        if (!r.error.empty()) {
          std::string e = r.error;
          for (auto& ch : e) {
            if (ch == ',' || ch == '"') ch = ';';
          }
          out << e;
        }
        out << '\n';
      }
      return 0;
    }

    if (curve_cmd->parsed()) {
      const auto range = parse_grid(cu_range, "--range");
      if (range.size() != 2) throw usage_error("--range: expected exactly two values lo,hi");
      const auto grid = log_spaced(range[0], range[1], cu_points);
      out << "concentration,m\n";
      for (const auto& p : emit_curve(GrowthParams(cu_alpha, cu_beta), grid)) {
        out << format_real(p.concentration) << ',' << format_real(p.m) << '\n';
      }
      return 0;
    }
  } catch (const usage_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const bactipot::error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace bactipot::cli
