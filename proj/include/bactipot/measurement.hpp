#pragma once

// qPCR observation model C = a - log2 Z_n + eps, eps ~ N(0, sigma_eps^2),
// plus the CSV format used for measured and synthetic Ct data.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bactipot/branching.hpp"
#include "bactipot/errors.hpp"
#include "bactipot/rng.hpp"

namespace bactipot {

struct MeasurementConfig {
  double a = 0.0;            // qPCR calibration constant (Ct units)
  double sigma_eps = 0.2;    // measurement noise s.d. (Ct units)
  count_t x0 = 10000;        // initial bacteria
  int n_generations = 10;
  int replicates = 3;        // N per concentration

  void validate() const {
    if (!(sigma_eps >= 0.0) || !std::isfinite(sigma_eps)) {
      throw invalid_parameter("sigma_eps must be non-negative");
    }
    if (!std::isfinite(a)) throw invalid_parameter("a must be finite");
    if (x0 < 1) throw invalid_parameter("x0 must be at least 1");
    if (n_generations < 1) throw invalid_parameter("n_generations must be at least 1");
    if (replicates < 1) throw invalid_parameter("replicates must be at least 1");
  }
};

struct CtObservation {
  double concentration;
  int replicate;
  double ct;

  friend bool operator==(const CtObservation&, const CtObservation&) = default;
};

class CtDataset {
 public:
  CtDataset() = default;

  explicit CtDataset(std::vector<CtObservation> observations,
                     std::optional<MeasurementConfig> config = std::nullopt)
      : config_(config) {
    for (auto& obs : observations) add(obs);
  }

  /// Appends an observation; (concentration, replicate) must be new.
  void add(const CtObservation& obs) {
    if (!(obs.concentration > 0.0) || !std::isfinite(obs.concentration)) {
      throw invalid_parameter("concentration must be positive and finite");
    }
    if (obs.replicate < 1) throw invalid_parameter("replicate index must be positive");
    if (!std::isfinite(obs.ct)) throw invalid_parameter("ct must be finite");
    if (!keys_.emplace(obs.concentration, obs.replicate).second) {
      throw invalid_parameter("duplicate (concentration, replicate) pair");
    }
    observations_.push_back(obs);
  }

  const std::vector<CtObservation>& observations() const noexcept { return observations_; }
  const std::optional<MeasurementConfig>& config() const noexcept { return config_; }
  bool empty() const noexcept { return observations_.empty(); }
  std::size_t size() const noexcept { return observations_.size(); }

  /// Sorted distinct concentrations.
  std::vector<double> concentrations() const {
    std::set<double> grid;
    for (const auto& o : observations_) grid.insert(o.concentration);
    return {grid.begin(), grid.end()};
  }

  /// Ct values at one concentration, in input order.
  std::vector<double> cts_at(double c) const {
    std::vector<double> out;
    for (const auto& o : observations_) {
      if (o.concentration == c) out.push_back(o.ct);
    }
    return out;
  }

  std::vector<int> replicates_at(double c) const {
    std::vector<int> out;
    for (const auto& o : observations_) {
      if (o.concentration == c) out.push_back(o.replicate);
    }
    return out;
  }

 private:
  std::vector<CtObservation> observations_;
  std::set<std::pair<double, int>> keys_;
  std::optional<MeasurementConfig> config_;
};

/// One Ct value for a population of size z.
inline double synthesize_ct(count_t z, const MeasurementConfig& config, rng_stream& rng) {
  if (z < 1) throw invalid_parameter("population size must be at least 1 to take log2");
  double ct = config.a - std::log2(static_cast<double>(z));
  if (config.sigma_eps > 0.0) ct += std::normal_distribution<double>(0.0, config.sigma_eps)(rng);
  return ct;
}

namespace detail {

inline void require_grid(std::span<const double> grid) {
  if (grid.empty()) throw invalid_parameter("concentration grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) {
      throw invalid_parameter("concentrations must be positive and finite");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw invalid_parameter("concentration grid must be strictly increasing");
    }
  }
}

}  // namespace detail

/// Synthetic experiment: N independent Galton-Watson runs per concentration,
/// each observed through synthesize_ct. Replicates are numbered 1..N.
inline CtDataset simulate_experiment(const GrowthParams& params, std::span<const double> grid,
                                     const MeasurementConfig& config, rng_stream& rng) {
  detail::require_grid(grid);
  config.validate();
  CtDataset data({}, config);
  for (double c : grid) {
    const auto dist = dist_from_mean(mean_from_concentration(params, c));
    for (int i = 1; i <= config.replicates; ++i) {
      const count_t z = simulate_total(config.x0, dist, config.n_generations, rng);
      data.add({c, i, synthesize_ct(z, config, rng)});
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view csv_header = "concentration,replicate,ct";

/// Shortest round-trip decimal without exponent, e.g. 0.015625. Values whose
/// fixed form would exceed 24 characters fall back to the shortest form.
inline std::string format_concentration(double c) {
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof buf, c, std::chars_format::fixed);
  if (res.ptr - buf > 24) res = std::to_chars(buf, buf + sizeof buf, c);
  return {buf, res.ptr};
}

/// Canonical 17-significant-digit form.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline double parse_double(std::string_view s, std::size_t line, const char* column) {
  double v{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw parse_error(parse_error::kind::malformed_number, line,
                      std::string("malformed number in column '") + column + "': '" +
                          std::string(s) + "'");
  }
  return v;
}

inline int parse_replicate(std::string_view s, std::size_t line) {
  int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw parse_error(parse_error::kind::malformed_number, line,
                      "malformed integer in column 'replicate': '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Reads `concentration,replicate,ct` CSV. Blank lines and lines starting
/// with '#' are skipped. Rows keep their input order.
inline CtDataset read_dataset(std::istream& in) {
  CtDataset data;
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      const auto fields = detail::split_fields(line);
      if (fields.size() != 3 || fields[0] != "concentration" || fields[1] != "replicate" ||
          fields[2] != "ct") {
        throw parse_error(parse_error::kind::bad_header, line_no,
                          "expected header '" + std::string(csv_header) + "'");
      }
      have_header = true;
      continue;
    }
    const auto fields = detail::split_fields(line);
    if (fields.size() != 3) {
      throw parse_error(parse_error::kind::missing_column, line_no,
                        "expected 3 columns, found " + std::to_string(fields.size()));
    }
    CtObservation obs{detail::parse_double(fields[0], line_no, "concentration"),
                      detail::parse_replicate(fields[1], line_no),
                      detail::parse_double(fields[2], line_no, "ct")};
    if (!(obs.concentration > 0.0) || !std::isfinite(obs.concentration)) {
      throw parse_error(parse_error::kind::invalid_value, line_no,
                        "concentration must be positive and finite");
    }
    if (obs.replicate < 1) {
      throw parse_error(parse_error::kind::invalid_value, line_no, "replicate must be positive");
    }
    if (!std::isfinite(obs.ct)) {
      throw parse_error(parse_error::kind::invalid_value, line_no, "ct must be finite");
    }
    try {
      data.add(obs);
    } catch (const invalid_parameter&) {
      throw parse_error(parse_error::kind::duplicate_key, line_no,
                        "duplicate (concentration, replicate) = (" + std::string(fields[0]) +
                            ", " + std::string(fields[1]) + ")");
    }
  }
  if (!have_header) throw parse_error(parse_error::kind::bad_header, line_no + 1, "missing header");
  return data;
}

inline void write_dataset(const CtDataset& data, std::ostream& out) {
  out << csv_header << '\n';
  for (const auto& o : data.observations()) {
    out << format_concentration(o.concentration) << ',' << o.replicate << ',' << format_real(o.ct)
        << '\n';
  }
}

}  // namespace bactipot
