#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bactipot {

// Base for every error the library throws; callers that only care about
// "data problem vs. bug" can catch this one type.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class invalid_parameter : public error {
 public:
  using error::error;
};

// Argument outside the domain of a function (e.g. psi inverse of mu > 2^n).
class domain_error : public error {
 public:
  using error::error;
};

class count_overflow : public error {
 public:
  using error::error;
};

class insufficient_data : public error {
 public:
  using error::error;
};

// A design point with m(c) in {0, 2}; the estimator variance is unbounded there.
class singular_design : public error {
 public:
  using error::error;
};

// The regression ran but produced an unusable estimate (e.g. beta_hat <= 0).
class fit_failure : public error {
 public:
  using error::error;
};

class parse_error : public error {
 public:
  enum class kind { bad_header, missing_column, malformed_number, invalid_value, duplicate_key };

  parse_error(kind k, std::size_t line, const std::string& what)
      : error("line " + std::to_string(line) + ": " + what), kind_(k), line_(line) {}

  kind which() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  kind kind_;
  std::size_t line_;
};

}  // namespace bactipot
