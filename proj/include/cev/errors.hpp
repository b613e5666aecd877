#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cev {

/// Malformed text input (mesh files, config files, snapshots).
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Input parsed but violates a structural invariant (dangling index, zero area, ...).
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Numerical invariant broken at run time (negative viscosity, non-finite value).
class InvariantError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double achieved_residual)
      : std::runtime_error(what), residual_(achieved_residual) {}
  double achieved_residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Solution stopped being finite; carries the step index at which it happened.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

private:
  long step_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace cev
