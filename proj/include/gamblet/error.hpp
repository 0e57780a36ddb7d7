#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gamblet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (dimension mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent tree / nesting / wavelet structure.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Matrix is rank deficient where full rank is required.
class RankError : public Error {
 public:
  using Error::Error;
};

/// A size cap for dense computations was exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization met a non-positive pivot.
class NotSpdError : public Error {
 public:
  NotSpdError(std::ptrdiff_t pivot, double value)
      : Error("matrix is not SPD: pivot " + std::to_string(pivot) + " = " + std::to_string(value)),
        pivot_(pivot) {}
  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

/// Iterative method produced non-finite values or a non-positive curvature.
class BreakdownError : public Error {
 public:
  BreakdownError(std::ptrdiff_t iteration, const std::string& what)
      : Error("breakdown at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  std::ptrdiff_t iteration() const noexcept { return iteration_; }

 private:
  std::ptrdiff_t iteration_;
};

/// An inner solve failed to reach its tolerance inside a hierarchy computation.
class SolveError : public Error {
 public:
  SolveError(int level, double residual, const std::string& what)
      : Error("level " + std::to_string(level) + ": " + what + " (residual " +
              std::to_string(residual) + ")"),
        level_(level),
        residual_(residual) {}
  int level() const noexcept { return level_; }
  double residual() const noexcept { return residual_; }

 private:
  int level_;
  double residual_;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace gamblet
