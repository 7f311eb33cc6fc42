#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fmedreg {

/// Broad failure class; the CLI maps it onto an exit code.
enum class ErrorCategory { Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(std::string kind, ErrorCategory category, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)), category_(category) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  std::string kind_;
  ErrorCategory category_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error("DimensionError", ErrorCategory::Data, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what)
      : Error("ArgumentError", ErrorCategory::Data, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error("ShapeError", ErrorCategory::Data, what) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& reason)
      : Error("ParseError", ErrorCategory::Data,
              "line " + std::to_string(line) + ", column " +
                  std::to_string(column) + ": " + reason),
        line_(line),
        column_(column),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string reason_;
};

/// No learning curve received a positive kernel weight.
class EmptyWindowError : public Error {
 public:
  EmptyWindowError(double min_distance, double bandwidth)
      : Error("EmptyWindowError", ErrorCategory::Numeric,
              "no observation inside the kernel window (h=" +
                  std::to_string(bandwidth) + ", nearest distance=" +
                  std::to_string(min_distance) + ")"),
        min_distance_(min_distance) {}

  double min_distance() const noexcept { return min_distance_; }

 private:
  double min_distance_;
};

class SingularPointError : public Error {
 public:
  explicit SingularPointError(std::size_t index)
      : Error("SingularPointError", ErrorCategory::Numeric,
              "evaluation point coincides with observation " +
                  std::to_string(index)),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class SingularCovarianceError : public Error {
 public:
  explicit SingularCovarianceError(const std::string& what)
      : Error("SingularCovarianceError", ErrorCategory::Numeric, what) {}
};

class BandwidthSelectionError : public Error {
 public:
  explicit BandwidthSelectionError(const std::string& what)
      : Error("BandwidthSelectionError", ErrorCategory::Numeric, what) {}
};

}  // namespace fmedreg
