#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ecn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes disagree; `axis()` names the offending axis ("n", "c", "h", "w", ...).
class DimensionError : public Error {
 public:
  DimensionError(const std::string& op, const std::string& axis, const std::string& detail)
      : Error(op + ": dimension mismatch on axis '" + axis + "': " + detail), axis_(axis) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Invalid block or layer configuration (e.g. groups not dividing channels).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse: backward on a non-scalar, optimizer step without gradients, ...
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& detail)
      : Error(path + ": " + detail), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed text input; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& detail)
      : Error("line " + std::to_string(line) + ": " + detail), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// An ArchSpec whose layers do not compose; `layer()` names the first bad layer.
class GraphError : public Error {
 public:
  GraphError(const std::string& layer, const std::string& detail)
      : Error("layer '" + layer + "': " + detail), layer_(layer) {}

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// Bad magic bytes or unsupported format version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint was produced from a different architecture spec.
class SpecMismatchError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t step, const std::string& detail)
      : Error("non-finite loss at step " + std::to_string(step) + ": " + detail), step_(step) {}

  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

}  // namespace ecn
