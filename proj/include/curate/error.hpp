#pragma once

#include <stdexcept>
#include <string>

namespace curate {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating manifest content. `line()` is 1-based, 0 when not tied to a line.
class ManifestError : public Error {
 public:
  ManifestError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class AudioError : public Error {
 public:
  using Error::Error;
};

/// Raised when a stage needs a field an earlier stage should have produced.
class StageOrderError : public Error {
 public:
  using Error::Error;
};

class SegmentationError : public Error {
 public:
  using Error::Error;
};

class EmptyReferenceError : public Error {
 public:
  EmptyReferenceError() : Error("empty reference") {}
};

class CatalogError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace curate
