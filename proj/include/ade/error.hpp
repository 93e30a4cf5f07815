#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ade {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Requested allocation would exceed the configured memory cap.
class CapacityError : public Error {
 public:
  CapacityError(std::size_t requested_bytes, std::size_t cap_bytes)
      : Error("capacity exceeded: need " + std::to_string(requested_bytes) +
              " bytes, cap is " + std::to_string(cap_bytes) + " bytes"),
        requested_(requested_bytes),
        cap_(cap_bytes) {}

  std::size_t requested_bytes() const { return requested_; }
  std::size_t cap_bytes() const { return cap_; }

 private:
  std::size_t requested_;
  std::size_t cap_;
};

/// Invalid parameter values (out of range p, epsilon, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Median-constant calibration is missing or of insufficient quality.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or query input.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Structure file carries a different format version.
class VersionError : public Error {
 public:
  VersionError(unsigned found, unsigned expected)
      : Error("structure file format version " + std::to_string(found) +
              " does not match supported version " + std::to_string(expected)),
        found_(found),
        expected_(expected) {}

  unsigned found() const { return found_; }
  unsigned expected() const { return expected_; }

 private:
  unsigned found_;
  unsigned expected_;
};

/// Structure file is truncated or its checksum does not match.
class ChecksumError : public Error {
 public:
  using Error::Error;
};

}  // namespace ade
