#pragma once

#include <stdexcept>
#include <string>

namespace daopt {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Run size has the wrong residue mod 4 for the requested operation.
struct RunSizeResidueError : Error {
  using Error::Error;
};

/// A FormSpec does not fit the design it was paired with.
struct SpecShapeError : Error {
  using Error::Error;
};

/// Two designs (or a design and an operation) have incompatible dimensions.
struct ShapeError : Error {
  using Error::Error;
};

/// A design does not satisfy the information-matrix form required here.
struct FormError : Error {
  using Error::Error;
};

/// Interaction order outside the valid range.
struct OrderError : Error {
  using Error::Error;
};

/// The main-effects model matrix is rank deficient.
struct SingularModelError : Error {
  using Error::Error;
};

/// Brute-force reference computation would not terminate at this size.
struct OracleScaleError : Error {
  using Error::Error;
};

/// Catalog file carries an unsupported schema or canonicalization scheme.
struct VersionError : Error {
  using Error::Error;
};

/// Malformed catalog file contents.
struct ParseError : Error {
  ParseError(const std::string& msg, int line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  int line_number;
};

/// Requested report needs catalogs or annotations that are not present.
struct MissingDataError : Error {
  using Error::Error;
};

}  // namespace daopt
