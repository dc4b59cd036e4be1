#pragma once

#include <stdexcept>
#include <string>

namespace cfr {

// Every failure raised by the engine derives from Error. The C API maps each
// kind onto a stable integer code (see cfr.h).
enum class ErrorKind {
  Argument,
  Shape,
  Format,
  Io,
  Numeric,
  Integrity,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::Argument, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::Shape, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorKind::Integrity, w) {}
};

}  // namespace cfr
