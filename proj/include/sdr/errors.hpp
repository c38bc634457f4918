#pragma once

#include <stdexcept>
#include <string>

namespace sdr {

/// Base of every error the library raises. `exit_code()` is what the CLI
/// returns when the error escapes a command.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 2; }
};

#define SDR_DEFINE_ERROR(Name)        \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  };

SDR_DEFINE_ERROR(FormatError)
SDR_DEFINE_ERROR(UnsupportedError)
SDR_DEFINE_ERROR(ParseError)
SDR_DEFINE_ERROR(EmptySegmentsError)
SDR_DEFINE_ERROR(EmptyFeaturesError)
SDR_DEFINE_ERROR(ShapeError)
SDR_DEFINE_ERROR(LabelError)
SDR_DEFINE_ERROR(ArchError)
SDR_DEFINE_ERROR(VersionError)
SDR_DEFINE_ERROR(InsufficientDataError)
SDR_DEFINE_ERROR(IoError)

#undef SDR_DEFINE_ERROR

/// Bad argument or precondition; a usage error at the CLI.
class ArgumentError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 1; }
};

}  // namespace sdr
