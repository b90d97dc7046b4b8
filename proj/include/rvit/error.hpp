#pragma once

#include <stdexcept>
#include <string>

namespace rvit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RVIT_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  };

RVIT_DEFINE_ERROR(DimensionError)   // incompatible shapes
RVIT_DEFINE_ERROR(ContractError)    // caller broke a documented precondition
RVIT_DEFINE_ERROR(StateError)       // object used in the wrong lifecycle state
RVIT_DEFINE_ERROR(ConfigError)
RVIT_DEFINE_ERROR(InputError)
RVIT_DEFINE_ERROR(NumericError)
RVIT_DEFINE_ERROR(TrainingError)
RVIT_DEFINE_ERROR(UndefinedRateError)
RVIT_DEFINE_ERROR(IoError)
RVIT_DEFINE_ERROR(FormatError)
RVIT_DEFINE_ERROR(VersionError)
RVIT_DEFINE_ERROR(CorruptionError)

#undef RVIT_DEFINE_ERROR

}  // namespace rvit
