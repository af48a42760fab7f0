#pragma once

#include <stdexcept>
#include <string>

namespace dp2vae {

/// Error classes map onto CLI exit categories; see cli.cpp.
enum class ErrorKind {
  kShape,
  kInvalidParameter,
  kInvalidLabel,
  kInvalidState,
  kNumeric,
  kNotPsd,
  kFormat,
  kData,
  kIntegrity,
  kIo,
  kUsage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DP2VAE_DEFINE_ERROR(Name, Kind)                                     \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

DP2VAE_DEFINE_ERROR(ShapeError, kShape)
DP2VAE_DEFINE_ERROR(InvalidParameter, kInvalidParameter)
DP2VAE_DEFINE_ERROR(InvalidLabel, kInvalidLabel)
DP2VAE_DEFINE_ERROR(InvalidState, kInvalidState)
DP2VAE_DEFINE_ERROR(NumericError, kNumeric)
DP2VAE_DEFINE_ERROR(NotPsdError, kNotPsd)
DP2VAE_DEFINE_ERROR(FormatError, kFormat)
DP2VAE_DEFINE_ERROR(DataError, kData)
DP2VAE_DEFINE_ERROR(IntegrityError, kIntegrity)
DP2VAE_DEFINE_ERROR(IoError, kIo)
DP2VAE_DEFINE_ERROR(UsageError, kUsage)

#undef DP2VAE_DEFINE_ERROR

}  // namespace dp2vae
