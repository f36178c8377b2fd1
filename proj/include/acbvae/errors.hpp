#ifndef ACBVAE_ERRORS_HPP_
#define ACBVAE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace acbvae {

// Error categories map onto CLI exit codes: usage 2, data/integrity 3,
// runtime/training 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public UsageError {
 public:
  using UsageError::UsageError;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public IntegrityError {
 public:
  UnsupportedVersionError(int found, int supported)
      : IntegrityError("unsupported checkpoint format version " +
                       std::to_string(found) + " (this build reads version " +
                       std::to_string(supported) + ")"),
        found_(found),
        supported_(supported) {}

  int found() const { return found_; }
  int supported() const { return supported_; }

 private:
  int found_;
  int supported_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace acbvae

#endif  // ACBVAE_ERRORS_HPP_
