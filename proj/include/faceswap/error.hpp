#pragma once

#include <stdexcept>
#include <string>

namespace faceswap {

enum class ErrorCode {
  invalid_argument = 1,
  invalid_config,
  shape_mismatch,
  io_error,
  corrupt_checkpoint,
  version_mismatch,
  numerical,
  degenerate_input,
  poisoned_loss,
  contract_violation,
  insufficient_samples,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) throw Error(code, message);
}

}  // namespace faceswap
