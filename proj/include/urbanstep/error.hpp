#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace urbanstep {

enum class ErrorCategory {
  Config,
  Validation,
  InvalidTransition,
  Precondition,
  Parse,
  NotFound,
  Network,
  Timeout,
  Protocol,
  Backend,
  CorruptLog,
  Io,
};

std::string_view category_name(ErrorCategory category);

// Base for every error the library throws. The category drives CLI exit
// codes and HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& message)
      : Error(ErrorCategory::Parse,
              message + " (at position " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class CorruptLogError : public Error {
 public:
  CorruptLogError(std::uint64_t sequence, const std::string& message)
      : Error(ErrorCategory::CorruptLog,
              "corrupt event log at sequence " + std::to_string(sequence) + ": " + message),
        sequence_(sequence) {}

  std::uint64_t sequence() const noexcept { return sequence_; }

 private:
  std::uint64_t sequence_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace urbanstep
