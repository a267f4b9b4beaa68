#pragma once

#include <stdexcept>
#include <string>

namespace pstarmax {

/// Broad failure classes. The CLI maps them onto its exit codes.
enum class ErrorKind {
  validation,    // inputs violate a documented invariant
  precondition,  // operation called outside its domain (bad dims, short panel, ...)
  numerical,     // singular systems, overflow, non-finite values
  unsupported,   // deliberately unimplemented feature
  io,            // malformed or unreadable files
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace pstarmax
