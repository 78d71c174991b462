#pragma once

#include <stdexcept>
#include <string>

namespace lsbpan {

enum class ErrorKind {
  config,     // invalid configuration or arguments
  data,       // malformed or missing inputs
  numeric,    // non-finite values during computation
  conflict,   // state transition not allowed (e.g. deciding a decided item)
  not_found,  // unknown identifier
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// Process exit status for an error kind: 2 config, 3 data, 4 numeric.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numeric: return 4;
    default: return 3;
  }
}

}  // namespace lsbpan
