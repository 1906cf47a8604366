#pragma once

#include <stdexcept>
#include <string>

namespace asfda {

enum class ErrorKind {
    Dimension,
    Domain,
    EmptyInput,
    Pairing,
    Budget,
    Exhaustion,
    Format,
    Corruption,
    Io,
    Adapter,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can map it to an exit code without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

/// 0 success, 2 validation, 3 adapter, 4 I/O (including malformed files).
int exit_code_for(ErrorKind kind);

}  // namespace asfda
