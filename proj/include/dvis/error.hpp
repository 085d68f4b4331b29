#pragma once

#include <stdexcept>
#include <string>

namespace dvis {

// Maps onto the CLI exit codes: validation 2, data 3, numerical 4.
enum class ErrorKind { Validation, Data, Numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void throw_validation(const std::string& what);
[[noreturn]] void throw_data(const std::string& what);
[[noreturn]] void throw_numerical(const std::string& what);

/// Re-throws the active exception with "<stage>: " prefixed, keeping its kind.
/// Must be called from inside a catch block.
[[noreturn]] void rethrow_with_stage(const std::string& stage);

int exit_code(ErrorKind kind) noexcept;

} // namespace dvis
