#pragma once

#include <stdexcept>
#include <string>

namespace places {

enum class ErrorKind {
    parse,
    conflict,
    validation,
    config,
    io,
    backend_unavailable,
    budget_unreachable,
    undefined_metric,
    incomparable,
    undefined_test,
};

/// Library-wide exception. The kind drives CLI exit codes.
class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, std::string const & message)
    : std::runtime_error(message)
    , kind_(kind)
    {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Backend failure that carries the last HTTP status seen (0 for transport errors).
class BackendError : public Error
{
public:
    BackendError(std::string const & message, int last_status)
    : Error(ErrorKind::backend_unavailable, message)
    , last_status_(last_status)
    {}

    [[nodiscard]] int last_status() const noexcept { return last_status_; }

private:
    int last_status_;
};

char const * to_string(ErrorKind kind) noexcept;

/// 0 success, 1 validation/config, 2 backend, 3 I/O.
int exit_code_for(ErrorKind kind) noexcept;

} // namespace places
