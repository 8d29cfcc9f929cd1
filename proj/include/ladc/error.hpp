#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ladc {

enum class ErrorKind {
    MalformedHeader,
    DimensionMismatch,
    NonFiniteValue,
    EmptyDataset,
    InvalidCovariance,
    EmptyClass,
    NotPositiveDefinite,
    InsufficientHeadClasses,
    MissingCovariance,
    ZeroCount,
    MissingCalibration,
    NonFiniteLoss,
    LengthMismatch,
    InvalidConfig,
    Io,
};

// Coarse grouping used for process exit codes.
enum class ErrorCategory { config, data, numerical };

std::string_view to_string(ErrorKind kind);
ErrorCategory category_of(ErrorKind kind);

// Exit code for the CLI: 2 config, 3 data, 4 numerical.
int exit_code_for(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    ErrorCategory category() const noexcept { return category_of(kind_); }

    // Same kind, message prefixed with "<context>: ".
    Error wrapped(std::string_view context) const;

private:
    ErrorKind kind_;
};

}  // namespace ladc
