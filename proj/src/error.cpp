#include "ladc/error.hpp"

namespace ladc {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MalformedHeader: return "MalformedHeader";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::InvalidCovariance: return "InvalidCovariance";
        case ErrorKind::EmptyClass: return "EmptyClass";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::InsufficientHeadClasses: return "InsufficientHeadClasses";
        case ErrorKind::MissingCovariance: return "MissingCovariance";
        case ErrorKind::ZeroCount: return "ZeroCount";
        case ErrorKind::MissingCalibration: return "MissingCalibration";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidConfig:
            return ErrorCategory::config;
        case ErrorKind::NotPositiveDefinite:
        case ErrorKind::NonFiniteLoss:
            return ErrorCategory::numerical;
        default:
            return ErrorCategory::data;
    }
}

int exit_code_for(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::data: return 3;
        case ErrorCategory::numerical: return 4;
    }
    return 1;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

Error Error::wrapped(std::string_view context) const {
    Error copy = *this;
    static_cast<std::runtime_error&>(copy) =
        std::runtime_error(std::string(context) + ": " + what());
    return copy;
}

}  // namespace ladc
