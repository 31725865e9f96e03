#pragma once

#include <stdexcept>
#include <string>

namespace vvt {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Every frame of the partition has an empty in-mask token set.
struct DegenerateMaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PolicyViolationError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ScheduleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or activation during training.
struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vvt
