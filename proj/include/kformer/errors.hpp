#pragma once

#include <stdexcept>
#include <string>

namespace kformer {

// Error taxonomy; the CLI maps these onto exit codes (config=2, data=3,
// numeric=4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when an op produces NaN/Inf or training diverges. Carries the op
// name in the message.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse (non-scalar loss, non-deterministic forward, ...).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kformer
