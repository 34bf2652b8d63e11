#pragma once

#include <stdexcept>

namespace qsearch {

// Error categories mapped to CLI exit codes: usage=1, data/format=2, numeric=3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf detected somewhere it must not be (logits, losses, fitness).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace qsearch
