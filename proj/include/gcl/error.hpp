#pragma once

#include <stdexcept>
#include <string>

namespace gcl {

/// Input data that cannot be used: non-finite values, shape mismatches,
/// malformed files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training blew up (quantization error exploded or became non-finite).
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int epoch)
        : std::runtime_error(what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace gcl
