#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modrec {

// Contract violation on tensor/layer geometry (mismatched channels, bad dims).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated on-disk data. byte_offset points at the failing read
// when known, SIZE_MAX otherwise.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg, std::size_t offset = SIZE_MAX)
        : std::runtime_error(msg), byte_offset(offset) {}
    std::size_t byte_offset;
};

// Non-finite loss during training; carries the failing epoch/batch.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& msg, int epoch_, int batch_)
        : std::runtime_error(msg), epoch(epoch_), batch(batch_) {}
    int epoch;
    int batch;
};

}  // namespace modrec
