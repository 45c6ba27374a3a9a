#pragma once

#include <stdexcept>
#include <string>

namespace guideseg {

// Error taxonomy used across the library. The CLI maps UsageError and
// FormatError to exit code 2; everything else surfaces as a record failure.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ResourceError : std::runtime_error {
    explicit ResourceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Pixel value reserved for "ignore" in label masks, background is 0.
inline constexpr unsigned char kIgnoreLabel = 255;

} // namespace guideseg
