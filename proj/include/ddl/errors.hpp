#pragma once

#include <stdexcept>
#include <string>

namespace ddl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Geometry: a mapped box collapsed to zero area after clamping.
struct DegenerateResult : Error {
    using Error::Error;
};

struct InvalidCount : Error {
    using Error::Error;
};

struct UnsupportedImage : Error {
    using Error::Error;
};

// Client-side failures.
struct TransportError : Error {
    using Error::Error;
};
struct ModelRefusal : Error {
    using Error::Error;
};
struct ParseError : Error {
    ParseError(const std::string& msg, std::string raw_text = {})
        : Error(msg), raw(std::move(raw_text)) {}
    std::string raw;
};
struct TagMissing : Error {
    using Error::Error;
};
struct VariantCountMismatch : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct InsufficientHistory : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct DegenerateInput : Error {
    using Error::Error;
};

struct ManifestError : Error {
    ManifestError(const std::string& msg, int line_number = -1)
        : Error(line_number >= 0 ? "manifest line " + std::to_string(line_number) + ": " + msg
                                 : msg),
          line(line_number) {}
    int line;
};

}  // namespace ddl
