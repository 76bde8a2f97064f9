#pragma once

#include <stdexcept>
#include <string>

namespace dreamdpo {

// Error taxonomy. Everything derives from Error so callers can catch the
// whole family; the concrete types distinguish contract violations that
// tests and the CLI need to tell apart.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument values (ranges, bounds, empty inputs).
struct ParameterError : Error {
    using Error::Error;
};

// Vector dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Conditioning label not present in the mixture.
struct LabelError : Error {
    using Error::Error;
};

// View kind incompatible with the representation.
struct ViewError : Error {
    using Error::Error;
};

// LMM transport or response failure; the engine downgrades these to
// skipped iterations.
struct AnnotationError : Error {
    using Error::Error;
};

// Malformed LMM response text; carries the offending answer index.
struct ResponseParseError : Error {
    int index;
    ResponseParseError(const std::string& msg, int idx) : Error(msg), index(idx) {}
};

// Config file problems; carries the 1-based line number (0 = not line-bound,
// e.g. a command-line override).
struct ConfigError : Error {
    int line;
    explicit ConfigError(const std::string& msg, int line_no = 0) : Error(msg), line(line_no) {}
};

// Filesystem failures (fatal in the harness).
struct IoError : Error {
    using Error::Error;
};

}  // namespace dreamdpo
