// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gfocal {

enum class ErrorKind {
    Dimension,
    Config,
    Numeric,
    Format,
    Domain,
    Usage,
    Solver,
    Io,
    MissingField,
    UnsupportedGeometry,
};

const char* to_string(ErrorKind kind);

/// Base error for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Config: return "config";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Format: return "format";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Solver: return "solver";
        case ErrorKind::Io: return "io";
        case ErrorKind::MissingField: return "missing-field";
        case ErrorKind::UnsupportedGeometry: return "unsupported-geometry";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace gfocal
