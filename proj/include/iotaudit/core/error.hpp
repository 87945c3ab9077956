#pragma once

#include <stdexcept>
#include <string>

namespace iotaudit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (capture files, config files, DER blobs).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A manifest, config or argument failed validation before processing.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A caller violated an operation's documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// An external resource (subprocess, socket, file) could not be used.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace iotaudit
