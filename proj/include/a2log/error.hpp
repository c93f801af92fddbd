#pragma once

#include <stdexcept>
#include <string>

namespace a2log {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration supplied by the caller.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MalformedLineError : public Error {
public:
    using Error::Error;
};

/// Checkpoint, vocabulary or boundary file that cannot be decoded.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite values during training or differentiation.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace a2log
