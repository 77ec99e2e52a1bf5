#pragma once

#include <stdexcept>
#include <string>

namespace lssa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A class index or token id is outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Invalid parameters or inputs that make an operation meaningless.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An operation was called in the wrong order (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Input for which a quantity is undefined (e.g. perplexity of zero tokens).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Malformed or incompatible checkpoint file.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Stego extraction saw a token that the replayed generation step could not
/// have produced. Usually means the wrong LM, codec or seed.
class DesyncError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Wraps an error with the name of the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace lssa
