#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace textheads {

// Root of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class SequenceTooShortError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class LabelError : public Error {
public:
    using Error::Error;
};

class GraphError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class VocabularyError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Errors tied to a line of an input file (1-based).
class LineError : public Error {
public:
    LineError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ParseError : public LineError {
public:
    using LineError::LineError;
};

class FormatError : public LineError {
public:
    using LineError::LineError;
};

class CheckpointError : public Error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, malformed, shape_mismatch, kind_mismatch };

    CheckpointError(Kind kind, const std::string& what) : Error("checkpoint: " + what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace textheads
