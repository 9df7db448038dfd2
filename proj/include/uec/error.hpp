#pragma once
// Exception types thrown by the uec library. Every error derives from
// uec::Error so callers can catch the whole family at once; the CLI maps
// uec::Error to the data-error exit code.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uec {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A mean vector with zero norm (or otherwise unusable embedding).
class DegenerateEmbeddingError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    DimensionMismatchError(std::size_t expected, std::size_t got, const std::string& what = "")
        : Error("dimension mismatch" + (what.empty() ? std::string{} : " in " + what) +
                ": expected " + std::to_string(expected) + ", got " + std::to_string(got)),
          expected_(expected), got_(got) {}
    std::size_t expected() const noexcept { return expected_; }
    std::size_t got() const noexcept { return got_; }

private:
    std::size_t expected_;
    std::size_t got_;
};

class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

// Newton iteration did not reach the gradient tolerance.
class FitFailureError : public Error {
public:
    FitFailureError(int iterations, double gradient_norm)
        : Error("MAP fit did not converge after " + std::to_string(iterations) +
                " iterations (gradient inf-norm " + std::to_string(gradient_norm) + ")"),
          gradient_norm_(gradient_norm) {}
    double gradient_norm() const noexcept { return gradient_norm_; }

private:
    double gradient_norm_;
};

// Nonpositive trace or cost passed to coefficient computation.
class DegenerateUncertaintyError : public Error {
public:
    using Error::Error;
};

class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

// ---- persistence ----

class IoError : public Error {
public:
    using Error::Error;
};

class SerializationRefusedError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
public:
    explicit UnsupportedVersionError(std::uint32_t version)
        : FormatError("unsupported store version " + std::to_string(version) + " (expected 1)"),
          version_(version) {}
    std::uint32_t version() const noexcept { return version_; }

private:
    std::uint32_t version_;
};

class TruncatedError : public FormatError {
public:
    explicit TruncatedError(std::uint64_t offset, const std::string& what = "")
        : FormatError("truncated store at byte offset " + std::to_string(offset) +
                      (what.empty() ? std::string{} : " while reading " + what)),
          offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class NegativeVarianceError : public FormatError {
public:
    using FormatError::FormatError;
};

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateJudgmentError : public ParseError {
public:
    using ParseError::ParseError;
};

}  // namespace uec
