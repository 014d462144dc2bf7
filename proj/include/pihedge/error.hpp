#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pihedge {

// Computational failures (bad data, non-convergence, singular systems).
// The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Usage and file-system problems. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidBar : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class OrderingError : public ParseError {
public:
    using ParseError::ParseError;
};

class EmptyEpisode : public Error {
public:
    using Error::Error;
};

class Divergence : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class ImpossibleSequence : public Error {
public:
    explicit ImpossibleSequence(std::size_t step)
        : Error("sequence has zero probability under the model at step " + std::to_string(step)),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class PathExplosion : public Error {
public:
    explicit PathExplosion(std::size_t step)
        : Error("predicted price change <= -1 at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class InsufficientPaths : public Error {
public:
    using Error::Error;
};

class DegenerateRange : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

}  // namespace pihedge
