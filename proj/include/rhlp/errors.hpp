#pragma once

#include <stdexcept>
#include <string>

namespace rhlp {

// Base for every failure the library reports. Callers that only care about
// "did it work" catch this; the CLI maps the concrete types to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A component's responsibility mass fell below the degeneracy threshold.
class DegenerateComponent : public Error {
public:
    DegenerateComponent(int component, double mass)
        : Error("component " + std::to_string(component + 1) + " degenerate (mass " +
                std::to_string(mass) + ")"),
          component_(component), mass_(mass) {}
    int component() const noexcept { return component_; }
    double mass() const noexcept { return mass_; }

private:
    int component_;
    double mass_;
};

class TooFewPoints : public Error {
public:
    TooFewPoints(std::size_t have, std::size_t need)
        : Error("too few points: have " + std::to_string(have) + ", need at least " +
                std::to_string(need)),
          have_(have), need_(need) {}
    std::size_t have() const noexcept { return have_; }
    std::size_t need() const noexcept { return need_; }

private:
    std::size_t have_;
    std::size_t need_;
};

class AllStartsFailed : public Error {
public:
    using Error::Error;
};

class EmptyGrid : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Input file problems; line is 1-based, 0 when not attributable to a line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace rhlp
