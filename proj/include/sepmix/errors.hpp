#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sepmix {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OverfullLattice : public Error { using Error::Error; };
class BadSplit : public Error { using Error::Error; };
class NotAdjacent : public Error { using Error::Error; };
class EmptySystem : public Error { using Error::Error; };
class TooLarge : public Error { using Error::Error; };
class OutOfRange : public Error { using Error::Error; };
class ModelMismatch : public Error { using Error::Error; };
class EmptyWindow : public Error { using Error::Error; };
class BadBinWidth : public Error { using Error::Error; };

/// Quadrature refinement did not settle; both final iterates are kept.
class NoConvergence : public Error {
public:
    NoConvergence(const std::string& what, double previous, double last)
        : Error(what), previous_(previous), last_(last) {}
    double previous() const noexcept { return previous_; }
    double last() const noexcept { return last_; }

private:
    double previous_;
    double last_;
};

/// A density left the admissible band during an explicit step.
class Instability : public Error {
public:
    Instability(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : Error(what), offset_(byte_offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

} // namespace sepmix
