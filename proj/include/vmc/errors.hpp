#pragma once

#include <array>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vmc {

/// Base of all library errors. `is_numerical()` separates bad input from
/// numerical failure (the CLI maps them to exit codes 2 and 3).
class Error : public std::runtime_error {
public:
    Error(const std::string& what, bool numerical) : std::runtime_error(what), numerical_(numerical) {}
    [[nodiscard]] bool is_numerical() const noexcept { return numerical_; }

private:
    bool numerical_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what, false) {}
};

class UnsupportedDimension : public Error {
public:
    explicit UnsupportedDimension(const std::string& what) : Error(what, false) {}
};

class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& what) : Error(what, false) {}
};

/// Coefficient is non-positive at a quadrature point.
class EllipticityViolation : public Error {
public:
    EllipticityViolation(double x, double y, double value)
        : Error(format(x, y, value), true), point_{x, y}, value_(value) {}

    [[nodiscard]] std::array<double, 2> point() const noexcept { return point_; }
    [[nodiscard]] double value() const noexcept { return value_; }

private:
    static std::string format(double x, double y, double value) {
        std::ostringstream os;
        os << "coefficient " << value << " <= 0 at (" << x << ", " << y << ")";
        return os.str();
    }

    std::array<double, 2> point_;
    double value_;
};

class SingularSystem : public Error {
public:
    explicit SingularSystem(const std::string& what) : Error(what, true) {}
};

class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, std::ptrdiff_t pivot)
        : Error(what + " (pivot " + std::to_string(pivot) + ")", true), pivot_(pivot) {}
    [[nodiscard]] std::ptrdiff_t pivot() const noexcept { return pivot_; }

private:
    std::ptrdiff_t pivot_;
};

class NumericalBreakdown : public Error {
public:
    explicit NumericalBreakdown(const std::string& what) : Error(what, true) {}
};

class UndefinedRelativeError : public Error {
public:
    explicit UndefinedRelativeError(const std::string& what) : Error(what, true) {}
};

}  // namespace vmc
