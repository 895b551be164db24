#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prolap {

using Vec = std::vector<double>;

// Thrown for malformed or inconsistent input data (files, shapes, labels).
// The CLI maps it to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for numerical failures (non-finite values, non-convergent
// integration, NaN loss). The CLI maps it to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) {
    return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// 1 / (1 + exp(-x)) evaluated from the side that cannot overflow.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(exp(a) + exp(b))
inline double log_add_exp(double a, double b) {
    const double m = std::fmax(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

constexpr double kLn2 = 0.6931471805599453094;
constexpr double kPi = 3.1415926535897932385;

}  // namespace prolap
