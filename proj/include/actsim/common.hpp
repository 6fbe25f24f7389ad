#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace actsim {

using Vec = std::vector<double>;

/// Minimal dense row-major matrix used at module boundaries.
/// Heavy linear algebra converts to Eigen internally.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double trace() const {
        double t = 0.0;
        int n = rows < cols ? rows : cols;
        for (int i = 0; i < n; ++i) t += (*this)(i, i);
        return t;
    }
};

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A simulation or model evaluation produced a non-finite value.
class DivergedError : public std::runtime_error {
  public:
    DivergedError(const std::string& msg, long at_step)
        : std::runtime_error(msg + " (step " + std::to_string(at_step) + ")"), step(at_step) {}
    long step;
};

/// An optimizer could not produce a usable fit; carries the best point seen.
class FitFailedError : public std::runtime_error {
  public:
    FitFailedError(const std::string& msg, Vec best)
        : std::runtime_error(msg), best_so_far(std::move(best)) {}
    Vec best_so_far;
};

class IllConditionedError : public std::runtime_error {
  public:
    IllConditionedError(const std::string& msg, double cond)
        : std::runtime_error(msg + " (condition number " + std::to_string(cond) + ")"),
          condition_number(cond) {}
    double condition_number;
};

class TrainingDivergedError : public std::runtime_error {
  public:
    explicit TrainingDivergedError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Every candidate action failed during experiment selection.
class SelectionFailedError : public std::runtime_error {
  public:
    explicit SelectionFailedError(const std::string& msg) : std::runtime_error(msg) {}
};

class RunFailedError : public std::runtime_error {
  public:
    explicit RunFailedError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

/// log of the mean of exp(x_i), evaluated in the log domain so large
/// exponents (e.g. squared clipped values up to 900) do not overflow.
inline double logmeanexp(const Vec& xs) {
    if (xs.empty()) throw std::invalid_argument("logmeanexp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs)
        if (x > m) m = x;
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s / static_cast<double>(xs.size()));
}

inline double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace actsim
