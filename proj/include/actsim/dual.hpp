#pragma once

#include <array>
#include <cassert>
#include <cmath>

namespace actsim {

/// Forward-mode dual number carrying a runtime-sized tangent vector, so one
/// evaluation of f yields the value together with d directional derivatives.
/// Capacity bounds the number of simultaneously differentiated parameters.
struct Dual {
    static constexpr int kCapacity = 80;

    double v = 0.0;
    int n = 0;
    std::array<double, kCapacity> g{};

    Dual() = default;

    static Dual constant(double value, int n_dirs) {
        Dual d;
        d.v = value;
        d.n = n_dirs;
        for (int i = 0; i < n_dirs; ++i) d.g[i] = 0.0;
        return d;
    }

    static Dual variable(double value, int n_dirs, int index) {
        Dual d = constant(value, n_dirs);
        d.g[index] = 1.0;
        return d;
    }
};

inline Dual operator+(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v + b.v;
    r.n = a.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] + b.g[i];
    return r;
}

inline Dual operator-(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v - b.v;
    r.n = a.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] - b.g[i];
    return r;
}

inline Dual operator-(const Dual& a) {
    Dual r;
    r.v = -a.v;
    r.n = a.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = -a.g[i];
    return r;
}

inline Dual operator*(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v * b.v;
    r.n = a.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return r;
}

inline Dual operator/(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v / b.v;
    r.n = a.n;
    const double inv = 1.0 / b.v;
    const double inv2 = inv * inv;
    for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * inv - a.v * b.g[i] * inv2;
    return r;
}

inline Dual operator+(const Dual& a, double c) {
    Dual r = a;
    r.v += c;
    return r;
}
inline Dual operator+(double c, const Dual& a) { return a + c; }

inline Dual operator-(const Dual& a, double c) {
    Dual r = a;
    r.v -= c;
    return r;
}
inline Dual operator-(double c, const Dual& a) { return (-a) + c; }

inline Dual operator*(const Dual& a, double c) {
    Dual r;
    r.v = a.v * c;
    r.n = a.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * c;
    return r;
}
inline Dual operator*(double c, const Dual& a) { return a * c; }

inline Dual operator/(const Dual& a, double c) { return a * (1.0 / c); }

inline Dual operator/(double c, const Dual& b) {
    Dual r;
    r.v = c / b.v;
    const double inv2 = 1.0 / (b.v * b.v);
    r.n = b.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = -c * b.g[i] * inv2;
    return r;
}

inline Dual exp(const Dual& a) {
    Dual r;
    r.v = std::exp(a.v);
    r.n = a.n;
    for (int i = 0; i < r.n; ++i) r.g[i] = r.v * a.g[i];
    return r;
}

/// Clamp at zero with a zero subgradient on the clamped branch.
inline Dual max_zero(const Dual& a) {
    if (a.v >= 0.0) return a;
    return Dual::constant(0.0, a.n);
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }
inline double max_zero(double x) { return x < 0.0 ? 0.0 : x; }

/// Additive zero carrying the same tangent size as the exemplar.
inline double zero_like(double) { return 0.0; }
inline Dual zero_like(const Dual& x) { return Dual::constant(0.0, x.n); }

}  // namespace actsim
