#pragma once

#include <cmath>

namespace distileval {

/// First-order dual number: value plus one tangent component. Running the
/// backward pass with this scalar type yields Jacobian-transpose products of
/// the gradient, i.e. exact Hessian-vector products, without writing any
/// second-order code by hand.
struct Dual {
    double v = 0.0; // primal value
    double d = 0.0; // tangent

    Dual() = default;
    Dual(double value) : v(value) {} // NOLINT(google-explicit-constructor)
    Dual(double value, double tangent) : v(value), d(tangent) {}

    Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
    Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
    Dual& operator*=(const Dual& o) {
        d = d * o.v + v * o.d;
        v = v * o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        d = (d * o.v - v * o.d) / (o.v * o.v);
        v = v / o.v;
        return *this;
    }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return Dual{-a.v, -a.d}; }
inline Dual operator+(const Dual& a) { return a; }

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
inline bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }

inline Dual exp(const Dual& a) {
    double e = std::exp(a.v);
    return Dual{e, e * a.d};
}
inline Dual log(const Dual& a) { return Dual{std::log(a.v), a.d / a.v}; }
inline Dual sqrt(const Dual& a) {
    double s = std::sqrt(a.v);
    return Dual{s, a.d / (2.0 * s)};
}
inline Dual abs(const Dual& a) { return a.v < 0.0 ? -a : a; }

/// max with the subgradient convention of picking the larger branch; ties
/// take the first argument, matching how relu treats exact zeros.
inline Dual max(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }
inline Dual min(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }

/// Helpers so templated code can read the primal part of any scalar.
inline double primal(double x) { return x; }
inline double primal(const Dual& x) { return x.v; }

} // namespace distileval
