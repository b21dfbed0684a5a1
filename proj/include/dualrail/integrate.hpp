#pragma once

#include <cmath>
#include <limits>

#include "dualrail/errors.hpp"

// One-dimensional adaptive Simpson quadrature. Infinite endpoints are mapped
// to [0,1) with x = a + t/(1-t); the integrands used here decay like
// exp(-x^2), so the transformed integrand vanishes at t -> 1.

namespace dualrail {

namespace detail {

template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm,
                       double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double integrate_finite(const F& f, double a, double b, double tol, int depth) {
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_recurse(f, a, b, fa, fm, fb, whole, tol, depth);
}

}  // namespace detail

// abs_tol is an absolute tolerance target for the whole interval.
template <class F>
double integrate(const F& f, double a, double b, double abs_tol,
                 int max_depth = 48) {
    if (!(abs_tol > 0.0)) throw ValidationError("integrate: abs_tol must be > 0");
    if (a > b) return -integrate(f, b, a, abs_tol, max_depth);

    const bool lo_inf = std::isinf(a);
    const bool hi_inf = std::isinf(b);
    if (lo_inf && hi_inf) {
        return integrate(f, a, 0.0, 0.5 * abs_tol, max_depth) +
               integrate(f, 0.0, b, 0.5 * abs_tol, max_depth);
    }
    if (hi_inf) {
        auto g = [&f, a](double t) {
            if (t >= 1.0) return 0.0;
            const double w = 1.0 / (1.0 - t);
            const double v = f(a + t * w) * w * w;
            return std::isfinite(v) ? v : 0.0;
        };
        return detail::integrate_finite(g, 0.0, 1.0, abs_tol, max_depth);
    }
    if (lo_inf) {
        auto g = [&f, b](double t) {
            if (t >= 1.0) return 0.0;
            const double w = 1.0 / (1.0 - t);
            const double v = f(b - t * w) * w * w;
            return std::isfinite(v) ? v : 0.0;
        };
        return detail::integrate_finite(g, 0.0, 1.0, abs_tol, max_depth);
    }
    return detail::integrate_finite(f, a, b, abs_tol, max_depth);
}

}  // namespace dualrail
