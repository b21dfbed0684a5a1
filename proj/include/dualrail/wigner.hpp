#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "dualrail/errors.hpp"
#include "dualrail/fock.hpp"

// Wigner function of the truncated two-mode state, evaluated from the
// closed-form kernel of |m><n| (Laguerre polynomials by recurrence), plus
// planar cross sections and the phase-space check of the beam-splitter
// rotation law.

namespace dualrail {

namespace detail {

// Associated Laguerre L_n^k(x) by the three-term recurrence.
inline double laguerre(int n, int k, double x) {
    if (n == 0) return 1.0;
    double lm1 = 1.0;
    double l = 1.0 + k - x;
    for (int i = 1; i < n; ++i) {
        const double lp1 = ((2.0 * i + 1.0 + k - x) * l - (i + k) * lm1) / (i + 1.0);
        lm1 = l;
        l = lp1;
    }
    return l;
}

}  // namespace detail

// W_{|m><n|}(x, p) for m >= n:
//   ((-1)^n / pi) sqrt(2^{m-n} n!/m!) (x - i p)^{m-n}
//     L_n^{m-n}(2 (x^2 + p^2)) exp(-(x^2 + p^2));
// the m < n case is the complex conjugate.
inline Complex wigner_kernel(int m, int n, double x, double p) {
    if (m < 0 || n < 0) throw ValidationError("wigner_kernel: indices must be >= 0");
    if (m < n) return std::conj(wigner_kernel(n, m, x, p));
    const int d = m - n;
    const double r2 = x * x + p * p;
    double pref = 1.0;
    for (int j = n + 1; j <= m; ++j) pref /= j;  // n!/m!
    pref = std::sqrt(pref * detail::ipow(2.0, d));
    Complex axis = 1.0;
    const Complex base(x, -p);
    for (int j = 0; j < d; ++j) axis *= base;
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    return (sign / M_PI) * pref * axis * detail::laguerre(n, d, 2.0 * r2) *
           std::exp(-r2);
}

struct PhaseSpacePoint {
    double x_a = 0.0;
    double p_a = 0.0;
    double x_b = 0.0;
    double p_b = 0.0;
};

namespace detail {

inline CMatrix wigner_kernel_table(int dim, double x, double p) {
    CMatrix k(dim, dim);
    for (int m = 0; m < dim; ++m) {
        for (int n = m; n < dim; ++n) {
            k(m, n) = wigner_kernel(m, n, x, p);
            k(n, m) = std::conj(k(m, n));
        }
    }
    return k;
}

inline double wigner_contraction(const TwoModeDensityMatrix& state, const CMatrix& ka,
                                 const CMatrix& kb) {
    const int d = state.cutoff.dim();
    Complex acc = 0.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
            for (int m = 0; m < d; ++m)
                for (int n = 0; n < d; ++n)
                    acc += state.at(k, l, m, n) * ka(k, m) * kb(l, n);
    if (std::abs(acc.imag()) > 1e-10)
        throw NumericError("wigner contraction: imaginary residue exceeds 1e-10");
    return acc.real();
}

}  // namespace detail

// W(x_a, p_a, x_b, p_b) = sum rho_{kl,mn} W_{|k><m|}(x_a,p_a) W_{|l><n|}(x_b,p_b).
inline double two_mode_wigner(const TwoModeDensityMatrix& state,
                              const PhaseSpacePoint& pt) {
    const int d = state.cutoff.dim();
    const CMatrix ka = detail::wigner_kernel_table(d, pt.x_a, pt.p_a);
    const CMatrix kb = detail::wigner_kernel_table(d, pt.x_b, pt.p_b);
    return detail::wigner_contraction(state, ka, kb);
}

inline double single_mode_wigner(const CMatrix& rho, double x, double p) {
    const int d = static_cast<int>(rho.rows());
    const CMatrix k = detail::wigner_kernel_table(d, x, p);
    Complex acc = 0.0;
    for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) acc += rho(m, n) * k(m, n);
    if (std::abs(acc.imag()) > 1e-10)
        throw NumericError("single_mode_wigner: imaginary residue exceeds 1e-10");
    return acc.real();
}

// Named 2D cross sections of the 4D Wigner function, labelled by the
// coordinates pinned to zero.
enum class WignerPlane {
    XaPaZero,  // x_a = p_a = 0; the grid spans (x_b, p_b)
    PaPbZero,  // p_a = p_b = 0; the grid spans (x_a, x_b)
    XbZero,    // x_b = 0 (and p_b = 0); the grid spans (x_a, p_a)
};

inline std::string wigner_plane_name(WignerPlane plane) {
    switch (plane) {
        case WignerPlane::XaPaZero: return "xa_pa_zero";
        case WignerPlane::PaPbZero: return "pa_pb_zero";
        case WignerPlane::XbZero: return "xb_zero";
    }
    throw ValidationError("unknown Wigner plane");
}

inline std::pair<std::string, std::string> wigner_plane_axes(WignerPlane plane) {
    switch (plane) {
        case WignerPlane::XaPaZero: return {"x_b", "p_b"};
        case WignerPlane::PaPbZero: return {"x_a", "x_b"};
        case WignerPlane::XbZero: return {"x_a", "p_a"};
    }
    throw ValidationError("unknown Wigner plane");
}

inline WignerPlane wigner_plane_from_name(const std::string& name) {
    if (name == "xa_pa_zero") return WignerPlane::XaPaZero;
    if (name == "pa_pb_zero") return WignerPlane::PaPbZero;
    if (name == "xb_zero") return WignerPlane::XbZero;
    throw ValidationError("unknown Wigner plane: " + name +
                          " (expected xa_pa_zero, pa_pb_zero, or xb_zero)");
}

inline PhaseSpacePoint plane_point(WignerPlane plane, double u, double v) {
    switch (plane) {
        case WignerPlane::XaPaZero: return {0.0, 0.0, u, v};
        case WignerPlane::PaPbZero: return {u, 0.0, v, 0.0};
        case WignerPlane::XbZero: return {u, v, 0.0, 0.0};
    }
    throw ValidationError("unknown Wigner plane");
}

struct WignerGrid {
    WignerPlane plane = WignerPlane::PaPbZero;
    double axis_min = -3.0;
    double axis_max = 3.0;
    double step = 0.05;
    Eigen::MatrixXd values;  // values(i, j) = W at (u_i, v_j)

    int points() const { return static_cast<int>(values.rows()); }
    double coord(int i) const { return axis_min + step * i; }
};

inline WignerGrid cross_section(const TwoModeDensityMatrix& state, WignerPlane plane,
                                double axis_min = -3.0, double axis_max = 3.0,
                                double step = 0.05) {
    if (!(step > 0.0) || !(axis_min < axis_max))
        throw ValidationError("cross_section: need axis_min < axis_max and step > 0");
    const int n = static_cast<int>(std::floor((axis_max - axis_min) / step + 0.5)) + 1;
    WignerGrid grid{plane, axis_min, axis_max, step, Eigen::MatrixXd(n, n)};
    const int d = state.cutoff.dim();
    if (plane == WignerPlane::PaPbZero) {
        // One coordinate per mode and a shared coordinate list: one kernel
        // cache serves both axes.
        std::vector<CMatrix> cache(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            cache[i] = detail::wigner_kernel_table(d, grid.coord(i), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                grid.values(i, j) = detail::wigner_contraction(state, cache[i], cache[j]);
        return grid;
    }
    // Both grid axes live on one mode; the other mode is pinned at the origin.
    const CMatrix pinned = detail::wigner_kernel_table(d, 0.0, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const CMatrix moving =
                detail::wigner_kernel_table(d, grid.coord(i), grid.coord(j));
            grid.values(i, j) = (plane == WignerPlane::XbZero)
                                    ? detail::wigner_contraction(state, moving, pinned)
                                    : detail::wigner_contraction(state, pinned, moving);
        }
    return grid;
}

// Phase-space form of the beam splitter: the output Wigner function is the
// input one evaluated at rotated coordinates,
//   x_1 = tau x_a - rho x_b,  p_1 = tau p_a - rho p_b,
//   x_2 = rho x_a + tau x_b,  p_2 = rho p_a + tau p_b.
// Returns the maximum absolute deviation between the two sides over the
// probe points; detection loss is not part of this identity.
inline double rotation_check(const ModelSpec& model,
                             const std::vector<PhaseSpacePoint>& points) {
    model.validate();
    const auto out_state = make_true_state(model, false);
    const CMatrix rho_in = make_input_state(model.eta_prep, model.cutoff).elements;
    const int d = model.cutoff.dim();
    CMatrix vac = CMatrix::Zero(d, d);
    vac(0, 0) = 1.0;
    const double tau = model.bs.tau;
    const double rho = model.bs.rho;
    double worst = 0.0;
    for (const auto& pt : points) {
        const double lhs = two_mode_wigner(out_state, pt);
        const double x1 = tau * pt.x_a - rho * pt.x_b;
        const double p1 = tau * pt.p_a - rho * pt.p_b;
        const double x2 = rho * pt.x_a + tau * pt.x_b;
        const double p2 = rho * pt.p_a + tau * pt.p_b;
        const double rhs =
            single_mode_wigner(rho_in, x1, p1) * single_mode_wigner(vac, x2, p2);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

}  // namespace dualrail
