#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dualrail/errors.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/integrate.hpp"

// Quadrature wavefunctions and homodyne POVM elements. Convention: vacuum
// quadrature variance 1/2, psi_0(x) = pi^{-1/4} exp(-x^2/2). The local
// oscillator on arm B is fixed at phase 0; arm A carries the full relative
// phase delta_theta.

namespace dualrail {

// psi_0 .. psi_n at x via the stable two-term recurrence
// psi_{n+1} = x sqrt(2/(n+1)) psi_n - sqrt(n/(n+1)) psi_{n-1}.
inline Eigen::VectorXd fock_wavefunction_table(int n_top, double x) {
    if (n_top < 0) throw ValidationError("fock_wavefunction_table: n_top must be >= 0");
    Eigen::VectorXd psi(n_top + 1);
    psi(0) = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);
    if (n_top >= 1) psi(1) = M_SQRT2 * x * psi(0);
    for (int n = 1; n < n_top; ++n)
        psi(n + 1) = x * std::sqrt(2.0 / (n + 1)) * psi(n) -
                     std::sqrt(static_cast<double>(n) / (n + 1)) * psi(n - 1);
    return psi;
}

inline double fock_wavefunction(int n, double x) {
    return fock_wavefunction_table(n, x)(n);
}

// Relative local-oscillator phase, stored wrapped into [0, 2*pi).
struct PhaseSetting {
    double delta_theta = 0.0;

    PhaseSetting() = default;
    explicit PhaseSetting(double v) {
        if (!std::isfinite(v)) throw ValidationError("delta_theta must be finite");
        delta_theta = std::fmod(v, 2.0 * M_PI);
        if (delta_theta < 0.0) delta_theta += 2.0 * M_PI;
    }
};

// Half-open quadrature interval [lo, hi); endpoints may be infinite.
struct QuadBin {
    double lo = 0.0;
    double hi = 0.0;

    void validate() const {
        if (std::isnan(lo) || std::isnan(hi) || !(lo < hi))
            throw ValidationError("QuadBin requires lo < hi");
    }
};

// integral of psi_m psi_n over the bin.
inline double wavefunction_overlap(int m, int n, const QuadBin& bin,
                                   double abs_tol = 1e-10) {
    bin.validate();
    const int top = std::max(m, n);
    auto f = [m, n, top](double x) {
        const Eigen::VectorXd psi = fock_wavefunction_table(top, x);
        return psi(m) * psi(n);
    };
    return integrate(f, bin.lo, bin.hi, abs_tol);
}

namespace detail {

inline RMatrix povm_overlap_base(const QuadBin& bin, int dim, double abs_tol) {
    RMatrix base(dim, dim);
    for (int m = 0; m < dim; ++m)
        for (int n = m; n < dim; ++n) {
            const double v = wavefunction_overlap(m, n, bin, abs_tol);
            base(m, n) = v;
            base(n, m) = v;
        }
    return base;
}

inline CMatrix with_lo_phase(const CMatrix& base, double theta) {
    const auto dim = base.rows();
    CMatrix out(dim, dim);
    for (Eigen::Index m = 0; m < dim; ++m)
        for (Eigen::Index n = 0; n < dim; ++n)
            out(m, n) = base(m, n) * std::polar(1.0, static_cast<double>(n - m) * theta);
    return out;
}

}  // namespace detail

// Lossless homodyne POVM element <m|Pi(theta, bin)|n> =
// e^{i(n-m)theta} * integral_bin psi_m psi_n.
inline CMatrix ideal_povm_element(double theta, const QuadBin& bin, FockCutoff cutoff,
                                  double abs_tol = 1e-10) {
    cutoff.validate();
    return detail::with_lo_phase(
        detail::povm_overlap_base(bin, cutoff.dim(), abs_tol).cast<Complex>(), theta);
}

// POVM element of an inefficient homodyne detector: the loss-channel adjoint
// applied to the ideal element. Built three levels above the cutoff and then
// truncated; the adjoint only moves weight upward in photon number, so the
// retained block is unaffected by the extra headroom.
inline CMatrix adjusted_povm_element(double theta, const QuadBin& bin, double eta_det,
                                     FockCutoff cutoff, double abs_tol = 1e-10) {
    cutoff.validate();
    if (!(eta_det > 0.0 && eta_det <= 1.0))
        throw ValidationError("eta_det must lie in (0, 1]");
    const int work_dim = cutoff.dim() + 3;
    CMatrix base = detail::povm_overlap_base(bin, work_dim, abs_tol).cast<Complex>();
    if (eta_det < 1.0) base = loss_adjoint_matrix(base, eta_det);
    const CMatrix trimmed = base.topLeftCorner(cutoff.dim(), cutoff.dim());
    return detail::with_lo_phase(trimmed, theta);
}

// Product POVM over a phase grid and a shared quadrature binning. Mode A
// elements carry the phase of their bin (optionally averaged over the bin
// width); mode B elements sit at phase 0. Elements are stored per mode and
// combined by Kronecker product on demand.
struct PovmSet {
    FockCutoff cutoff{};
    double eta_det = 1.0;
    double phase_bin_width = 0.0;  // > 0 means elements are bin-averaged
    std::vector<PhaseSetting> phases;
    std::vector<QuadBin> bins;
    std::vector<CMatrix> mode_a;  // [phase * bins.size() + bin]
    std::vector<CMatrix> mode_b;  // [bin]

    int n_phases() const { return static_cast<int>(phases.size()); }
    int n_bins() const { return static_cast<int>(bins.size()); }
    std::int64_t outcome_count() const {
        return static_cast<std::int64_t>(phases.size()) * n_bins() * n_bins();
    }

    const CMatrix& a_element(int phase, int bin) const {
        return mode_a[static_cast<std::size_t>(phase) * bins.size() + bin];
    }
    const CMatrix& b_element(int bin) const { return mode_b[bin]; }
    CMatrix element(int phase, int bin_a, int bin_b) const {
        return detail::kron(a_element(phase, bin_a), b_element(bin_b));
    }

    // max |sum_{a,b} Pi(phase,a,b) - I| over matrix entries.
    double completeness_error(int phase) const {
        const int d = cutoff.dim();
        CMatrix sum_a = CMatrix::Zero(d, d);
        CMatrix sum_b = CMatrix::Zero(d, d);
        for (int b = 0; b < n_bins(); ++b) {
            sum_a += a_element(phase, b);
            sum_b += b_element(b);
        }
        const CMatrix two = detail::kron(sum_a, sum_b);
        return (two - CMatrix::Identity(two.rows(), two.cols())).cwiseAbs().maxCoeff();
    }

    static PovmSet build(FockCutoff cutoff, double eta_det, int phase_count,
                         const std::vector<double>& quad_edges,
                         bool average_over_phase_bin = true);

    void save(const std::string& path) const;
    static PovmSet load(const std::string& path);
};

inline PovmSet PovmSet::build(FockCutoff cutoff, double eta_det, int phase_count,
                              const std::vector<double>& quad_edges,
                              bool average_over_phase_bin) {
    cutoff.validate();
    if (!(eta_det > 0.0 && eta_det <= 1.0))
        throw ValidationError("eta_det must lie in (0, 1]");
    if (phase_count < 1) throw ValidationError("phase_count must be >= 1");
    if (quad_edges.size() < 2)
        throw ValidationError("quad_edges must contain at least two edges");
    for (std::size_t i = 0; i + 1 < quad_edges.size(); ++i)
        if (!(quad_edges[i] < quad_edges[i + 1]))
            throw ValidationError("quad_edges must be strictly increasing");

    PovmSet set;
    set.cutoff = cutoff;
    set.eta_det = eta_det;
    const double width = 2.0 * M_PI / phase_count;
    set.phase_bin_width = average_over_phase_bin ? width : 0.0;
    for (int p = 0; p < phase_count; ++p)
        set.phases.emplace_back((p + 0.5) * width);
    for (std::size_t i = 0; i + 1 < quad_edges.size(); ++i)
        set.bins.push_back(QuadBin{quad_edges[i], quad_edges[i + 1]});

    const int d = cutoff.dim();
    const int work_dim = d + 3;
    std::vector<CMatrix> trimmed;
    trimmed.reserve(set.bins.size());
    for (const auto& bin : set.bins) {
        CMatrix base = detail::povm_overlap_base(bin, work_dim, 1e-10).cast<Complex>();
        if (eta_det < 1.0) base = loss_adjoint_matrix(base, eta_det);
        trimmed.push_back(base.topLeftCorner(d, d));
    }

    // Averaging e^{i(n-m)theta} over a bin of width w multiplies the element
    // by sinc((n-m) w / 2); the quadrature part does not depend on theta.
    RMatrix damp = RMatrix::Ones(d, d);
    if (average_over_phase_bin) {
        for (int m = 0; m < d; ++m)
            for (int n = 0; n < d; ++n) {
                const double arg = 0.5 * width * (n - m);
                damp(m, n) = (arg == 0.0) ? 1.0 : std::sin(arg) / arg;
            }
    }

    set.mode_a.reserve(set.phases.size() * set.bins.size());
    for (const auto& phase : set.phases)
        for (const auto& base : trimmed) {
            CMatrix el = detail::with_lo_phase(base, phase.delta_theta);
            if (average_over_phase_bin) el = el.cwiseProduct(damp.cast<Complex>());
            set.mode_a.push_back(std::move(el));
        }
    set.mode_b = trimmed;  // phase 0, no averaging on the fixed arm
    return set;
}

namespace detail {

inline void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::ifstream& in, double* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw ValidationError("POVM cache file is truncated");
}

}  // namespace detail

inline void PovmSet::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open POVM cache file for writing: " + path);
    const char magic[8] = {'D', 'R', 'P', 'O', 'V', 'M', '0', '1'};
    out.write(magic, sizeof(magic));
    const std::int64_t header[3] = {cutoff.n_max, n_phases(), n_bins()};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    const double scalars[2] = {eta_det, phase_bin_width};
    detail::write_doubles(out, scalars, 2);
    for (const auto& ph : phases) detail::write_doubles(out, &ph.delta_theta, 1);
    for (const auto& bin : bins) {
        detail::write_doubles(out, &bin.lo, 1);
        detail::write_doubles(out, &bin.hi, 1);
    }
    auto dump = [&](const CMatrix& m) {
        detail::write_doubles(out, reinterpret_cast<const double*>(m.data()),
                              static_cast<std::size_t>(m.size()) * 2);
    };
    for (const auto& m : mode_a) dump(m);
    for (const auto& m : mode_b) dump(m);
    if (!out) throw ValidationError("failed writing POVM cache file: " + path);
}

inline PovmSet PovmSet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open POVM cache file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, "DRPOVM01", 8) != 0)
        throw ValidationError("not a POVM cache file: " + path);
    std::int64_t header[3];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || header[0] < 1 || header[1] < 1 || header[2] < 1)
        throw ValidationError("POVM cache header is invalid: " + path);
    PovmSet set;
    set.cutoff = FockCutoff{static_cast<int>(header[0])};
    const auto n_phase = static_cast<std::size_t>(header[1]);
    const auto n_bin = static_cast<std::size_t>(header[2]);
    double scalars[2];
    detail::read_doubles(in, scalars, 2);
    set.eta_det = scalars[0];
    set.phase_bin_width = scalars[1];
    set.phases.resize(n_phase);
    for (auto& ph : set.phases) detail::read_doubles(in, &ph.delta_theta, 1);
    set.bins.resize(n_bin);
    for (auto& bin : set.bins) {
        detail::read_doubles(in, &bin.lo, 1);
        detail::read_doubles(in, &bin.hi, 1);
    }
    const int d = set.cutoff.dim();
    auto slurp = [&](CMatrix& m) {
        m.resize(d, d);
        detail::read_doubles(in, reinterpret_cast<double*>(m.data()),
                             static_cast<std::size_t>(m.size()) * 2);
    };
    set.mode_a.resize(n_phase * n_bin);
    for (auto& m : set.mode_a) slurp(m);
    set.mode_b.resize(n_bin);
    for (auto& m : set.mode_b) slurp(m);
    return set;
}

// Joint quadrature density at (x_a, x_b) for LO phase difference
// delta_theta. Detection loss is folded into the state (the channel is dual
// to adjusting the POVM, and the state side is cheaper pointwise).
inline double joint_pdf(const TwoModeDensityMatrix& state, PhaseSetting phase,
                        double x_a, double x_b, double eta_det = 1.0) {
    if (!(eta_det > 0.0 && eta_det <= 1.0))
        throw ValidationError("eta_det must lie in (0, 1]");
    TwoModeDensityMatrix rho = phase_average(state);
    if (eta_det < 1.0) rho = apply_loss(rho, eta_det, LossMode::Both);
    const int d = rho.cutoff.dim();
    const Eigen::VectorXd psi_a = fock_wavefunction_table(d - 1, x_a);
    const Eigen::VectorXd psi_b = fock_wavefunction_table(d - 1, x_b);
    std::vector<Complex> w(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k)
        w[k] = psi_a(k) * std::polar(1.0, k * phase.delta_theta);
    Complex acc = 0.0;
    for (int k = 0; k < d; ++k)
        for (int m = 0; m < d; ++m) {
            const Complex wa = w[k] * std::conj(w[m]);
            if (wa == Complex(0.0, 0.0)) continue;
            Complex inner = 0.0;
            for (int l = 0; l < d; ++l)
                for (int n = 0; n < d; ++n)
                    inner += rho.at(k, l, m, n) * (psi_b(n) * psi_b(l));
            acc += wa * inner;
        }
    double v = acc.real();
    if (v < 0.0 && v > -1e-12) v = 0.0;
    return v;
}

// At a symmetric splitter and delta_theta = pi/2 the joint density equals
// the Husimi Q function of the (loss-degraded) input at alpha = x_a + i x_b.
struct QFunctionCheck {
    double pdf = 0.0;
    double q = 0.0;
};

inline QFunctionCheck q_function_check(const ModelSpec& model, double x_a, double x_b) {
    model.validate();
    if (std::abs(model.bs.tau_squared() - 0.5) > 1e-9)
        throw ValidationError("q_function_check requires a symmetric splitter (tau^2 = 0.5)");
    const auto state = make_true_state(model, false);
    const double pdf = joint_pdf(state, PhaseSetting(0.5 * M_PI), x_a, x_b, model.eta_det);

    CMatrix rho_in = make_input_state(model.eta_prep, model.cutoff).elements;
    if (model.eta_det < 1.0) rho_in = apply_loss_matrix(rho_in, model.eta_det);
    const Complex alpha(x_a, x_b);
    const int d = model.cutoff.dim();
    Eigen::VectorXcd coh(d);
    const double norm = std::exp(-0.5 * std::norm(alpha));
    Complex apow = 1.0;
    for (int n = 0; n < d; ++n) {
        coh(n) = norm * apow / std::sqrt(detail::factorial(n));
        apow *= alpha;
    }
    const double q = (coh.adjoint() * rho_in * coh)(0, 0).real() / M_PI;
    return {pdf, q};
}

}  // namespace dualrail
