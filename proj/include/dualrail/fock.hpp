#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "dualrail/errors.hpp"

// Truncated two-mode Fock space: density matrices, the beam-splitter
// unitary, the Bernoulli photon-loss channel and its adjoint, dephasing to
// the photon-number sectors, and the fidelity metric.
//
// Two-mode basis order: |k,l> sits at flat index k * (n_max+1) + l, mode A
// first. All operators on the pair space use the same flattening.

namespace dualrail {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kEigenvalueFloor = -1e-8;
inline constexpr double kSupportTol = 1e-12;

namespace detail {

inline double ipow(double base, int exp) {
    double r = 1.0;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Principal square root of a Hermitian PSD matrix; negative round-off
// eigenvalues are clamped to zero.
inline CMatrix matrix_sqrt_psd(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es((m + m.adjoint()) * 0.5);
    Eigen::VectorXd vals = es.eigenvalues();
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        vals(i) = std::sqrt(std::max(0.0, vals(i)));
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

struct FockCutoff {
    int n_max = 5;

    int dim() const { return n_max + 1; }
    int pair_dim() const { return dim() * dim(); }
    void validate() const {
        if (n_max < 1) throw ValidationError("n_max must be >= 1");
    }
    bool operator==(const FockCutoff&) const = default;
};

// Real transmission/reflection amplitude pair with tau^2 + rho^2 = 1.
struct BeamSplitterSpec {
    double tau = M_SQRT1_2;
    double rho = M_SQRT1_2;

    static BeamSplitterSpec from_tau_squared(double tau_sq) {
        if (!(tau_sq >= 0.0 && tau_sq <= 1.0))
            throw ValidationError("tau_squared must lie in [0, 1]");
        return {std::sqrt(tau_sq), std::sqrt(1.0 - tau_sq)};
    }
    double tau_squared() const { return tau * tau; }
    void validate() const {
        if (!(tau >= 0.0) || !(rho >= 0.0) ||
            std::abs(tau * tau + rho * rho - 1.0) > 1e-12)
            throw ValidationError(
                "beam splitter amplitudes must be non-negative with tau^2 + rho^2 = 1");
    }
};

struct SingleModeDensityMatrix {
    CMatrix elements;  // dim x dim in the Fock basis

    int dim() const { return static_cast<int>(elements.rows()); }

    double hermiticity_error() const {
        return (elements - elements.adjoint()).cwiseAbs().maxCoeff();
    }
    double trace_error() const { return std::abs(elements.trace().real() - 1.0) +
                                        std::abs(elements.trace().imag()); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<CMatrix> es((elements + elements.adjoint()) * 0.5);
        return es.eigenvalues().minCoeff();
    }
    void validate() const {
        if (elements.rows() != elements.cols() || elements.rows() < 1)
            throw ValidationError("density matrix must be square and non-empty");
        if (hermiticity_error() > kHermitianTol)
            throw ValidationError("density matrix is not Hermitian");
        if (trace_error() > kTraceTol)
            throw ValidationError("density matrix trace must equal 1");
        if (min_eigenvalue() < kEigenvalueFloor)
            throw ValidationError("density matrix has a negative eigenvalue");
    }

    static SingleModeDensityMatrix checked(CMatrix m) {
        SingleModeDensityMatrix out{std::move(m)};
        out.validate();
        return out;
    }
};

struct TwoModeDensityMatrix {
    FockCutoff cutoff;
    CMatrix elements;  // pair_dim x pair_dim, row index = k*dim + l

    int index(int k, int l) const { return k * cutoff.dim() + l; }
    Complex at(int k, int l, int m, int n) const {
        return elements(index(k, l), index(m, n));
    }

    double hermiticity_error() const {
        return (elements - elements.adjoint()).cwiseAbs().maxCoeff();
    }
    double trace_error() const { return std::abs(elements.trace().real() - 1.0) +
                                        std::abs(elements.trace().imag()); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<CMatrix> es((elements + elements.adjoint()) * 0.5);
        return es.eigenvalues().minCoeff();
    }
    // Largest |rho_{kl,mn}| with k+l != m+n.
    double max_cross_sector() const {
        const int d = cutoff.dim();
        double worst = 0.0;
        for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l)
                for (int m = 0; m < d; ++m)
                    for (int n = 0; n < d; ++n)
                        if (k + l != m + n)
                            worst = std::max(worst, std::abs(at(k, l, m, n)));
        return worst;
    }
    void validate() const {
        cutoff.validate();
        if (elements.rows() != cutoff.pair_dim() || elements.cols() != cutoff.pair_dim())
            throw ValidationError("two-mode density matrix has wrong dimensions");
        if (hermiticity_error() > kHermitianTol)
            throw ValidationError("two-mode density matrix is not Hermitian");
        if (trace_error() > kTraceTol)
            throw ValidationError("two-mode density matrix trace must equal 1");
        if (min_eigenvalue() < kEigenvalueFloor)
            throw ValidationError("two-mode density matrix has a negative eigenvalue");
    }

    static TwoModeDensityMatrix checked(FockCutoff cut, CMatrix m) {
        TwoModeDensityMatrix out{cut, std::move(m)};
        out.validate();
        return out;
    }
    static TwoModeDensityMatrix unchecked(FockCutoff cut, CMatrix m) {
        return TwoModeDensityMatrix{cut, std::move(m)};
    }
};

// Physical model of one experimental run.
struct ModelSpec {
    double eta_prep = 0.64;  // one-photon weight of the heralded input
    double eta_det = 0.86;   // detection efficiency applied on both arms
    BeamSplitterSpec bs{};
    FockCutoff cutoff{};

    void validate() const {
        if (!(eta_prep >= 0.0 && eta_prep <= 1.0))
            throw ValidationError("eta_prep must lie in [0, 1]");
        if (!(eta_det > 0.0 && eta_det <= 1.0))
            throw ValidationError("eta_det must lie in (0, 1]");
        bs.validate();
        cutoff.validate();
    }
};

// eta |1><1| + (1-eta) |0><0| at the given cutoff.
inline SingleModeDensityMatrix make_input_state(double eta_prep, FockCutoff cutoff) {
    if (!(eta_prep >= 0.0 && eta_prep <= 1.0))
        throw ValidationError("eta_prep must lie in [0, 1]");
    cutoff.validate();
    CMatrix m = CMatrix::Zero(cutoff.dim(), cutoff.dim());
    m(0, 0) = 1.0 - eta_prep;
    m(1, 1) = eta_prep;
    return SingleModeDensityMatrix::checked(std::move(m));
}

// Beam-splitter matrix elements on the truncated pair space. The convention
// is U a+ U+ = tau a+ - rho b+ and U b+ U+ = rho a+ + tau b+, so the
// one-photon state |1,0> maps to tau |1,0> - rho |0,1>. Photon number is
// conserved; sectors with k+l <= n_max fit in the box and are exact there.
struct BeamSplitterUnitary {
    FockCutoff cutoff;
    RMatrix matrix;  // pair_dim x pair_dim, real in this convention

    bool sector_exact(int total_photons) const {
        return total_photons >= 0 && total_photons <= cutoff.n_max;
    }
};

inline BeamSplitterUnitary beam_splitter_unitary(const BeamSplitterSpec& bs,
                                                 FockCutoff cutoff) {
    bs.validate();
    cutoff.validate();
    const int d = cutoff.dim();
    RMatrix u = RMatrix::Zero(d * d, d * d);
    for (int k = 0; k < d; ++k) {
        for (int l = 0; l < d; ++l) {
            const int col = k * d + l;
            for (int m = 0; m < d; ++m) {
                const int n = k + l - m;
                if (n < 0 || n >= d) continue;
                double amp = 0.0;
                for (int i = std::max(0, m - l); i <= std::min(k, m); ++i) {
                    double term = detail::binomial(k, i) * detail::binomial(l, m - i) *
                                  detail::ipow(bs.tau, 2 * i + l - m) *
                                  detail::ipow(bs.rho, k + m - 2 * i);
                    if ((k - i) % 2 != 0) term = -term;
                    amp += term;
                }
                amp *= std::sqrt(detail::factorial(m) * detail::factorial(n) /
                                 (detail::factorial(k) * detail::factorial(l)));
                u(m * d + n, col) = amp;
            }
        }
    }
    return {cutoff, std::move(u)};
}

// Conjugation by the beam splitter. Rejects states with support at or above
// the boundary sector k+l = n_max instead of silently truncating; sectors
// strictly below the boundary transform exactly inside the box.
inline TwoModeDensityMatrix apply_unitary(const TwoModeDensityMatrix& state,
                                          const BeamSplitterUnitary& u) {
    if (!(state.cutoff == u.cutoff))
        throw ValidationError("apply_unitary: cutoff mismatch");
    const int d = state.cutoff.dim();
    for (int k = 0; k < d; ++k) {
        for (int l = 0; l < d; ++l) {
            if (k + l < state.cutoff.n_max) continue;
            const int i = state.index(k, l);
            if (state.elements.row(i).cwiseAbs().maxCoeff() > kSupportTol ||
                state.elements.col(i).cwiseAbs().maxCoeff() > kSupportTol)
                throw TruncationError(
                    "apply_unitary: state has support at total photon number >= n_max; "
                    "raise the cutoff before applying the beam splitter");
        }
    }
    CMatrix out = u.matrix * state.elements * u.matrix.transpose();
    return TwoModeDensityMatrix::unchecked(state.cutoff, std::move(out));
}

// Kraus operators of the Bernoulli loss channel with efficiency eta:
// A_j |m+j> = sqrt(C(m+j, j) eta^m (1-eta)^j) |m>.
inline std::vector<RMatrix> loss_kraus_operators(double eta, int dim) {
    if (!(eta > 0.0 && eta <= 1.0))
        throw ValidationError("loss efficiency must lie in (0, 1]");
    if (dim < 1) throw ValidationError("loss_kraus_operators: dim must be >= 1");
    std::vector<RMatrix> ops;
    for (int j = 0; j < dim; ++j) {
        const double loss_w = detail::ipow(1.0 - eta, j);
        if (j > 0 && loss_w == 0.0) break;
        RMatrix a = RMatrix::Zero(dim, dim);
        for (int m = 0; m + j < dim; ++m)
            a(m, m + j) = std::sqrt(detail::binomial(m + j, j) *
                                    detail::ipow(eta, m) * loss_w);
        ops.push_back(std::move(a));
    }
    return ops;
}

inline CMatrix apply_loss_matrix(const CMatrix& rho, double eta) {
    const auto kraus = loss_kraus_operators(eta, static_cast<int>(rho.rows()));
    CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
    for (const auto& a : kraus) out += a * rho * a.transpose();
    return out;
}

// Heisenberg-picture (adjoint) action of the loss channel on an observable:
// op'_{m+j, n+j} += sqrt(C(m+j,j) C(n+j,j)) eta^{(m+n)/2} (1-eta)^j op_{m,n}.
inline CMatrix loss_adjoint_matrix(const CMatrix& op, double eta) {
    const auto kraus = loss_kraus_operators(eta, static_cast<int>(op.rows()));
    CMatrix out = CMatrix::Zero(op.rows(), op.cols());
    for (const auto& a : kraus) out += a.transpose() * op * a;
    return out;
}

inline SingleModeDensityMatrix apply_loss(const SingleModeDensityMatrix& state,
                                          double eta) {
    return SingleModeDensityMatrix::checked(apply_loss_matrix(state.elements, eta));
}

enum class LossMode { ModeA, ModeB, Both };

inline TwoModeDensityMatrix apply_loss(const TwoModeDensityMatrix& state, double eta,
                                       LossMode mode) {
    const int d = state.cutoff.dim();
    const auto kraus = loss_kraus_operators(eta, d);
    const CMatrix eye = CMatrix::Identity(d, d);
    CMatrix rho = state.elements;
    auto apply_on = [&](bool mode_a) {
        CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
        for (const auto& a : kraus) {
            const CMatrix k = mode_a ? detail::kron(a.cast<Complex>(), eye)
                                     : detail::kron(eye, a.cast<Complex>());
            out += k * rho * k.adjoint();
        }
        rho = std::move(out);
    };
    if (mode == LossMode::ModeA || mode == LossMode::Both) apply_on(true);
    if (mode == LossMode::ModeB || mode == LossMode::Both) apply_on(false);
    return TwoModeDensityMatrix::unchecked(state.cutoff, std::move(rho));
}

// Dephasing onto the total-photon-number sectors: coherences between
// sectors k+l != m+n are erased. Idempotent, trace preserving, PSD.
inline TwoModeDensityMatrix phase_average(const TwoModeDensityMatrix& state) {
    const int d = state.cutoff.dim();
    CMatrix out = state.elements;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
            for (int m = 0; m < d; ++m)
                for (int n = 0; n < d; ++n)
                    if (k + l != m + n) out(state.index(k, l), state.index(m, n)) = 0.0;
    return TwoModeDensityMatrix::unchecked(state.cutoff, std::move(out));
}

// Heralded one-photon input on mode A, vacuum on mode B, mixed at the beam
// splitter; optionally degraded by detection loss eta_det on both arms.
inline TwoModeDensityMatrix make_true_state(const ModelSpec& model,
                                            bool include_detection_loss) {
    model.validate();
    const int d = model.cutoff.dim();
    const auto rho_in = make_input_state(model.eta_prep, model.cutoff);
    CMatrix vac = CMatrix::Zero(d, d);
    vac(0, 0) = 1.0;
    auto joint = TwoModeDensityMatrix::unchecked(
        model.cutoff, detail::kron(rho_in.elements, vac));
    auto out = apply_unitary(joint, beam_splitter_unitary(model.bs, model.cutoff));
    if (include_detection_loss && model.eta_det < 1.0)
        out = apply_loss(out, model.eta_det, LossMode::Both);
    out.validate();
    return out;
}

// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2, clamped to [0, 1].
inline double fidelity(const TwoModeDensityMatrix& a, const TwoModeDensityMatrix& b) {
    if (!(a.cutoff == b.cutoff)) throw ValidationError("fidelity: cutoff mismatch");
    const CMatrix sa = detail::matrix_sqrt_psd(a.elements);
    const CMatrix m = sa * b.elements * sa;
    Eigen::SelfAdjointEigenSolver<CMatrix> es((m + m.adjoint()) * 0.5);
    double s = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        s += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
    return std::clamp(s * s, 0.0, 1.0);
}

inline CMatrix partial_trace_mode_b(const TwoModeDensityMatrix& state) {
    const int d = state.cutoff.dim();
    CMatrix out = CMatrix::Zero(d, d);
    for (int k = 0; k < d; ++k)
        for (int m = 0; m < d; ++m)
            for (int l = 0; l < d; ++l) out(k, m) += state.at(k, l, m, l);
    return out;
}

inline CMatrix partial_trace_mode_a(const TwoModeDensityMatrix& state) {
    const int d = state.cutoff.dim();
    CMatrix out = CMatrix::Zero(d, d);
    for (int l = 0; l < d; ++l)
        for (int n = 0; n < d; ++n)
            for (int k = 0; k < d; ++k) out(l, n) += state.at(k, l, k, n);
    return out;
}

}  // namespace dualrail
