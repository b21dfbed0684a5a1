#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "dualrail/errors.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/homodyne.hpp"
#include "dualrail/parallel.hpp"
#include "dualrail/sampler.hpp"

// Iterative maximum-likelihood state reconstruction over binned dual-homodyne
// records: rho <- N[ R(rho) rho R(rho) ] with R = sum_j (f_j / p_j) Pi_j,
// dephased onto photon-number sectors after every step. POVM elements stay
// factorized per mode; probabilities and the R operator are assembled by
// contracting one mode at a time.

namespace dualrail {

// Two half-infinite tails around 40 equal bins on [-5, 5].
inline std::vector<double> default_quad_edges() {
    std::vector<double> edges;
    edges.reserve(43);
    edges.push_back(-std::numeric_limits<double>::infinity());
    for (int i = 0; i <= 40; ++i) edges.push_back(-5.0 + 0.25 * i);
    edges.push_back(std::numeric_limits<double>::infinity());
    return edges;
}

struct ReconConfig {
    int n_max = 5;
    double eta_det = 1.0;         // detector efficiency compensated in the POVM
    int phase_bin_count = 12;
    std::vector<double> quad_edges = default_quad_edges();
    int max_iterations = 2000;
    double tol = 1e-9;            // relative log-likelihood gain per iteration
    bool average_phase_in_bin = true;

    FockCutoff cutoff() const { return FockCutoff{n_max}; }
    void validate() const {
        cutoff().validate();
        if (!(eta_det > 0.0 && eta_det <= 1.0))
            throw ValidationError("eta_det must lie in (0, 1]");
        if (phase_bin_count < 1)
            throw ValidationError("phase_bin_count must be >= 1");
        if (quad_edges.size() < 2)
            throw ValidationError("quad_edges must contain at least two edges");
        for (std::size_t i = 0; i + 1 < quad_edges.size(); ++i)
            if (!(quad_edges[i] < quad_edges[i + 1]))
                throw ValidationError("quad_edges must be strictly increasing");
        if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
        if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
    }
};

inline std::shared_ptr<const PovmSet> make_povm(const ReconConfig& config) {
    config.validate();
    return std::make_shared<const PovmSet>(
        PovmSet::build(config.cutoff(), config.eta_det, config.phase_bin_count,
                       config.quad_edges, config.average_phase_in_bin));
}

struct Histogram {
    std::shared_ptr<const PovmSet> povm;
    std::vector<double> counts;  // [(phase * n_bins + bin_a) * n_bins + bin_b]

    std::size_t index(int phase, int bin_a, int bin_b) const {
        const auto nb = static_cast<std::size_t>(povm->n_bins());
        return (static_cast<std::size_t>(phase) * nb + bin_a) * nb + bin_b;
    }
    double total() const {
        double t = 0.0;
        for (const double c : counts) t += c;
        return t;
    }
};

inline Histogram bin_data(const std::vector<QuadratureSample>& samples,
                          std::shared_ptr<const PovmSet> povm) {
    if (!povm) throw ValidationError("bin_data: null POVM");
    const int n_phase = povm->n_phases();
    const auto& edges_bins = povm->bins;
    Histogram hist{std::move(povm),
                   std::vector<double>(static_cast<std::size_t>(n_phase) *
                                           edges_bins.size() * edges_bins.size(),
                                       0.0)};
    auto quad_bin = [&](double x) {
        int lo = 0, hi = static_cast<int>(edges_bins.size()) - 1;
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (x < edges_bins[mid].hi)
                hi = mid;
            else
                lo = mid + 1;
        }
        return lo;
    };
    const double phase_width = 2.0 * M_PI / n_phase;
    for (const auto& s : samples) {
        if (!std::isfinite(s.delta_theta) || !std::isfinite(s.x_a) ||
            !std::isfinite(s.x_b))
            throw ValidationError("bin_data: non-finite sample");
        const double theta = PhaseSetting(s.delta_theta).delta_theta;
        const int p = std::min(n_phase - 1, static_cast<int>(theta / phase_width));
        hist.counts[hist.index(p, quad_bin(s.x_a), quad_bin(s.x_b))] += 1.0;
    }
    return hist;
}

inline Histogram bin_data(const std::vector<QuadratureSample>& samples,
                          const ReconConfig& config) {
    return bin_data(samples, make_povm(config));
}

namespace detail {

// p_{pab} = Tr[rho (PiA_{pa} x PiB_b)], contracted A side first.
inline void phase_outcome_probabilities(const CMatrix& rho, const PovmSet& povm,
                                        int phase, double* out) {
    const int d = povm.cutoff.dim();
    const int nb = povm.n_bins();
    CMatrix z(d, d);
    for (int a = 0; a < nb; ++a) {
        const CMatrix& pa = povm.a_element(phase, a);
        z.setZero();
        for (int k = 0; k < d; ++k)
            for (int m = 0; m < d; ++m) {
                const Complex w = pa(m, k);
                for (int l = 0; l < d; ++l)
                    for (int n = 0; n < d; ++n) z(l, n) += w * rho(k * d + l, m * d + n);
            }
        for (int b = 0; b < nb; ++b) {
            const CMatrix& pb = povm.b_element(b);
            Complex acc = 0.0;
            for (int l = 0; l < d; ++l)
                for (int n = 0; n < d; ++n) acc += z(l, n) * pb(n, l);
            out[static_cast<std::size_t>(a) * nb + b] = acc.real();
        }
    }
}

inline CMatrix build_r_operator(const PovmSet& povm, const std::vector<double>& counts,
                                const std::vector<double>& probs, int threads) {
    const int d = povm.cutoff.dim();
    const int nb = povm.n_bins();
    const int np = povm.n_phases();
    std::vector<CMatrix> parts(static_cast<std::size_t>(np));
    parallel_chunks(
        np, 1,
        [&](std::int64_t, std::int64_t begin, std::int64_t end) {
            for (std::int64_t p = begin; p < end; ++p) {
                CMatrix part = CMatrix::Zero(d * d, d * d);
                CMatrix s(d, d);
                for (int a = 0; a < nb; ++a) {
                    s.setZero();
                    bool any = false;
                    for (int b = 0; b < nb; ++b) {
                        const auto j =
                            (static_cast<std::size_t>(p) * nb + a) * nb + b;
                        if (counts[j] == 0.0) continue;
                        if (!(probs[j] > 0.0))
                            throw DegenerateSupportError(
                                "reconstruction: outcome with counts has non-positive "
                                "model probability");
                        s += (counts[j] / probs[j]) * povm.b_element(b);
                        any = true;
                    }
                    if (!any) continue;
                    const CMatrix& pa = povm.a_element(static_cast<int>(p), a);
                    for (int k = 0; k < d; ++k)
                        for (int m = 0; m < d; ++m) {
                            const Complex w = pa(k, m);
                            for (int l = 0; l < d; ++l)
                                for (int n = 0; n < d; ++n)
                                    part(k * d + l, m * d + n) += w * s(l, n);
                        }
                }
                parts[static_cast<std::size_t>(p)] = std::move(part);
            }
        },
        threads);
    CMatrix r = CMatrix::Zero(d * d, d * d);
    for (const auto& part : parts) r += part;  // fixed order, any thread count
    return r;
}

inline void zero_cross_sector(CMatrix& m, int d) {
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
            for (int mm = 0; mm < d; ++mm)
                for (int n = 0; n < d; ++n)
                    if (k + l != mm + n) m(k * d + l, mm * d + n) = 0.0;
}

}  // namespace detail

inline std::vector<double> outcome_probabilities(const CMatrix& rho,
                                                 const PovmSet& povm,
                                                 int threads = 1) {
    const int nb = povm.n_bins();
    const int np = povm.n_phases();
    std::vector<double> probs(static_cast<std::size_t>(np) * nb * nb);
    parallel_chunks(
        np, 1,
        [&](std::int64_t, std::int64_t begin, std::int64_t end) {
            for (std::int64_t p = begin; p < end; ++p)
                detail::phase_outcome_probabilities(
                    rho, povm, static_cast<int>(p),
                    probs.data() + static_cast<std::size_t>(p) * nb * nb);
        },
        threads);
    return probs;
}

inline double log_likelihood(const TwoModeDensityMatrix& state, const Histogram& hist,
                             int threads = 1) {
    if (!hist.povm) throw ValidationError("log_likelihood: null POVM");
    if (!(state.cutoff == hist.povm->cutoff))
        throw ValidationError("log_likelihood: cutoff mismatch");
    const auto probs = outcome_probabilities(state.elements, *hist.povm, threads);
    double ll = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (hist.counts[j] == 0.0) continue;
        if (!(probs[j] > 0.0))
            throw DegenerateSupportError(
                "log_likelihood: outcome with counts has non-positive probability");
        ll += hist.counts[j] * std::log(probs[j]);
    }
    return ll;
}

struct ReconDiagnostics {
    int iterations = 0;
    bool converged = false;
    int dilution_events = 0;
    double final_log_likelihood = 0.0;
    std::vector<double> log_likelihood_deltas;
};

struct ReconResult {
    TwoModeDensityMatrix state;
    ReconDiagnostics diagnostics;
};

inline ReconResult reconstruct(const Histogram& hist, const ReconConfig& config,
                               int threads = 1) {
    config.validate();
    if (!hist.povm) throw ValidationError("reconstruct: null POVM");
    const PovmSet& povm = *hist.povm;
    if (!(povm.cutoff == config.cutoff()))
        throw ValidationError("reconstruct: histogram POVM does not match config cutoff");
    if (hist.counts.size() != static_cast<std::size_t>(povm.outcome_count()))
        throw ValidationError("reconstruct: histogram size does not match POVM");
    const double total = hist.total();
    if (!(total > 0.0)) throw ValidationError("reconstruct: histogram is empty");

    const int d = povm.cutoff.dim();
    const int bigd = d * d;
    CMatrix rho = CMatrix::Identity(bigd, bigd) / static_cast<double>(bigd);

    auto loglike_of = [&](const std::vector<double>& probs) {
        double ll = 0.0;
        for (std::size_t j = 0; j < probs.size(); ++j) {
            if (hist.counts[j] == 0.0) continue;
            if (!(probs[j] > 0.0))
                throw DegenerateSupportError(
                    "reconstruction: outcome with counts has non-positive probability");
            ll += hist.counts[j] * std::log(probs[j]);
        }
        return ll;
    };
    auto project = [&](CMatrix m) {
        m = ((m + m.adjoint()) * 0.5).eval();
        detail::zero_cross_sector(m, d);
        const double tr = m.trace().real();
        if (!(tr > 0.0)) throw NumericError("reconstruction: candidate trace vanished");
        return (m / tr).eval();
    };

    std::vector<double> probs = outcome_probabilities(rho, povm, threads);
    double ll = loglike_of(probs);

    ReconDiagnostics diag;
    diag.log_likelihood_deltas.reserve(static_cast<std::size_t>(config.max_iterations));
    const double round_off = 1e-10;

    for (int it = 0; it < config.max_iterations; ++it) {
        const CMatrix r = detail::build_r_operator(povm, hist.counts, probs, threads);
        CMatrix cand = project(r * rho * r);
        std::vector<double> cand_probs = outcome_probabilities(cand, povm, threads);
        double cand_ll = loglike_of(cand_probs);

        if (cand_ll < ll - round_off * std::max(1.0, std::abs(ll))) {
            // Diluted step (I + eps Rbar) rho (I + eps Rbar), halving eps
            // until the likelihood stops decreasing.
            ++diag.dilution_events;
            const CMatrix rbar = r / total;
            const CMatrix eye = CMatrix::Identity(bigd, bigd);
            double eps = 0.5;
            while (true) {
                const CMatrix m = eye + eps * (rbar - eye);
                cand = project(m * rho * m.adjoint());
                cand_probs = outcome_probabilities(cand, povm, threads);
                cand_ll = loglike_of(cand_probs);
                if (cand_ll >= ll - round_off * std::max(1.0, std::abs(ll))) break;
                eps *= 0.5;
                if (eps < 1e-7) break;  // accept; the recorded delta shows the miss
            }
        }

        const double delta = cand_ll - ll;
        diag.log_likelihood_deltas.push_back(delta);
        rho = std::move(cand);
        probs = std::move(cand_probs);
        ll = cand_ll;
        ++diag.iterations;
        if (std::abs(delta) <= config.tol * std::max(1.0, std::abs(ll))) {
            diag.converged = true;
            break;
        }
    }
    diag.final_log_likelihood = ll;
    return ReconResult{TwoModeDensityMatrix::checked(povm.cutoff, std::move(rho)),
                       std::move(diag)};
}

// Interpret a reconstructed state as the one-parameter mixture family:
// eta_hat from the vacuum weight, tau_sq_hat from the transmitted one-photon
// weight, residual = Frobenius distance to the fitted family member.
struct EfficiencyFit {
    double eta_hat = 0.0;
    double tau_sq_hat = 0.0;
    double residual = 0.0;
};

inline EfficiencyFit effective_efficiency(const TwoModeDensityMatrix& state) {
    EfficiencyFit fit;
    fit.eta_hat = std::clamp(1.0 - state.at(0, 0, 0, 0).real(), 0.0, 1.0);
    fit.tau_sq_hat =
        fit.eta_hat > 1e-12
            ? std::clamp(state.at(1, 0, 1, 0).real() / fit.eta_hat, 0.0, 1.0)
            : 0.0;
    ModelSpec model;
    model.eta_prep = fit.eta_hat;
    model.eta_det = 1.0;
    model.bs = BeamSplitterSpec::from_tau_squared(fit.tau_sq_hat);
    model.cutoff = state.cutoff;
    const auto fitted = make_true_state(model, false);
    fit.residual = (state.elements - fitted.elements).norm();
    return fit;
}

}  // namespace dualrail
