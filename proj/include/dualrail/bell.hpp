#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dualrail/errors.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/homodyne.hpp"
#include "dualrail/integrate.hpp"
#include "dualrail/rng.hpp"
#include "dualrail/sampler.hpp"

// Thresholded Bell-type correlation analysis. A sample is kept only when
// both quadratures exceed the threshold in magnitude; the retained signs
// define a binary outcome pair whose correlation E(delta_theta) is fitted
// with E = -V cos(delta_theta - phi0).

namespace dualrail {

inline constexpr double kBellViolationBound = M_SQRT1_2;  // V > 1/sqrt(2)

struct BellConfig {
    double threshold = 0.85;
    int phase_bin_count = 24;
    int min_retained_per_bin = 50;
    int bootstrap_resamples = 0;  // > 0 adds a bootstrap error cross-check
    std::uint64_t bootstrap_seed = 1;

    void validate() const {
        if (!(threshold >= 0.0) || !std::isfinite(threshold))
            throw ValidationError("threshold must be finite and >= 0");
        if (phase_bin_count < 3)
            throw ValidationError("phase_bin_count must be >= 3");
        if (min_retained_per_bin < 2)
            throw ValidationError("min_retained_per_bin must be >= 2");
        if (bootstrap_resamples < 0)
            throw ValidationError("bootstrap_resamples must be >= 0");
    }
};

// (+/-1, +/-1) outcome pair, or nothing when either arm stays inside the
// threshold window (boundary values are rejected).
inline std::optional<std::pair<int, int>> discriminate(const QuadratureSample& s,
                                                       double threshold) {
    if (!(threshold >= 0.0)) throw ValidationError("threshold must be >= 0");
    if (std::abs(s.x_a) > threshold && std::abs(s.x_b) > threshold)
        return std::make_pair(s.x_a > 0.0 ? 1 : -1, s.x_b > 0.0 ? 1 : -1);
    return std::nullopt;
}

struct BellBin {
    double delta_theta = 0.0;  // bin center
    double e = 0.0;
    double std_error = 0.0;
    std::int64_t retained = 0;
    std::int64_t total = 0;
    bool usable = false;
};

struct CosineFit {
    double amplitude = 0.0;
    double phase_offset = 0.0;
    double sigma_amplitude = 0.0;
    double residual_rms = 0.0;
    int points_used = 0;
};

namespace detail {

// Least squares for E(theta) = a cos(theta) + b sin(theta), reported as
// E = -V cos(theta - phi0). sigma, when given per point, feeds a sandwich
// covariance for V; otherwise the residual scatter is used.
inline CosineFit fit_negative_cosine(const std::vector<double>& theta,
                                     const std::vector<double>& e,
                                     const std::vector<double>& sigma) {
    const std::size_t n = theta.size();
    if (n < 3 || e.size() != n || (!sigma.empty() && sigma.size() != n))
        throw NumericError("cosine fit: need at least 3 usable phase bins");
    double scc = 0.0, sss = 0.0, scs = 0.0, sce = 0.0, sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = std::cos(theta[i]);
        const double s = std::sin(theta[i]);
        scc += c * c;
        sss += s * s;
        scs += c * s;
        sce += c * e[i];
        sse += s * e[i];
    }
    const double det = scc * sss - scs * scs;
    if (std::abs(det) < 1e-12)
        throw NumericError("cosine fit: phase bins are degenerate");
    const double a = (sss * sce - scs * sse) / det;
    const double b = (scc * sse - scs * sce) / det;

    CosineFit fit;
    fit.amplitude = std::hypot(a, b);
    fit.phase_offset = std::atan2(-b, -a);
    if (fit.phase_offset < 0.0) fit.phase_offset += 2.0 * M_PI;
    fit.points_used = static_cast<int>(n);

    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = e[i] - (a * std::cos(theta[i]) + b * std::sin(theta[i]));
        ss_res += r * r;
    }
    fit.residual_rms = std::sqrt(ss_res / static_cast<double>(n));

    // Cov(a,b) = M^{-1} (sum sigma_i^2 u_i u_i^T) M^{-1}, u_i = (cos, sin).
    double vcc = 0.0, vss = 0.0, vcs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = std::cos(theta[i]);
        const double s = std::sin(theta[i]);
        const double s2 = sigma.empty() ? fit.residual_rms * fit.residual_rms
                                        : sigma[i] * sigma[i];
        vcc += s2 * c * c;
        vss += s2 * s * s;
        vcs += s2 * c * s;
    }
    const double i00 = sss / det, i01 = -scs / det, i11 = scc / det;
    const double c00 = i00 * (vcc * i00 + vcs * i01) + i01 * (vcs * i00 + vss * i01);
    const double c01 = i00 * (vcc * i01 + vcs * i11) + i01 * (vcs * i01 + vss * i11);
    const double c11 = i01 * (vcc * i01 + vcs * i11) + i11 * (vcs * i01 + vss * i11);
    if (fit.amplitude > 1e-12) {
        const double ga = a / fit.amplitude;
        const double gb = b / fit.amplitude;
        fit.sigma_amplitude =
            std::sqrt(std::max(0.0, ga * ga * c00 + 2.0 * ga * gb * c01 + gb * gb * c11));
    } else {
        fit.sigma_amplitude = std::sqrt(std::max(c00, c11));
    }
    return fit;
}

inline std::int64_t binomial_draw(std::int64_t n, double p, Xoshiro256StarStar& rng) {
    p = std::clamp(p, 0.0, 1.0);
    if (n <= 0) return 0;
    if (n <= 300) {
        std::int64_t k = 0;
        for (std::int64_t i = 0; i < n; ++i)
            if (rng.uniform() < p) ++k;
        return k;
    }
    const double mu = static_cast<double>(n) * p;
    const double sd = std::sqrt(mu * (1.0 - p));
    const double g = rng.gaussian_pair(1.0).first;
    const auto k = static_cast<std::int64_t>(std::llround(mu + sd * g));
    return std::clamp<std::int64_t>(k, 0, n);
}

}  // namespace detail

struct BellCurve {
    std::vector<BellBin> bins;
    double amplitude = 0.0;
    double phase_offset = 0.0;
    double sigma_amplitude = 0.0;
    double bootstrap_sigma_amplitude = 0.0;  // 0 when the bootstrap is off
    double fit_residual_rms = 0.0;
    double retained_fraction = 0.0;
    int bins_in_fit = 0;
};

inline BellCurve correlation_curve(const std::vector<QuadratureSample>& samples,
                                   const BellConfig& config) {
    config.validate();
    if (samples.empty()) throw ValidationError("correlation_curve: no samples");
    const int np = config.phase_bin_count;
    const double width = 2.0 * M_PI / np;

    std::vector<std::int64_t> total(np, 0), retained(np, 0), sum_prod(np, 0);
    for (const auto& s : samples) {
        const double theta = PhaseSetting(s.delta_theta).delta_theta;
        const int p = std::min(np - 1, static_cast<int>(theta / width));
        ++total[p];
        if (const auto outcome = discriminate(s, config.threshold)) {
            ++retained[p];
            sum_prod[p] += outcome->first * outcome->second;
        }
    }

    BellCurve curve;
    curve.bins.resize(static_cast<std::size_t>(np));
    std::int64_t retained_all = 0;
    for (int p = 0; p < np; ++p) {
        auto& bin = curve.bins[p];
        bin.delta_theta = (p + 0.5) * width;
        bin.total = total[p];
        bin.retained = retained[p];
        retained_all += retained[p];
        if (retained[p] > 0) {
            bin.e = static_cast<double>(sum_prod[p]) / static_cast<double>(retained[p]);
            bin.std_error =
                std::sqrt(std::max(0.0, (1.0 - bin.e * bin.e) /
                                            static_cast<double>(retained[p])));
        }
        bin.usable = retained[p] >= config.min_retained_per_bin;
    }
    curve.retained_fraction =
        static_cast<double>(retained_all) / static_cast<double>(samples.size());

    std::vector<double> theta, e, sigma;
    for (const auto& bin : curve.bins) {
        if (!bin.usable) continue;
        theta.push_back(bin.delta_theta);
        e.push_back(bin.e);
        sigma.push_back(bin.std_error);
    }
    const CosineFit fit = detail::fit_negative_cosine(theta, e, sigma);
    curve.amplitude = fit.amplitude;
    curve.phase_offset = fit.phase_offset;
    curve.sigma_amplitude = fit.sigma_amplitude;
    curve.fit_residual_rms = fit.residual_rms;
    curve.bins_in_fit = fit.points_used;

    if (config.bootstrap_resamples > 0) {
        Xoshiro256StarStar rng(stage_seed(config.bootstrap_seed, "bell-bootstrap"));
        std::vector<double> amplitudes;
        amplitudes.reserve(static_cast<std::size_t>(config.bootstrap_resamples));
        std::vector<double> e_r(e.size());
        std::vector<std::int64_t> counts;
        for (const auto& bin : curve.bins)
            if (bin.usable) counts.push_back(bin.retained);
        for (int r = 0; r < config.bootstrap_resamples; ++r) {
            for (std::size_t i = 0; i < e.size(); ++i) {
                const auto k =
                    detail::binomial_draw(counts[i], 0.5 * (1.0 + e[i]), rng);
                e_r[i] = 2.0 * static_cast<double>(k) /
                             static_cast<double>(counts[i]) -
                         1.0;
            }
            amplitudes.push_back(detail::fit_negative_cosine(theta, e_r, {}).amplitude);
        }
        double mean = 0.0;
        for (const double v : amplitudes) mean += v;
        mean /= static_cast<double>(amplitudes.size());
        double var = 0.0;
        for (const double v : amplitudes) var += (v - mean) * (v - mean);
        var /= std::max<std::size_t>(1, amplitudes.size() - 1);
        curve.bootstrap_sigma_amplitude = std::sqrt(var);
    }
    return curve;
}

// Fitted-curve CHSH value at the canonical settings (0, pi/2) x (pi/4,
// 3*pi/4) relative to the fitted phase offset; equals 2 sqrt(2) V.
inline double chsh_s_value(const BellCurve& curve) {
    const double phi = curve.phase_offset;
    auto efit = [&](double d) { return -curve.amplitude * std::cos(d - phi); };
    return std::abs(efit(phi - M_PI / 4.0) - efit(phi - 3.0 * M_PI / 4.0) +
                    efit(phi + M_PI / 4.0) + efit(phi - M_PI / 4.0));
}

namespace detail {

// One-sided overlap integrals over (T, inf); the (-inf, -T) side follows
// from parity: integral = (-1)^{m+k} of the positive side.
inline RMatrix sign_overlap_positive(double threshold, int dim,
                                     double abs_tol = 1e-12) {
    RMatrix ipos(dim, dim);
    const double inf = std::numeric_limits<double>::infinity();
    for (int m = 0; m < dim; ++m)
        for (int k = m; k < dim; ++k) {
            const double v =
                wavefunction_overlap(m, k, QuadBin{threshold, inf}, abs_tol);
            ipos(m, k) = v;
            ipos(k, m) = v;
        }
    return ipos;
}

struct SignKernels {
    RMatrix sign;  // integral of psi_m psi_k weighted by sign(x), |x| > T
    RMatrix keep;  // integral of psi_m psi_k over |x| > T
};

inline SignKernels sign_kernels(double threshold, int dim) {
    const RMatrix ipos = sign_overlap_positive(threshold, dim);
    SignKernels kern{RMatrix(dim, dim), RMatrix(dim, dim)};
    for (int m = 0; m < dim; ++m)
        for (int k = 0; k < dim; ++k) {
            const double parity = ((m + k) % 2 == 0) ? 1.0 : -1.0;
            kern.sign(m, k) = ipos(m, k) - parity * ipos(m, k);
            kern.keep(m, k) = ipos(m, k) + parity * ipos(m, k);
        }
    return kern;
}

struct AnalyticBellTerms {
    double numerator = 0.0;  // E[sign(x_a) sign(x_b); both retained]
    double retained = 0.0;   // P[both retained]
};

inline AnalyticBellTerms analytic_bell_terms(const TwoModeDensityMatrix& state,
                                             const SignKernels& kern,
                                             double delta_theta) {
    const int d = state.cutoff.dim();
    Complex num = 0.0, den = 0.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
            for (int m = 0; m < d; ++m)
                for (int n = 0; n < d; ++n) {
                    const Complex c = state.at(k, l, m, n);
                    if (c == Complex(0.0, 0.0)) continue;
                    const Complex phase =
                        std::polar(1.0, static_cast<double>(k - m) * delta_theta);
                    num += c * phase * (kern.sign(m, k) * kern.sign(n, l));
                    den += c * phase * (kern.keep(m, k) * kern.keep(n, l));
                }
    return {num.real(), den.real()};
}

}  // namespace detail

// Exact E(delta_theta) for the thresholded sign correlation, by quadrature.
inline double analytic_correlation(const TwoModeDensityMatrix& state, double threshold,
                                   double delta_theta) {
    if (!(threshold >= 0.0) || !std::isfinite(threshold))
        throw ValidationError("threshold must be finite and >= 0");
    const auto kern = detail::sign_kernels(threshold, state.cutoff.dim());
    const auto terms = detail::analytic_bell_terms(state, kern, delta_theta);
    if (terms.retained < 1e-12)
        throw NumericError("analytic_correlation: threshold too high, retained "
                           "probability vanishes");
    return terms.numerator / terms.retained;
}

inline double analytic_correlation(const ModelSpec& model, double threshold,
                                   double delta_theta,
                                   bool include_detection_loss = true) {
    return analytic_correlation(make_true_state(model, include_detection_loss),
                                threshold, delta_theta);
}

// Phase-averaged probability that both arms pass the threshold; for a
// uniformly swept schedule this is the expected retained fraction.
inline double analytic_retained_probability(const TwoModeDensityMatrix& state,
                                            double threshold) {
    const int d = state.cutoff.dim();
    const auto kern = detail::sign_kernels(threshold, d);
    double den = 0.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
            den += state.at(k, l, k, l).real() * kern.keep(k, k) * kern.keep(l, l);
    return den;
}

inline CosineFit analytic_amplitude(const ModelSpec& model, double threshold,
                                    bool include_detection_loss = true,
                                    int phase_grid = 48) {
    if (phase_grid < 3) throw ValidationError("phase_grid must be >= 3");
    const auto state = make_true_state(model, include_detection_loss);
    const auto kern = detail::sign_kernels(threshold, state.cutoff.dim());
    std::vector<double> theta, e;
    for (int i = 0; i < phase_grid; ++i) {
        const double t = (i + 0.5) * 2.0 * M_PI / phase_grid;
        const auto terms = detail::analytic_bell_terms(state, kern, t);
        if (terms.retained < 1e-12)
            throw NumericError("analytic_amplitude: threshold too high, retained "
                               "probability vanishes");
        theta.push_back(t);
        e.push_back(terms.numerator / terms.retained);
    }
    return detail::fit_negative_cosine(theta, e, {});
}

struct ThresholdSweepRow {
    double threshold = 0.0;
    double amplitude = 0.0;
    double retained_fraction = 0.0;
    bool violation = false;
};

inline std::vector<ThresholdSweepRow> threshold_sweep(
    const std::vector<QuadratureSample>& samples, const BellConfig& base,
    const std::vector<double>& thresholds) {
    std::vector<ThresholdSweepRow> rows;
    rows.reserve(thresholds.size());
    for (const double t : thresholds) {
        BellConfig config = base;
        config.threshold = t;
        config.bootstrap_resamples = 0;
        try {
            const BellCurve curve = correlation_curve(samples, config);
            rows.push_back({t, curve.amplitude, curve.retained_fraction,
                            curve.amplitude > kBellViolationBound});
        } catch (const NumericError&) {
            // too few retained events for a fit at this threshold
            std::int64_t kept = 0;
            for (const auto& s : samples)
                if (discriminate(s, t)) ++kept;
            rows.push_back({t, std::numeric_limits<double>::quiet_NaN(),
                            static_cast<double>(kept) /
                                static_cast<double>(samples.size()),
                            false});
        }
    }
    return rows;
}

inline std::vector<ThresholdSweepRow> threshold_sweep(
    const ModelSpec& model, const std::vector<double>& thresholds,
    bool include_detection_loss = true) {
    const auto state = make_true_state(model, include_detection_loss);
    std::vector<ThresholdSweepRow> rows;
    rows.reserve(thresholds.size());
    for (const double t : thresholds) {
        const auto kern = detail::sign_kernels(t, state.cutoff.dim());
        std::vector<double> theta, e;
        for (int i = 0; i < 48; ++i) {
            const double th = (i + 0.5) * 2.0 * M_PI / 48;
            const auto terms = detail::analytic_bell_terms(state, kern, th);
            if (terms.retained < 1e-12)
                throw NumericError("threshold_sweep: retained probability vanishes");
            theta.push_back(th);
            e.push_back(terms.numerator / terms.retained);
        }
        const CosineFit fit = detail::fit_negative_cosine(theta, e, {});
        rows.push_back({t, fit.amplitude, analytic_retained_probability(state, t),
                        fit.amplitude > kBellViolationBound});
    }
    return rows;
}

// Smallest threshold whose fitted amplitude crosses 1/sqrt(2), by scan and
// bisection on the analytic curve.
inline double smallest_violating_threshold(const ModelSpec& model,
                                           bool include_detection_loss = true,
                                           double t_lo = 0.0, double t_hi = 2.0) {
    if (!(t_lo >= 0.0 && t_lo < t_hi))
        throw ValidationError("smallest_violating_threshold: need 0 <= t_lo < t_hi");
    auto amplitude_at = [&](double t) {
        return analytic_amplitude(model, t, include_detection_loss).amplitude;
    };
    const double target = kBellViolationBound;
    double lo = t_lo;
    double lo_v = amplitude_at(lo);
    if (lo_v > target) return lo;
    double hi = lo;
    double hi_v = lo_v;
    const int scan_steps = 40;
    bool bracketed = false;
    for (int i = 1; i <= scan_steps; ++i) {
        hi = t_lo + (t_hi - t_lo) * i / scan_steps;
        hi_v = amplitude_at(hi);
        if (hi_v > target) {
            bracketed = true;
            break;
        }
        lo = hi;
        lo_v = hi_v;
    }
    if (!bracketed)
        throw NumericError("smallest_violating_threshold: no violation below t_hi");
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (amplitude_at(mid) > target)
            hi = mid;
        else
            lo = mid;
        if (hi - lo < 1e-10) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace dualrail
