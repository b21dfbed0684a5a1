#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dualrail/errors.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/homodyne.hpp"
#include "dualrail/parallel.hpp"
#include "dualrail/rng.hpp"

// Monte Carlo generation of (delta_theta, x_a, x_b) triples from the exact
// joint quadrature density of the loss-degraded true state. x_a comes from
// the phase-independent marginal by inverse-CDF lookup; x_b from the
// conditional density rebuilt per draw on a fixed grid.

namespace dualrail {

struct QuadratureSample {
    double delta_theta = 0.0;
    double x_a = 0.0;
    double x_b = 0.0;
};

enum class PhaseSchedule { Sweep, Uniform, Fixed };

struct RunConfig {
    ModelSpec model{};
    std::int64_t n_samples = 200000;
    PhaseSchedule schedule = PhaseSchedule::Sweep;
    double fixed_delta_theta = 0.0;
    std::uint64_t rng_seed = 1;

    void validate() const {
        model.validate();
        if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
        if (!std::isfinite(fixed_delta_theta))
            throw ValidationError("fixed_delta_theta must be finite");
    }
};

class JointQuadratureSampler {
  public:
    static constexpr int kGridPoints = 2001;
    static constexpr double kGridMin = -6.0;
    static constexpr double kGridMax = 6.0;

    struct Scratch {
        std::vector<double> pdf;
        std::vector<double> cdf;
    };

    explicit JointQuadratureSampler(const ModelSpec& model) : dim_(model.cutoff.dim()) {
        model.validate();
        const auto state = make_true_state(model, true);

        grid_.resize(kGridPoints);
        const double dx = (kGridMax - kGridMin) / (kGridPoints - 1);
        for (int g = 0; g < kGridPoints; ++g) grid_[g] = kGridMin + dx * g;
        step_ = dx;

        // psi_l psi_n rows on the grid, one per unordered index pair.
        for (int l = 0; l < dim_; ++l)
            for (int n = l; n < dim_; ++n) pair_ids_.emplace_back(l, n);
        pair_products_.resize(pair_ids_.size() * kGridPoints);
        for (int g = 0; g < kGridPoints; ++g) {
            const Eigen::VectorXd psi = fock_wavefunction_table(dim_ - 1, grid_[g]);
            for (std::size_t r = 0; r < pair_ids_.size(); ++r)
                pair_products_[r * kGridPoints + g] =
                    psi(pair_ids_[r].first) * psi(pair_ids_[r].second);
        }

        // Nonzero blocks B_{km}(l, n) = rho_{(k,l),(m,n)} of the sampled state.
        for (int k = 0; k < dim_; ++k)
            for (int m = 0; m < dim_; ++m) {
                CMatrix block(dim_, dim_);
                double mag = 0.0;
                for (int l = 0; l < dim_; ++l)
                    for (int n = 0; n < dim_; ++n) {
                        block(l, n) = state.at(k, l, m, n);
                        mag = std::max(mag, std::abs(block(l, n)));
                    }
                if (mag > 0.0) {
                    block_ids_.emplace_back(k, m);
                    blocks_.push_back(std::move(block));
                }
            }

        // Marginal of x_a: sector structure makes it phase independent,
        // marg(x) = sum_k w_k psi_k(x)^2 with w_k the reduced-A diagonal.
        const CMatrix reduced = partial_trace_mode_b(state);
        marginal_weights_.resize(dim_);
        for (int k = 0; k < dim_; ++k) marginal_weights_[k] = reduced(k, k).real();

        marginal_cdf_.assign(kGridPoints, 0.0);
        std::vector<double> pdf(kGridPoints);
        for (int g = 0; g < kGridPoints; ++g) {
            const Eigen::VectorXd psi = fock_wavefunction_table(dim_ - 1, grid_[g]);
            double v = 0.0;
            for (int k = 0; k < dim_; ++k)
                v += marginal_weights_[k] * psi(k) * psi(k);
            pdf[g] = std::max(0.0, v);
        }
        for (int g = 1; g < kGridPoints; ++g)
            marginal_cdf_[g] =
                marginal_cdf_[g - 1] + 0.5 * step_ * (pdf[g - 1] + pdf[g]);
        if (marginal_cdf_.back() <= 0.0)
            throw NumericError("sampler: marginal density vanished");
    }

    Scratch make_scratch() const {
        return Scratch{std::vector<double>(kGridPoints), std::vector<double>(kGridPoints)};
    }

    double draw_x_a(Xoshiro256StarStar& rng) const {
        const double target = rng.uniform() * marginal_cdf_.back();
        return invert_cdf(marginal_cdf_, target);
    }

    double draw_x_b_given(double x_a, double delta_theta, Xoshiro256StarStar& rng,
                          Scratch& scratch) const {
        const Eigen::VectorXd psi = fock_wavefunction_table(dim_ - 1, x_a);
        std::vector<Complex> w(static_cast<std::size_t>(dim_));
        for (int k = 0; k < dim_; ++k)
            w[k] = psi(k) * std::polar(1.0, k * delta_theta);

        CMatrix c = CMatrix::Zero(dim_, dim_);
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const auto [k, m] = block_ids_[b];
            const Complex coef = w[k] * std::conj(w[m]);
            if (coef == Complex(0.0, 0.0)) continue;
            c += coef * blocks_[b];
        }

        std::fill(scratch.pdf.begin(), scratch.pdf.end(), 0.0);
        for (std::size_t r = 0; r < pair_ids_.size(); ++r) {
            const auto [l, n] = pair_ids_[r];
            const double coef = (l == n) ? c(l, l).real() : 2.0 * c(l, n).real();
            if (coef == 0.0) continue;
            const double* row = &pair_products_[r * kGridPoints];
            double* pdf = scratch.pdf.data();
            for (int g = 0; g < kGridPoints; ++g) pdf[g] += coef * row[g];
        }
        scratch.cdf[0] = 0.0;
        for (int g = 1; g < kGridPoints; ++g) {
            const double lo = std::max(0.0, scratch.pdf[g - 1]);
            const double hi = std::max(0.0, scratch.pdf[g]);
            scratch.cdf[g] = scratch.cdf[g - 1] + 0.5 * step_ * (lo + hi);
        }
        const double total = scratch.cdf.back();
        if (!(total > 0.0))
            throw NumericError("sampler: conditional density vanished");
        return invert_cdf(scratch.cdf, rng.uniform() * total);
    }

  private:
    double invert_cdf(const std::vector<double>& cdf, double target) const {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
        if (it == cdf.begin()) return grid_.front();
        if (it == cdf.end()) return grid_.back();
        const auto g = static_cast<std::size_t>(it - cdf.begin());
        const double span = cdf[g] - cdf[g - 1];
        const double frac = span > 0.0 ? (target - cdf[g - 1]) / span : 0.0;
        return grid_[g - 1] + frac * step_;
    }

    int dim_;
    double step_ = 0.0;
    std::vector<double> grid_;
    std::vector<std::pair<int, int>> pair_ids_;
    std::vector<double> pair_products_;  // [pair][grid], row-contiguous
    std::vector<std::pair<int, int>> block_ids_;
    std::vector<CMatrix> blocks_;
    std::vector<double> marginal_weights_;
    std::vector<double> marginal_cdf_;
};

// Shard size fixes the RNG substream boundaries; results are identical for
// any thread count.
inline constexpr std::int64_t kSamplerShardSize = 16384;

inline std::vector<QuadratureSample> sample_run(const RunConfig& config,
                                                int threads = 1) {
    config.validate();
    const JointQuadratureSampler sampler(config.model);
    std::vector<QuadratureSample> out(static_cast<std::size_t>(config.n_samples));
    const double sweep_step = 2.0 * M_PI / static_cast<double>(config.n_samples);
    parallel_chunks(
        config.n_samples, kSamplerShardSize,
        [&](std::int64_t shard, std::int64_t begin, std::int64_t end) {
            Xoshiro256StarStar rng(
                substream_seed(config.rng_seed, static_cast<std::uint64_t>(shard)));
            auto scratch = sampler.make_scratch();
            for (std::int64_t i = begin; i < end; ++i) {
                double theta = 0.0;
                switch (config.schedule) {
                    case PhaseSchedule::Sweep:
                        theta = sweep_step * static_cast<double>(i);
                        break;
                    case PhaseSchedule::Uniform:
                        theta = 2.0 * M_PI * rng.uniform();
                        break;
                    case PhaseSchedule::Fixed:
                        theta = PhaseSetting(config.fixed_delta_theta).delta_theta;
                        break;
                }
                const double x_a = sampler.draw_x_a(rng);
                const double x_b = sampler.draw_x_b_given(x_a, theta, rng, scratch);
                out[static_cast<std::size_t>(i)] = {theta, x_a, x_b};
            }
        },
        threads);
    return out;
}

// Detector calibration stream: both arms in vacuum, x ~ N(0, 1/2) i.i.d.
inline std::vector<QuadratureSample> sample_vacuum(std::int64_t n_samples,
                                                   std::uint64_t seed,
                                                   int threads = 1) {
    if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    std::vector<QuadratureSample> out(static_cast<std::size_t>(n_samples));
    const double sweep_step = 2.0 * M_PI / static_cast<double>(n_samples);
    const double sigma = std::sqrt(0.5);
    parallel_chunks(
        n_samples, kSamplerShardSize,
        [&](std::int64_t shard, std::int64_t begin, std::int64_t end) {
            Xoshiro256StarStar rng(
                substream_seed(seed, static_cast<std::uint64_t>(shard)));
            for (std::int64_t i = begin; i < end; ++i) {
                const auto [xa, xb] = rng.gaussian_pair(sigma);
                out[static_cast<std::size_t>(i)] = {sweep_step * static_cast<double>(i),
                                                    xa, xb};
            }
        },
        threads);
    return out;
}

inline constexpr const char* kSamplesCsvHeader = "delta_theta,x_a,x_b";

inline void write_samples(const std::string& path,
                          const std::vector<QuadratureSample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open samples file for writing: " + path);
    out << kSamplesCsvHeader << '\n';
    char line[128];
    for (const auto& s : samples) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", s.delta_theta, s.x_a,
                      s.x_b);
        out << line;
    }
    if (!out) throw ValidationError("failed writing samples file: " + path);
}

namespace detail {

inline double parse_csv_double(const std::string& field, std::size_t line_no) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || end != begin + field.size() || !std::isfinite(v))
        throw ValidationError("samples CSV line " + std::to_string(line_no) +
                              ": bad numeric field '" + field + "'");
    return v;
}

}  // namespace detail

inline std::vector<QuadratureSample> read_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open samples file: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("samples CSV is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kSamplesCsvHeader)
        throw ValidationError("samples CSV line 1: expected header '" +
                              std::string(kSamplesCsvHeader) + "'");
    std::vector<QuadratureSample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos
                                                : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos)
            throw ValidationError("samples CSV line " + std::to_string(line_no) +
                                  ": expected 3 comma-separated values");
        QuadratureSample s;
        s.delta_theta = detail::parse_csv_double(line.substr(0, c1), line_no);
        s.x_a = detail::parse_csv_double(line.substr(c1 + 1, c2 - c1 - 1), line_no);
        s.x_b = detail::parse_csv_double(line.substr(c2 + 1), line_no);
        samples.push_back(s);
    }
    return samples;
}

}  // namespace dualrail
