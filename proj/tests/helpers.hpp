#pragma once

#include <filesystem>
#include <string>

#include "dualrail/bell.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/homodyne.hpp"
#include "dualrail/json_io.hpp"
#include "dualrail/maxlik.hpp"
#include "dualrail/rng.hpp"
#include "dualrail/sampler.hpp"
#include "dualrail/stats.hpp"
#include "dualrail/wigner.hpp"

namespace testutil {

using namespace dualrail;

inline double gaussian(Xoshiro256StarStar& rng) { return rng.gaussian_pair().first; }

// Ginibre construction: G G^dag normalized to unit trace is a generic
// full-rank density matrix.
inline CMatrix random_psd(int dim, Xoshiro256StarStar& rng) {
    CMatrix g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            const auto [a, b] = rng.gaussian_pair();
            g(i, j) = Complex(a, b);
        }
    CMatrix m = g * g.adjoint();
    return m / m.trace().real();
}

inline TwoModeDensityMatrix random_two_mode_state(FockCutoff cutoff,
                                                  Xoshiro256StarStar& rng) {
    return TwoModeDensityMatrix::checked(cutoff, random_psd(cutoff.pair_dim(), rng));
}

// Generic state compatible with a phase-randomized local oscillator: only
// equal-total-photon-number sectors carry coherences.
inline TwoModeDensityMatrix random_sector_state(FockCutoff cutoff,
                                                Xoshiro256StarStar& rng) {
    auto state = phase_average(random_two_mode_state(cutoff, rng));
    state.validate();
    return state;
}

// Support restricted to total photon number <= 1 so beam splitter and loss
// arithmetic stays exact at any cutoff.
inline TwoModeDensityMatrix random_low_photon_state(FockCutoff cutoff,
                                                    Xoshiro256StarStar& rng) {
    const CMatrix small = random_psd(3, rng);
    CMatrix full = CMatrix::Zero(cutoff.pair_dim(), cutoff.pair_dim());
    const int d = cutoff.dim();
    const int ids[3] = {0 * d + 0, 1 * d + 0, 0 * d + 1};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) full(ids[i], ids[j]) = small(i, j);
    return TwoModeDensityMatrix::checked(cutoff, std::move(full));
}

inline double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

inline ModelSpec experiment_model(double tau_sq = 0.5) {
    ModelSpec m;
    m.eta_prep = 0.64;
    m.eta_det = 0.86;
    m.bs = BeamSplitterSpec::from_tau_squared(tau_sq);
    return m;
}

// Detection loss compensated away, as in loss-corrected data analysis.
inline ModelSpec corrected_model(double tau_sq = 0.5) {
    ModelSpec m = experiment_model(tau_sq);
    m.eta_det = 1.0;
    return m;
}

inline ModelSpec ideal_model() {
    ModelSpec m;
    m.eta_prep = 1.0;
    m.eta_det = 1.0;
    m.bs = BeamSplitterSpec::from_tau_squared(0.5);
    return m;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::current_path() / ("tmp_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
