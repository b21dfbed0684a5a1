#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualrail/bell.hpp"
#include "dualrail/errors.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/maxlik.hpp"
#include "dualrail/sampler.hpp"
#include "dualrail/wigner.hpp"

// JSON (de)serialization for configs, states, and result tables, plus the
// CSV emitters for Wigner grids and Bell curves. Parsing is strict: unknown
// keys are rejected so config typos fail loudly.

namespace dualrail {

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                                const std::string& context) {
    if (!j.is_object())
        throw ValidationError(context + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const auto& key : allowed)
            if (item.key() == key) {
                ok = true;
                break;
            }
        if (!ok)
            throw ValidationError(context + ": unknown key '" + item.key() + "'");
    }
}

template <class T>
T get_or(const Json& j, const std::string& key, T fallback, const std::string& context) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ValidationError(context + ": field '" + key + "' has the wrong type");
    }
}

}  // namespace detail

inline Json model_to_json(const ModelSpec& model) {
    return Json{{"eta_prep", model.eta_prep},
                {"eta_det", model.eta_det},
                {"tau_squared", model.bs.tau_squared()},
                {"n_max", model.cutoff.n_max}};
}

inline ModelSpec model_from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"eta_prep", "eta_det", "tau_squared", "n_max"},
                                "model");
    ModelSpec model;
    model.eta_prep = detail::get_or(j, "eta_prep", model.eta_prep, "model");
    model.eta_det = detail::get_or(j, "eta_det", model.eta_det, "model");
    const double tau_sq =
        detail::get_or(j, "tau_squared", model.bs.tau_squared(), "model");
    if (!(tau_sq >= 0.0 && tau_sq <= 1.0))
        throw ValidationError("model: tau_squared must lie in [0, 1]");
    model.bs = BeamSplitterSpec::from_tau_squared(tau_sq);
    model.cutoff.n_max = detail::get_or(j, "n_max", model.cutoff.n_max, "model");
    model.validate();
    return model;
}

inline std::string phase_schedule_name(PhaseSchedule schedule) {
    switch (schedule) {
        case PhaseSchedule::Sweep: return "sweep";
        case PhaseSchedule::Uniform: return "uniform";
        case PhaseSchedule::Fixed: return "fixed";
    }
    throw ValidationError("unknown phase schedule");
}

inline PhaseSchedule phase_schedule_from_name(const std::string& name) {
    if (name == "sweep") return PhaseSchedule::Sweep;
    if (name == "uniform") return PhaseSchedule::Uniform;
    if (name == "fixed") return PhaseSchedule::Fixed;
    throw ValidationError("run: unknown phase_schedule '" + name +
                          "' (expected sweep, uniform, or fixed)");
}

inline Json run_config_to_json(const RunConfig& config) {
    return Json{{"n_samples", config.n_samples},
                {"phase_schedule", phase_schedule_name(config.schedule)},
                {"fixed_delta_theta", config.fixed_delta_theta},
                {"rng_seed", config.rng_seed}};
}

// The model travels separately (top-level config section).
inline RunConfig run_config_from_json(const Json& j, const ModelSpec& model) {
    detail::reject_unknown_keys(
        j, {"n_samples", "phase_schedule", "fixed_delta_theta", "rng_seed"}, "run");
    RunConfig config;
    config.model = model;
    config.n_samples = detail::get_or<std::int64_t>(j, "n_samples", config.n_samples, "run");
    config.schedule = phase_schedule_from_name(
        detail::get_or<std::string>(j, "phase_schedule", "sweep", "run"));
    config.fixed_delta_theta =
        detail::get_or(j, "fixed_delta_theta", config.fixed_delta_theta, "run");
    config.rng_seed = detail::get_or<std::uint64_t>(j, "rng_seed", config.rng_seed, "run");
    config.validate();
    return config;
}

inline Json recon_config_to_json(const ReconConfig& config) {
    // JSON has no literal for infinities; the half-open tail bins are spelled
    // out as strings and understood by the parser below.
    Json edges = Json::array();
    for (const double e : config.quad_edges) {
        if (std::isinf(e))
            edges.push_back(e < 0.0 ? "-inf" : "inf");
        else
            edges.push_back(e);
    }
    return Json{{"n_max", config.n_max},
                {"eta_det", config.eta_det},
                {"phase_bin_count", config.phase_bin_count},
                {"quad_edges", std::move(edges)},
                {"max_iterations", config.max_iterations},
                {"tol", config.tol},
                {"average_phase_in_bin", config.average_phase_in_bin}};
}

inline ReconConfig recon_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
                                {"n_max", "eta_det", "phase_bin_count", "quad_edges",
                                 "max_iterations", "tol", "average_phase_in_bin"},
                                "recon");
    ReconConfig config;
    config.n_max = detail::get_or(j, "n_max", config.n_max, "recon");
    config.eta_det = detail::get_or(j, "eta_det", config.eta_det, "recon");
    config.phase_bin_count =
        detail::get_or(j, "phase_bin_count", config.phase_bin_count, "recon");
    if (j.contains("quad_edges")) {
        config.quad_edges.clear();
        for (const auto& edge : j.at("quad_edges")) {
            if (edge.is_string()) {
                const auto s = edge.get<std::string>();
                if (s == "-inf")
                    config.quad_edges.push_back(-std::numeric_limits<double>::infinity());
                else if (s == "inf" || s == "+inf")
                    config.quad_edges.push_back(std::numeric_limits<double>::infinity());
                else
                    throw ValidationError("recon: quad_edges entries must be numbers, "
                                          "\"-inf\", or \"inf\"");
            } else if (edge.is_number()) {
                config.quad_edges.push_back(edge.get<double>());
            } else {
                throw ValidationError("recon: quad_edges entries must be numbers, "
                                      "\"-inf\", or \"inf\"");
            }
        }
    }
    config.max_iterations =
        detail::get_or(j, "max_iterations", config.max_iterations, "recon");
    config.tol = detail::get_or(j, "tol", config.tol, "recon");
    config.average_phase_in_bin =
        detail::get_or(j, "average_phase_in_bin", config.average_phase_in_bin, "recon");
    config.validate();
    return config;
}

inline Json bell_config_to_json(const BellConfig& config) {
    return Json{{"threshold", config.threshold},
                {"phase_bin_count", config.phase_bin_count},
                {"min_retained_per_bin", config.min_retained_per_bin},
                {"bootstrap_resamples", config.bootstrap_resamples}};
}

inline BellConfig bell_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
                                {"threshold", "phase_bin_count", "min_retained_per_bin",
                                 "bootstrap_resamples", "sweep_thresholds"},
                                "bell");
    BellConfig config;
    config.threshold = detail::get_or(j, "threshold", config.threshold, "bell");
    config.phase_bin_count =
        detail::get_or(j, "phase_bin_count", config.phase_bin_count, "bell");
    config.min_retained_per_bin =
        detail::get_or(j, "min_retained_per_bin", config.min_retained_per_bin, "bell");
    config.bootstrap_resamples =
        detail::get_or(j, "bootstrap_resamples", config.bootstrap_resamples, "bell");
    config.validate();
    return config;
}

inline std::vector<double> sweep_thresholds_from_json(const Json& bell_section) {
    std::vector<double> out;
    if (!bell_section.is_object() || !bell_section.contains("sweep_thresholds"))
        return out;
    for (const auto& t : bell_section.at("sweep_thresholds")) {
        if (!t.is_number())
            throw ValidationError("bell: sweep_thresholds entries must be numbers");
        out.push_back(t.get<double>());
    }
    return out;
}

inline Json state_to_json(const TwoModeDensityMatrix& state) {
    const auto n = state.elements.rows();
    std::vector<std::vector<double>> re(n, std::vector<double>(n));
    std::vector<std::vector<double>> im(n, std::vector<double>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            re[i][j] = state.elements(i, j).real();
            im[i][j] = state.elements(i, j).imag();
        }
    return Json{{"n_max", state.cutoff.n_max}, {"real", re}, {"imag", im}};
}

inline TwoModeDensityMatrix state_from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"n_max", "real", "imag"}, "state");
    if (!j.contains("n_max") || !j.contains("real") || !j.contains("imag"))
        throw ValidationError("state: requires n_max, real, and imag");
    const FockCutoff cutoff{detail::get_or(j, "n_max", 5, "state")};
    cutoff.validate();
    const auto n = static_cast<std::size_t>(cutoff.pair_dim());
    const auto& re = j.at("real");
    const auto& im = j.at("imag");
    if (re.size() != n || im.size() != n)
        throw ValidationError("state: matrix size does not match n_max");
    CMatrix m(cutoff.pair_dim(), cutoff.pair_dim());
    try {
        for (std::size_t i = 0; i < n; ++i) {
            if (!re[i].is_array() || !im[i].is_array() || re[i].size() != n ||
                im[i].size() != n)
                throw ValidationError("state: matrix rows must have equal length");
            for (std::size_t k = 0; k < n; ++k)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    Complex(re[i][k].get<double>(), im[i][k].get<double>());
        }
    } catch (const Json::exception&) {
        throw ValidationError("state: matrix entries must be numbers");
    }
    return TwoModeDensityMatrix::checked(cutoff, std::move(m));
}

inline Json recon_result_to_json(const ReconResult& result, const ReconConfig& config) {
    const EfficiencyFit fit = effective_efficiency(result.state);
    return Json{{"state", state_to_json(result.state)},
                {"diagnostics",
                 Json{{"iterations", result.diagnostics.iterations},
                      {"converged", result.diagnostics.converged},
                      {"dilution_events", result.diagnostics.dilution_events},
                      {"final_log_likelihood", result.diagnostics.final_log_likelihood},
                      {"log_likelihood_deltas", result.diagnostics.log_likelihood_deltas}}},
                {"fit",
                 Json{{"eta_hat", fit.eta_hat},
                      {"tau_sq_hat", fit.tau_sq_hat},
                      {"residual", fit.residual}}},
                {"config", recon_config_to_json(config)}};
}

inline Json bell_summary_to_json(const BellCurve& curve) {
    Json j{{"V", curve.amplitude},
           {"sigma_V", curve.sigma_amplitude},
           {"S", chsh_s_value(curve)},
           {"retained_fraction", curve.retained_fraction},
           {"violation", curve.amplitude > kBellViolationBound},
           {"phase_offset", curve.phase_offset},
           {"fit_residual_rms", curve.fit_residual_rms},
           {"bins_in_fit", curve.bins_in_fit}};
    if (curve.bootstrap_sigma_amplitude > 0.0)
        j["bootstrap_sigma_V"] = curve.bootstrap_sigma_amplitude;
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    out << text;
    if (!out) throw ValidationError("failed writing file: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline Json parse_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw ValidationError("invalid JSON in " + path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline void write_wigner_grid_csv(const std::string& path, const WignerGrid& grid) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    char buf[32];
    for (int i = 0; i < grid.points(); ++i) {
        for (int j = 0; j < grid.points(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", grid.values(i, j));
            out << buf << (j + 1 == grid.points() ? '\n' : ',');
        }
    }
    if (!out) throw ValidationError("failed writing file: " + path);
}

inline Json wigner_axes_to_json(const WignerGrid& grid, const std::string& csv_name,
                                double origin_value) {
    const auto axes = wigner_plane_axes(grid.plane);
    return Json{{"plane", wigner_plane_name(grid.plane)},
                {"axis1", axes.first},
                {"axis2", axes.second},
                {"axis_min", grid.axis_min},
                {"axis_max", grid.axis_max},
                {"step", grid.step},
                {"points", grid.points()},
                {"csv", csv_name},
                {"origin_value", origin_value},
                {"layout", "rows follow axis1, columns follow axis2"}};
}

inline void write_bell_curve_csv(const std::string& path, const BellCurve& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    out << "phase_bin,E,stderr,retained,total\n";
    char buf[128];
    for (const auto& bin : curve.bins) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%lld,%lld\n",
                      bin.delta_theta, bin.e, bin.std_error,
                      static_cast<long long>(bin.retained),
                      static_cast<long long>(bin.total));
        out << buf;
    }
    if (!out) throw ValidationError("failed writing file: " + path);
}

inline void write_threshold_sweep_csv(const std::string& path,
                                      const std::vector<ThresholdSweepRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    out << "threshold,V,retained_fraction,violation\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d\n", row.threshold,
                      row.amplitude, row.retained_fraction, row.violation ? 1 : 0);
        out << buf;
    }
    if (!out) throw ValidationError("failed writing file: " + path);
}

}  // namespace dualrail
