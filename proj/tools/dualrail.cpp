// Command line front end: simulate, reconstruct, wigner, bell, pipeline.
// One JSON config feeds every subcommand; flags override individual fields.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualrail/bell.hpp"
#include "dualrail/fock.hpp"
#include "dualrail/json_io.hpp"
#include "dualrail/maxlik.hpp"
#include "dualrail/sampler.hpp"
#include "dualrail/wigner.hpp"

namespace fs = std::filesystem;
using namespace dualrail;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitNoConvergence = 3;

struct WignerSection {
    std::vector<WignerPlane> planes{WignerPlane::XaPaZero, WignerPlane::PaPbZero,
                                    WignerPlane::XbZero};
    double axis_min = -3.0;
    double axis_max = 3.0;
    double step = 0.05;
};

struct Config {
    ModelSpec model;
    RunConfig run;
    ReconConfig recon;
    BellConfig bell;
    std::vector<double> sweep_thresholds;
    WignerSection wigner;
    std::string output_dir = "out";
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
    std::optional<std::string> plane;
    std::optional<std::string> out_dir;
    int threads = 1;
};

Config load_config(const std::string& path) {
    Json raw = path.empty() ? Json::object() : parse_json_file(path);
    detail::reject_unknown_keys(
        raw, {"model", "run", "recon", "bell", "wigner", "output_dir"}, "config");

    Config c;
    c.model = model_from_json(raw.value("model", Json::object()));
    c.run = run_config_from_json(raw.value("run", Json::object()), c.model);

    const Json recon_raw = raw.value("recon", Json::object());
    c.recon = recon_config_from_json(recon_raw);
    // Unless overridden, the reconstruction compensates the simulated detector
    // loss and works at the model cutoff.
    if (!recon_raw.contains("eta_det")) c.recon.eta_det = c.model.eta_det;
    if (!recon_raw.contains("n_max")) c.recon.n_max = c.model.cutoff.n_max;
    c.recon.validate();

    const Json bell_raw = raw.value("bell", Json::object());
    c.bell = bell_config_from_json(bell_raw);
    c.sweep_thresholds = sweep_thresholds_from_json(bell_raw);

    const Json wigner_raw = raw.value("wigner", Json::object());
    detail::reject_unknown_keys(wigner_raw, {"planes", "axis_min", "axis_max", "step"},
                                "wigner");
    if (wigner_raw.contains("planes")) {
        c.wigner.planes.clear();
        for (const auto& name : wigner_raw.at("planes"))
            c.wigner.planes.push_back(wigner_plane_from_name(name.get<std::string>()));
        if (c.wigner.planes.empty())
            throw ValidationError("wigner: planes must not be empty");
    }
    c.wigner.axis_min = detail::get_or(wigner_raw, "axis_min", c.wigner.axis_min, "wigner");
    c.wigner.axis_max = detail::get_or(wigner_raw, "axis_max", c.wigner.axis_max, "wigner");
    c.wigner.step = detail::get_or(wigner_raw, "step", c.wigner.step, "wigner");
    if (!(c.wigner.step > 0.0) || !(c.wigner.axis_min < c.wigner.axis_max))
        throw ValidationError("wigner: need step > 0 and axis_min < axis_max");

    c.output_dir = detail::get_or<std::string>(raw, "output_dir", c.output_dir, "config");
    return c;
}

void apply_overrides(Config& c, const Overrides& o) {
    if (o.seed) {
        c.run.rng_seed = *o.seed;
        c.bell.bootstrap_seed = *o.seed;
    } else {
        c.bell.bootstrap_seed = c.run.rng_seed;
    }
    if (o.threshold) c.bell.threshold = *o.threshold;
    if (o.plane) c.wigner.planes = {wigner_plane_from_name(*o.plane)};
    if (o.out_dir) c.output_dir = *o.out_dir;
    c.run.validate();
    c.bell.validate();
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<QuadratureSample> run_simulate_stage(const Config& c, const fs::path& out,
                                                 int threads) {
    auto samples = sample_run(c.run, threads);
    fs::create_directories(out);
    write_samples((out / "samples.csv").string(), samples);
    Json manifest{{"command", "simulate"},
                  {"created_utc", utc_now()},
                  {"seed", c.run.rng_seed},
                  {"model", model_to_json(c.model)},
                  {"phase_schedule", phase_schedule_name(c.run.schedule)},
                  {"n_samples", static_cast<std::int64_t>(samples.size())}};
    write_json_file((out / "manifest.json").string(), manifest);
    std::printf("simulate: n_samples=%lld seed=%llu schedule=%s -> %s\n",
                static_cast<long long>(samples.size()),
                static_cast<unsigned long long>(c.run.rng_seed),
                phase_schedule_name(c.run.schedule).c_str(),
                (out / "samples.csv").c_str());
    return samples;
}

ReconResult run_reconstruct_stage(const std::vector<QuadratureSample>& samples,
                                  const Config& c, const fs::path& out, int threads) {
    Histogram hist = bin_data(samples, c.recon);
    ReconResult result = reconstruct(hist, c.recon, threads);
    fs::create_directories(out);

    Json j = recon_result_to_json(result, c.recon);
    const double fid = fidelity(result.state, make_true_state(c.model, false));
    j["fit"]["fidelity_vs_model"] = fid;
    write_json_file((out / "recon.json").string(), j);

    const EfficiencyFit fit = effective_efficiency(result.state);
    std::printf("reconstruct: iterations=%d converged=%s logL=%.9g\n",
                result.diagnostics.iterations,
                result.diagnostics.converged ? "yes" : "no",
                result.diagnostics.final_log_likelihood);
    std::printf("reconstruct: eta_hat=%.6f tau_sq_hat=%.6f fidelity_vs_model=%.6f -> %s\n",
                fit.eta_hat, fit.tau_sq_hat, fid, (out / "recon.json").c_str());
    return result;
}

void run_wigner_stage(const TwoModeDensityMatrix& state, const Config& c,
                      const fs::path& out) {
    fs::create_directories(out);
    const double origin = two_mode_wigner(state, PhaseSpacePoint{0.0, 0.0, 0.0, 0.0});
    std::printf("wigner: origin W(0,0,0,0)=%.9g\n", origin);
    for (const auto plane : c.wigner.planes) {
        WignerGrid grid = cross_section(state, plane, c.wigner.axis_min,
                                        c.wigner.axis_max, c.wigner.step);
        if (!grid.values.allFinite())
            throw NumericError("wigner grid contains non-finite values");
        const std::string name = wigner_plane_name(plane);
        const std::string csv = "wigner_" + name + ".csv";
        write_wigner_grid_csv((out / csv).string(), grid);
        write_json_file((out / ("wigner_" + name + ".json")).string(),
                        wigner_axes_to_json(grid, csv, origin));
        std::printf("wigner: plane=%s -> %s\n", name.c_str(), (out / csv).c_str());
    }
}

BellCurve run_bell_stage(const std::vector<QuadratureSample>& samples, const Config& c,
                         const fs::path& out) {
    BellCurve curve = correlation_curve(samples, c.bell);
    fs::create_directories(out);
    write_bell_curve_csv((out / "bell_curve.csv").string(), curve);
    write_json_file((out / "bell_summary.json").string(), bell_summary_to_json(curve));
    std::printf("bell: V=%.6f sigma_V=%.6f S=%.6f retained_fraction=%.6f violation=%s\n",
                curve.amplitude, curve.sigma_amplitude, chsh_s_value(curve),
                curve.retained_fraction,
                curve.amplitude > kBellViolationBound ? "yes" : "no");
    if (!c.sweep_thresholds.empty()) {
        auto rows = threshold_sweep(samples, c.bell, c.sweep_thresholds);
        write_threshold_sweep_csv((out / "threshold_sweep.csv").string(), rows);
        std::printf("bell: sweep over %zu thresholds -> %s\n", rows.size(),
                    (out / "threshold_sweep.csv").c_str());
    }
    return curve;
}

int cmd_simulate(const Config& c, const Overrides& o) {
    run_simulate_stage(c, c.output_dir, o.threads);
    return kExitOk;
}

int cmd_reconstruct(const std::string& samples_path, const Config& c, const Overrides& o) {
    auto samples = read_samples(samples_path);
    ReconResult result = run_reconstruct_stage(samples, c, c.output_dir, o.threads);
    return result.diagnostics.converged ? kExitOk : kExitNoConvergence;
}

int cmd_wigner(const std::string& state_path, const Config& c) {
    auto state = state_from_json(parse_json_file(state_path));
    run_wigner_stage(state, c, c.output_dir);
    return kExitOk;
}

int cmd_bell(const std::string& samples_path, const Config& c) {
    auto samples = read_samples(samples_path);
    run_bell_stage(samples, c, c.output_dir);
    return kExitOk;
}

int cmd_pipeline(const Config& c, const Overrides& o) {
    const fs::path out = c.output_dir;
    auto samples = run_simulate_stage(c, out, o.threads);
    ReconResult recon = run_reconstruct_stage(samples, c, out, o.threads);
    run_wigner_stage(recon.state, c, out);
    BellCurve curve = run_bell_stage(samples, c, out);

    Json manifest{{"command", "pipeline"},
                  {"created_utc", utc_now()},
                  {"seed", c.run.rng_seed},
                  {"model", model_to_json(c.model)},
                  {"n_samples", static_cast<std::int64_t>(samples.size())},
                  {"recon_iterations", recon.diagnostics.iterations},
                  {"recon_converged", recon.diagnostics.converged},
                  {"bell_retained",
                   static_cast<std::int64_t>(std::llround(curve.retained_fraction *
                                                          static_cast<double>(samples.size())))}};
    write_json_file((out / "manifest.json").string(), manifest);

    for (double d : recon.diagnostics.log_likelihood_deltas)
        if (d < -1e-10) throw NumericError("log-likelihood decreased during reconstruction");
    if (!std::isfinite(curve.amplitude))
        throw NumericError("bell amplitude is not finite");

    if (!recon.diagnostics.converged) {
        std::printf("pipeline: reconstruction did not converge\n");
        return kExitNoConvergence;
    }
    std::printf("pipeline: ok\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-rail single photon: homodyne simulation, tomography, and "
                 "correlation analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::string samples_path;
    std::string state_path;
    Overrides o;
    std::uint64_t seed_value = 0;
    double threshold_value = 0.0;
    std::string plane_value;
    std::string out_value;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--out", out_value, "output directory (default from config)");
        cmd->add_option("--threads", o.threads, "worker thread count")
            ->check(CLI::PositiveNumber);
    };

    auto* sim = app.add_subcommand("simulate", "draw quadrature samples from the model");
    add_common(sim);
    auto* sim_seed = sim->add_option("--seed", seed_value, "RNG seed override");

    auto* rec = app.add_subcommand("reconstruct",
                                   "maximum-likelihood state from a samples CSV");
    rec->add_option("samples", samples_path, "samples CSV file")->required();
    add_common(rec);

    auto* wig = app.add_subcommand("wigner", "Wigner cross sections of a state JSON");
    wig->add_option("state", state_path, "two-mode state JSON file")->required();
    add_common(wig);
    auto* wig_plane = wig->add_option("--plane", plane_value,
                                      "single plane: xa_pa_zero, pa_pb_zero, xb_zero");

    auto* bel = app.add_subcommand("bell", "thresholded correlation analysis of samples");
    bel->add_option("samples", samples_path, "samples CSV file")->required();
    add_common(bel);
    auto* bel_thresh = bel->add_option("--threshold", threshold_value,
                                       "discrimination threshold override");
    auto* bel_seed = bel->add_option("--seed", seed_value, "bootstrap seed override");

    auto* pipe = app.add_subcommand("pipeline",
                                    "simulate, reconstruct, wigner, and bell in sequence");
    add_common(pipe);
    auto* pipe_seed = pipe->add_option("--seed", seed_value, "RNG seed override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitValidation;
    }

    try {
        if (sim_seed->count() || bel_seed->count() || pipe_seed->count())
            o.seed = seed_value;
        if (bel_thresh->count()) o.threshold = threshold_value;
        if (wig_plane->count()) o.plane = plane_value;
        if (!out_value.empty()) o.out_dir = out_value;

        Config c = load_config(config_path);
        apply_overrides(c, o);

        if (sim->parsed()) return cmd_simulate(c, o);
        if (rec->parsed()) return cmd_reconstruct(samples_path, c, o);
        if (wig->parsed()) return cmd_wigner(state_path, c);
        if (bel->parsed()) return cmd_bell(samples_path, c);
        if (pipe->parsed()) return cmd_pipeline(c, o);
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
