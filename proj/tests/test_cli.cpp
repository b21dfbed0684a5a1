#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>

#include "helpers.hpp"

#ifndef CLI_BINARY_PATH
#error "CLI_BINARY_PATH must point at the command line binary"
#endif

using namespace dualrail;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
    const auto out_path = scratch / "cli_stdout.txt";
    const auto err_path = scratch / "cli_stderr.txt";
    const std::string cmd = std::string(CLI_BINARY_PATH) + " " + args + " >\"" +
                            out_path.string() + "\" 2>\"" + err_path.string() + "\"";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    if (fs::exists(out_path)) r.out = read_text_file(out_path.string());
    if (fs::exists(err_path)) r.err = read_text_file(err_path.string());
    return r;
}

void write_config(const fs::path& path, const Json& j) {
    write_json_file(path.string(), j);
}

// keeps the solver cheap for CLI-level checks
Json fast_recon_section() {
    return Json{{"tol", 1e-5},
                {"max_iterations", 400},
                {"quad_edges", Json::array({"-inf", -4.0, -3.0, -2.0, -1.0, -0.5, 0.0,
                                            0.5, 1.0, 2.0, 3.0, 4.0, "inf"})}};
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (const char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("help text lists every subcommand") {
    const auto dir = testutil::temp_dir("cli_help");
    const auto r = run_cli("--help", dir);
    REQUIRE(r.code == 0);
    for (const char* name : {"simulate", "reconstruct", "wigner", "bell", "pipeline"})
        REQUIRE(r.out.find(name) != std::string::npos);

    REQUIRE(run_cli("", dir).code == 1);
    REQUIRE(run_cli("simulate --frobnicate", dir).code == 1);
    REQUIRE(run_cli("teleport", dir).code == 1);
}

TEST_CASE("simulate writes a reproducible samples file and manifest") {
    const auto dir = testutil::temp_dir("cli_simulate");
    const auto config = dir / "config.json";
    write_config(config, Json{{"run", Json{{"n_samples", 2000}}}});

    const auto first = run_cli("simulate --config \"" + config.string() + "\" --seed 7 --out \"" +
                                   (dir / "a").string() + "\"",
                               dir);
    INFO(first.err);
    REQUIRE(first.code == 0);
    REQUIRE(first.out.find("simulate:") != std::string::npos);

    const auto csv = read_text_file((dir / "a" / "samples.csv").string());
    REQUIRE(line_count(csv) == 2001);
    REQUIRE(csv.rfind(kSamplesCsvHeader, 0) == 0);

    const auto manifest = parse_json_file((dir / "a" / "manifest.json").string());
    REQUIRE(manifest.at("command") == "simulate");
    REQUIRE(manifest.at("seed") == 7);
    REQUIRE(manifest.at("n_samples") == 2000);
    // tau_squared is recomputed from the stored amplitude, so allow one ulp
    REQUIRE(manifest.at("model").at("tau_squared").get<double>() ==
            Catch::Approx(0.5).margin(1e-15));
    REQUIRE(manifest.at("phase_schedule") == "sweep");

    const auto second = run_cli("simulate --config \"" + config.string() +
                                    "\" --seed 7 --out \"" + (dir / "b").string() + "\"",
                                dir);
    REQUIRE(second.code == 0);
    REQUIRE(read_text_file((dir / "b" / "samples.csv").string()) == csv);
}

TEST_CASE("reconstruct reports non-convergence with its own exit code") {
    const auto dir = testutil::temp_dir("cli_reconstruct");
    const auto config = dir / "config.json";
    write_config(config, Json{{"run", Json{{"n_samples", 2000}}},
                              {"recon", fast_recon_section()}});
    REQUIRE(run_cli("simulate --config \"" + config.string() + "\" --seed 3 --out \"" +
                        (dir / "data").string() + "\"",
                    dir)
                .code == 0);
    const auto samples = (dir / "data" / "samples.csv").string();

    // deliberately starved of iterations
    auto starved = fast_recon_section();
    starved["max_iterations"] = 3;
    const auto starved_config = dir / "starved.json";
    write_config(starved_config, Json{{"recon", starved}});
    const auto failed = run_cli("reconstruct \"" + samples + "\" --config \"" +
                                    starved_config.string() + "\" --out \"" +
                                    (dir / "failed").string() + "\"",
                                dir);
    REQUIRE(failed.code == 3);
    const auto failed_json = parse_json_file((dir / "failed" / "recon.json").string());
    REQUIRE(failed_json.at("diagnostics").at("converged") == false);
    REQUIRE(failed_json.at("diagnostics").at("iterations") == 3);

    const auto ok = run_cli("reconstruct \"" + samples + "\" --config \"" +
                                config.string() + "\" --out \"" + (dir / "ok").string() +
                                "\"",
                            dir);
    INFO(ok.err);
    REQUIRE(ok.code == 0);
    const auto report = parse_json_file((dir / "ok" / "recon.json").string());
    REQUIRE(report.at("diagnostics").at("converged") == true);
    const double fid = report.at("fit").at("fidelity_vs_model").get<double>();
    REQUIRE(fid > 0.5);
    REQUIRE(fid <= 1.0);
    REQUIRE(report.at("state").at("n_max") == 5);

    REQUIRE(run_cli("reconstruct \"" + (dir / "nowhere.csv").string() + "\"", dir).code ==
            1);
    REQUIRE(run_cli("reconstruct", dir).code == 1);
}

TEST_CASE("wigner renders the requested cross sections") {
    const auto dir = testutil::temp_dir("cli_wigner");
    const auto state_path = dir / "state.json";
    write_json_file(state_path.string(),
                    state_to_json(make_true_state(testutil::corrected_model(), false)));

    const auto config = dir / "config.json";
    write_config(config, Json{{"wigner", Json{{"axis_min", -1.0},
                                              {"axis_max", 1.0},
                                              {"step", 0.25}}}});

    const auto all = run_cli("wigner \"" + state_path.string() + "\" --config \"" +
                                 config.string() + "\" --out \"" + (dir / "all").string() +
                                 "\"",
                             dir);
    INFO(all.err);
    REQUIRE(all.code == 0);
    for (const char* plane : {"xa_pa_zero", "pa_pb_zero", "xb_zero"}) {
        REQUIRE(fs::exists(dir / "all" / ("wigner_" + std::string(plane) + ".csv")));
        REQUIRE(fs::exists(dir / "all" / ("wigner_" + std::string(plane) + ".json")));
    }
    const auto axes =
        parse_json_file((dir / "all" / "wigner_pa_pb_zero.json").string());
    REQUIRE(axes.at("points") == 9);
    REQUIRE(axes.at("axis1") == "x_a");
    const auto grid_csv =
        read_text_file((dir / "all" / "wigner_pa_pb_zero.csv").string());
    REQUIRE(line_count(grid_csv) == 9);

    const auto one = run_cli("wigner \"" + state_path.string() + "\" --config \"" +
                                 config.string() + "\" --plane xb_zero --out \"" +
                                 (dir / "one").string() + "\"",
                             dir);
    REQUIRE(one.code == 0);
    REQUIRE(fs::exists(dir / "one" / "wigner_xb_zero.csv"));
    REQUIRE_FALSE(fs::exists(dir / "one" / "wigner_xa_pa_zero.csv"));

    REQUIRE(run_cli("wigner \"" + state_path.string() + "\" --plane diagonal", dir).code ==
            1);
    REQUIRE(run_cli("wigner \"" + (dir / "absent.json").string() + "\"", dir).code == 1);
}

TEST_CASE("bell analysis emits curve, summary, and optional threshold sweep") {
    const auto dir = testutil::temp_dir("cli_bell");
    const auto config = dir / "config.json";
    write_config(config,
                 Json{{"run", Json{{"n_samples", 20000}}},
                      {"bell", Json{{"bootstrap_resamples", 50},
                                    {"sweep_thresholds", {0.5, 0.85}}}}});
    REQUIRE(run_cli("simulate --config \"" + config.string() + "\" --seed 21 --out \"" +
                        (dir / "data").string() + "\"",
                    dir)
                .code == 0);
    const auto samples = (dir / "data" / "samples.csv").string();

    const auto r = run_cli("bell \"" + samples + "\" --config \"" + config.string() +
                               "\" --out \"" + (dir / "out").string() + "\"",
                           dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    REQUIRE(r.out.find("V=") != std::string::npos);

    const auto curve = read_text_file((dir / "out" / "bell_curve.csv").string());
    REQUIRE(curve.rfind("phase_bin,E,stderr,retained,total\n", 0) == 0);
    REQUIRE(line_count(curve) == 25);  // header + 24 bins

    const auto summary = parse_json_file((dir / "out" / "bell_summary.json").string());
    for (const char* key :
         {"V", "sigma_V", "S", "retained_fraction", "violation", "bootstrap_sigma_V"})
        REQUIRE(summary.contains(key));

    const auto sweep = read_text_file((dir / "out" / "threshold_sweep.csv").string());
    REQUIRE(sweep.rfind("threshold,V,retained_fraction,violation\n", 0) == 0);
    REQUIRE(line_count(sweep) == 3);

    REQUIRE(run_cli("bell \"" + samples + "\" --threshold -1", dir).code == 1);
    // threshold so harsh that no phase bin keeps enough events for a fit
    const auto starved = run_cli("bell \"" + samples + "\" --threshold 1.9 --out \"" +
                                     (dir / "starved").string() + "\"",
                                 dir);
    REQUIRE(starved.code == 2);
}

TEST_CASE("config file typos are rejected up front") {
    const auto dir = testutil::temp_dir("cli_config");
    const auto config = dir / "config.json";

    write_config(config, Json{{"modle", Json::object()}});
    auto r = run_cli("simulate --config \"" + config.string() + "\"", dir);
    REQUIRE(r.code == 1);
    REQUIRE(r.err.find("modle") != std::string::npos);

    write_text_file(config.string(), "{broken");
    r = run_cli("simulate --config \"" + config.string() + "\"", dir);
    REQUIRE(r.code == 1);
    REQUIRE(r.err.find("invalid JSON") != std::string::npos);

    write_config(config, Json{{"run", Json{{"n_samples", -5}}}});
    REQUIRE(run_cli("simulate --config \"" + config.string() + "\"", dir).code == 1);

    REQUIRE(run_cli("simulate --config \"" + (dir / "ghost.json").string() + "\"", dir)
                .code == 1);
}

TEST_CASE("pipeline produces every artifact and is seed-idempotent") {
    const auto dir = testutil::temp_dir("cli_pipeline");
    const auto config = dir / "config.json";
    write_config(config, Json{{"run", Json{{"n_samples", 20000}}},
                              {"recon", fast_recon_section()},
                              {"wigner", Json{{"axis_min", -1.0},
                                              {"axis_max", 1.0},
                                              {"step", 0.5}}}});

    auto invoke = [&](const std::string& out, const std::string& extra) {
        return run_cli("pipeline --config \"" + config.string() + "\" --seed 5 --out \"" +
                           (dir / out).string() + "\" " + extra,
                       dir);
    };

    const auto a = invoke("a", "");
    INFO(a.out);
    INFO(a.err);
    REQUIRE(a.code == 0);
    REQUIRE(a.out.find("pipeline: ok") != std::string::npos);
    for (const char* name :
         {"samples.csv", "manifest.json", "recon.json", "bell_curve.csv",
          "bell_summary.json", "wigner_xa_pa_zero.csv", "wigner_pa_pb_zero.csv",
          "wigner_xb_zero.csv"})
        REQUIRE(fs::exists(dir / "a" / name));

    const auto manifest = parse_json_file((dir / "a" / "manifest.json").string());
    REQUIRE(manifest.at("command") == "pipeline");
    REQUIRE(manifest.at("recon_converged") == true);
    REQUIRE(manifest.at("bell_retained").get<std::int64_t>() > 0);

    const auto b = invoke("b", "");
    REQUIRE(b.code == 0);
    const auto c = invoke("c", "--threads 3");
    REQUIRE(c.code == 0);

    for (const char* name : {"samples.csv", "recon.json", "bell_curve.csv",
                             "bell_summary.json", "wigner_xb_zero.csv"}) {
        const auto ref = read_text_file((dir / "a" / name).string());
        REQUIRE(read_text_file((dir / "b" / name).string()) == ref);
        REQUIRE(read_text_file((dir / "c" / name).string()) == ref);
    }
    auto m_a = parse_json_file((dir / "a" / "manifest.json").string());
    auto m_b = parse_json_file((dir / "b" / "manifest.json").string());
    m_a.erase("created_utc");
    m_b.erase("created_utc");
    REQUIRE(m_a == m_b);
}
