#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace dualrail;

namespace {

RunConfig make_run(const ModelSpec& model, std::int64_t n, PhaseSchedule schedule,
                   double fixed, std::uint64_t seed) {
    RunConfig config;
    config.model = model;
    config.n_samples = n;
    config.schedule = schedule;
    config.fixed_delta_theta = fixed;
    config.rng_seed = seed;
    return config;
}

bool identical(const std::vector<QuadratureSample>& a,
               const std::vector<QuadratureSample>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].delta_theta != b[i].delta_theta || a[i].x_a != b[i].x_a ||
            a[i].x_b != b[i].x_b)
            return false;
    return true;
}

// CDF of the x_a marginal: mixture of the vacuum and one-photon laws.
double marginal_cdf(double x, double w1) {
    const double f0 = 0.5 * (1.0 + std::erf(x));
    const double f1 = f0 - x * std::exp(-x * x) / std::sqrt(M_PI);
    return (1.0 - w1) * f0 + w1 * f1;
}

}  // namespace

TEST_CASE("sampling is deterministic in the seed and thread count") {
    const auto config = make_run(testutil::experiment_model(), 40000,
                                 PhaseSchedule::Sweep, 0.0, 99);
    const auto one = sample_run(config, 1);
    const auto again = sample_run(config, 1);
    const auto threaded = sample_run(config, 3);
    REQUIRE(identical(one, again));
    REQUIRE(identical(one, threaded));

    auto other = config;
    other.rng_seed = 100;
    REQUIRE_FALSE(identical(one, sample_run(other, 1)));
}

TEST_CASE("phase schedules produce the advertised angles") {
    const auto model = testutil::experiment_model();

    const auto swept = sample_run(make_run(model, 5000, PhaseSchedule::Sweep, 0.0, 5), 1);
    const double step = 2.0 * M_PI / 5000.0;
    for (const std::size_t i : {std::size_t{0}, std::size_t{17}, std::size_t{4999}})
        REQUIRE(swept[i].delta_theta == step * static_cast<double>(i));

    const auto fixed = sample_run(make_run(model, 100, PhaseSchedule::Fixed, 7.0, 5), 1);
    const double wrapped = 7.0 - 2.0 * M_PI;
    for (const auto& s : fixed)
        REQUIRE(s.delta_theta == Catch::Approx(wrapped).margin(1e-12));

    const auto uniform =
        sample_run(make_run(model, 50000, PhaseSchedule::Uniform, 0.0, 5), 1);
    std::vector<double> phases;
    for (const auto& s : uniform) {
        REQUIRE(s.delta_theta >= 0.0);
        REQUIRE(s.delta_theta < 2.0 * M_PI);
        phases.push_back(s.delta_theta);
    }
    const auto ks = ks_test_one_sample(
        phases, [](double t) { return t / (2.0 * M_PI); });
    REQUIRE(ks.p_value > 0.01);
}

TEST_CASE("x_a marginal follows the reduced-state law at any phase") {
    const auto model = testutil::experiment_model();
    // reduced one-photon weight of the lossy state
    const double w1 = model.eta_prep * model.eta_det * 0.5;

    std::vector<std::vector<double>> xa_sets;
    for (const double theta : {0.0, M_PI / 2.0, 2.2}) {
        const auto run =
            sample_run(make_run(model, 100000, PhaseSchedule::Fixed, theta, 31), 1);
        std::vector<double> xa;
        xa.reserve(run.size());
        for (const auto& s : run) xa.push_back(s.x_a);
        const auto ks =
            ks_test_one_sample(xa, [&](double x) { return marginal_cdf(x, w1); });
        REQUIRE(ks.p_value > 0.01);
        xa_sets.push_back(std::move(xa));
    }
    REQUIRE(ks_test_two_sample(xa_sets[0], xa_sets[1]).p_value > 0.01);
    REQUIRE(ks_test_two_sample(xa_sets[0], xa_sets[2]).p_value > 0.01);
}

TEST_CASE("signs are anticorrelated in phase and independent in quadrature") {
    const auto model = testutil::experiment_model();
    const auto in_phase =
        sample_run(make_run(model, 100000, PhaseSchedule::Fixed, 0.0, 47), 1);
    std::vector<std::vector<double>> table(2, std::vector<double>(2, 0.0));
    for (const auto& s : in_phase)
        table[s.x_a > 0.0 ? 1 : 0][s.x_b > 0.0 ? 1 : 0] += 1.0;
    REQUIRE(chi2_independence(table).p_value < 1e-6);
    // anticorrelated: opposite-sign cells dominate
    REQUIRE(table[0][1] + table[1][0] > table[0][0] + table[1][1]);

    const auto quadrature =
        sample_run(make_run(model, 100000, PhaseSchedule::Fixed, M_PI / 2.0, 47), 1);
    std::vector<std::vector<double>> table2(2, std::vector<double>(2, 0.0));
    for (const auto& s : quadrature)
        table2[s.x_a > 0.0 ? 1 : 0][s.x_b > 0.0 ? 1 : 0] += 1.0;
    REQUIRE(chi2_independence(table2).p_value > 0.01);
}

TEST_CASE("quadrature covariance follows the interference law") {
    for (const double tau_sq : {0.5, 0.08}) {
        const auto model = testutil::experiment_model(tau_sq);
        const double eta_eff = model.eta_prep * model.eta_det;
        const double taurho = model.bs.tau * model.bs.rho;
        std::uint64_t seed = 1000 + static_cast<std::uint64_t>(tau_sq * 100);
        for (const double theta : {0.0, M_PI / 2.0, M_PI}) {
            const auto run = sample_run(
                make_run(model, 200000, PhaseSchedule::Fixed, theta, seed++), 1);
            std::vector<double> xa, xb;
            xa.reserve(run.size());
            xb.reserve(run.size());
            for (const auto& s : run) {
                xa.push_back(s.x_a);
                xb.push_back(s.x_b);
            }
            const auto est = covariance(xa, xb);
            const double expected = -eta_eff * taurho * std::cos(theta);
            REQUIRE(std::abs(est.covariance - expected) < 3.0 * est.std_error);
        }
    }
}

TEST_CASE("vacuum calibration stream is an uncorrelated gaussian pair") {
    const auto run = sample_vacuum(100000, 7);
    REQUIRE(run.size() == 100000);
    std::vector<double> xa, xb;
    for (const auto& s : run) {
        xa.push_back(s.x_a);
        xb.push_back(s.x_b);
    }
    // vacuum variance 1/2: CDF is (1 + erf(x)) / 2
    const auto cdf = [](double x) { return 0.5 * (1.0 + std::erf(x)); };
    REQUIRE(ks_test_one_sample(xa, cdf).p_value > 0.01);
    REQUIRE(ks_test_one_sample(xb, cdf).p_value > 0.01);
    const auto est = covariance(xa, xb);
    REQUIRE(std::abs(est.covariance) < 3.0 * est.std_error);

    REQUIRE(identical(run, sample_vacuum(100000, 7, 4)));
}

TEST_CASE("quadrature histogram at pi/2 matches the Husimi Q function") {
    const auto model = testutil::experiment_model();
    const double eta_tot = model.eta_prep * model.eta_det;
    const auto run =
        sample_run(make_run(model, 500000, PhaseSchedule::Fixed, M_PI / 2.0, 77), 1);

    const int nb = 20;
    const double lo = -3.0, hi = 3.0;
    const double w = (hi - lo) / nb;
    std::vector<double> hist(nb * nb, 0.0);
    std::int64_t inside = 0;
    for (const auto& s : run) {
        if (s.x_a < lo || s.x_a >= hi || s.x_b < lo || s.x_b >= hi) continue;
        const int i = static_cast<int>((s.x_a - lo) / w);
        const int j = static_cast<int>((s.x_b - lo) / w);
        hist[i * nb + j] += 1.0;
        ++inside;
    }
    REQUIRE(inside > 490000);  // nearly all mass is inside the box

    // exact bin masses of q(x,y) = e^{-x^2-y^2}((1-eta) + eta (x^2+y^2))/pi
    const auto g0 = [](double a, double b) {
        return 0.5 * std::sqrt(M_PI) * (std::erf(b) - std::erf(a));
    };
    const auto g2 = [&](double a, double b) {
        return 0.5 * (a * std::exp(-a * a) - b * std::exp(-b * b)) + 0.5 * g0(a, b);
    };
    double l1 = 0.0;
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j) {
            const double ax = lo + i * w, bx = ax + w;
            const double ay = lo + j * w, by = ay + w;
            const double mass =
                ((1.0 - eta_tot) * g0(ax, bx) * g0(ay, by) +
                 eta_tot * (g2(ax, bx) * g0(ay, by) + g0(ax, bx) * g2(ay, by))) /
                M_PI;
            l1 += std::abs(hist[i * nb + j] / static_cast<double>(run.size()) - mass);
        }
    REQUIRE(l1 < 0.02);
}

TEST_CASE("samples CSV round-trips exactly and validates input") {
    const auto dir = testutil::temp_dir("samples_csv");
    const auto path = (dir / "samples.csv").string();

    const std::vector<QuadratureSample> samples = {
        {0.0, 1.0 / 3.0, -2.0 / 7.0},
        {M_PI, 1e-300, -1.2345678901234567},
        {6.2831853071795862, -0.0, 17.25},
    };
    write_samples(path, samples);
    const auto back = read_samples(path);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        REQUIRE(back[i].delta_theta == samples[i].delta_theta);
        REQUIRE(back[i].x_a == samples[i].x_a);
        REQUIRE(back[i].x_b == samples[i].x_b);
    }

    // header-only files parse to an empty run; writing none produces one
    write_samples(path, {});
    REQUIRE(read_text_file(path) == std::string(kSamplesCsvHeader) + "\n");
    REQUIRE(read_samples(path).empty());

    write_text_file(path, "delta,theta,x\n0,0,0\n");
    REQUIRE_THROWS_WITH(read_samples(path), Catch::Matchers::ContainsSubstring("line 1"));

    write_text_file(path, std::string(kSamplesCsvHeader) + "\n0,0,0\n0,nope,0\n");
    REQUIRE_THROWS_WITH(read_samples(path), Catch::Matchers::ContainsSubstring("line 3"));

    write_text_file(path, std::string(kSamplesCsvHeader) + "\n0,0\n");
    REQUIRE_THROWS_WITH(read_samples(path),
                        Catch::Matchers::ContainsSubstring("3 comma-separated"));

    write_text_file(path, std::string(kSamplesCsvHeader) + "\n0,0,inf\n");
    REQUIRE_THROWS_AS(read_samples(path), ValidationError);

    // CRLF and trailing blank lines are tolerated
    write_text_file(path, std::string(kSamplesCsvHeader) + "\r\n1,2,3\r\n\n");
    const auto crlf = read_samples(path);
    REQUIRE(crlf.size() == 1);
    REQUIRE(crlf[0].x_b == 3.0);

    REQUIRE_THROWS_AS(read_samples((dir / "missing.csv").string()), ValidationError);
}
