#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "dualrail/integrate.hpp"
#include "helpers.hpp"

using namespace dualrail;

TEST_CASE("xoshiro stream is deterministic and seed-sensitive") {
    Xoshiro256StarStar a(42), b(42), c(43);
    for (int i = 0; i < 64; ++i) {
        const auto x = a.next();
        REQUIRE(x == b.next());
    }
    bool differs = false;
    Xoshiro256StarStar a2(42);
    for (int i = 0; i < 64; ++i) differs |= (a2.next() != c.next());
    REQUIRE(differs);
}

TEST_CASE("uniform draws live in [0,1) and look uniform") {
    Xoshiro256StarStar rng(7);
    std::vector<double> xs(100000);
    for (auto& x : xs) {
        x = rng.uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
    const auto ks = ks_test_one_sample(xs, [](double x) { return x; });
    REQUIRE(ks.p_value > 0.01);
}

TEST_CASE("gaussian pairs match the normal distribution") {
    Xoshiro256StarStar rng(11);
    std::vector<double> xs;
    xs.reserve(100000);
    while (xs.size() < 100000) {
        const auto [g1, g2] = rng.gaussian_pair();
        xs.push_back(g1);
        xs.push_back(g2);
    }
    const auto mv = mean_variance(xs);
    REQUIRE(std::abs(mv.mean) < 0.02);
    REQUIRE(std::abs(mv.variance - 1.0) < 0.03);
    const auto ks = ks_test_one_sample(
        xs, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); });
    REQUIRE(ks.p_value > 0.01);

    // scaled variant
    Xoshiro256StarStar rng2(11);
    const auto [s1, s2] = rng2.gaussian_pair(0.5);
    Xoshiro256StarStar rng3(11);
    const auto [u1, u2] = rng3.gaussian_pair(1.0);
    REQUIRE(s1 == Catch::Approx(0.5 * u1));
    REQUIRE(s2 == Catch::Approx(0.5 * u2));
}

TEST_CASE("substream and stage seeds separate streams") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(substream_seed(9001, i));
    REQUIRE(seeds.size() == 100);

    REQUIRE(stage_seed(5, "simulate") != stage_seed(5, "bell-bootstrap"));
    REQUIRE(stage_seed(5, "simulate") != stage_seed(6, "simulate"));
    REQUIRE(stage_seed(5, "simulate") == stage_seed(5, "simulate"));
}

TEST_CASE("adaptive integration handles finite and infinite ranges") {
    const auto square = [](double x) { return x * x; };
    REQUIRE(integrate(square, 0.0, 1.0, 1e-12) == Catch::Approx(1.0 / 3.0).margin(1e-12));

    const double inf = std::numeric_limits<double>::infinity();
    const auto gauss = [](double x) { return std::exp(-x * x); };
    REQUIRE(integrate(gauss, -inf, inf, 1e-10) ==
            Catch::Approx(std::sqrt(M_PI)).margin(1e-9));
    REQUIRE(integrate([](double x) { return x * std::exp(-x); }, 0.0, inf, 1e-10) ==
            Catch::Approx(1.0).margin(1e-9));
    // reversed bounds flip the sign
    REQUIRE(integrate(square, 1.0, 0.0, 1e-12) ==
            Catch::Approx(-1.0 / 3.0).margin(1e-12));
}

TEST_CASE("mean and variance are the unbiased estimates") {
    const auto mv = mean_variance({1.0, 2.0, 3.0, 4.0});
    REQUIRE(mv.mean == Catch::Approx(2.5).margin(1e-15));
    REQUIRE(mv.variance == Catch::Approx(5.0 / 3.0).margin(1e-12));
    REQUIRE_THROWS_AS(mean_variance({1.0}), ValidationError);
}

TEST_CASE("covariance estimate recovers a planted correlation") {
    Xoshiro256StarStar rng(17);
    const std::size_t n = 200000;
    std::vector<double> x(n), y(n);
    const double rho = -0.3;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [g1, g2] = rng.gaussian_pair();
        x[i] = g1;
        y[i] = rho * g1 + std::sqrt(1.0 - rho * rho) * g2;
    }
    const auto est = covariance(x, y);
    REQUIRE(std::abs(est.covariance - rho) < 3.0 * est.std_error);
    REQUIRE(est.std_error == Catch::Approx(std::sqrt((1.0 + rho * rho) / n)).epsilon(0.1));
}

TEST_CASE("kolmogorov tail matches the published value at lambda = 1") {
    REQUIRE(kolmogorov_q(1.0) == Catch::Approx(0.2699996716773672).margin(1e-10));
    REQUIRE(kolmogorov_q(1e-12) == Catch::Approx(1.0));
    REQUIRE(kolmogorov_q(3.0) < 1e-7);
}

TEST_CASE("one-sample KS accepts the true CDF and rejects a shifted one") {
    Xoshiro256StarStar rng(23);
    std::vector<double> xs(20000);
    for (auto& x : xs) x = rng.uniform();
    REQUIRE(ks_test_one_sample(xs, [](double x) { return x; }).p_value > 0.01);
    const auto shifted = ks_test_one_sample(
        xs, [](double x) { return std::clamp(x - 0.05, 0.0, 1.0); });
    REQUIRE(shifted.p_value < 1e-6);
}

TEST_CASE("two-sample KS separates distinct distributions") {
    Xoshiro256StarStar rng(29);
    std::vector<double> a(20000), b(20000), c(20000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = testutil::gaussian(rng);
        b[i] = testutil::gaussian(rng);
        c[i] = testutil::gaussian(rng) + 0.08;
    }
    REQUIRE(ks_test_two_sample(a, b).p_value > 0.01);
    REQUIRE(ks_test_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("chi-squared independence test on a 2x2 table") {
    const auto dep = chi2_independence({{10.0, 20.0}, {20.0, 10.0}});
    REQUIRE(dep.dof == 1);
    REQUIRE(dep.statistic == Catch::Approx(20.0 / 3.0).margin(1e-12));
    REQUIRE(dep.p_value == Catch::Approx(0.009823).margin(2e-4));

    const auto indep = chi2_independence({{30.0, 60.0}, {10.0, 20.0}});
    REQUIRE(indep.statistic == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(indep.p_value == Catch::Approx(1.0).margin(1e-12));

    REQUIRE_THROWS_AS(chi2_independence({{1.0, 2.0}}), ValidationError);
}
