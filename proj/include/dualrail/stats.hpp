#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "dualrail/errors.hpp"

// Statistics helpers shared by the analysis code and the test suite.

namespace dualrail {

struct MeanVar {
    double mean = 0.0;
    double variance = 0.0;  // unbiased
};

inline MeanVar mean_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw ValidationError("mean_variance: need at least 2 samples");
    double m = 0.0;
    for (const double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double s2 = 0.0;
    for (const double x : xs) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(xs.size() - 1);
    return {m, s2};
}

struct CovarianceEstimate {
    double covariance = 0.0;
    double std_error = 0.0;
};

// Sample covariance with a moment-based standard error:
// var(cov_hat) ~ (E[(x-mx)^2 (y-my)^2] - cov^2) / n.
inline CovarianceEstimate covariance(const std::vector<double>& x,
                                     const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("covariance: inputs must have equal size >= 2");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double c = 0.0, m22 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        c += dx * dy;
        m22 += dx * dx * dy * dy;
    }
    c /= n - 1.0;
    m22 /= n;
    const double var = std::max(0.0, m22 - c * c) / n;
    return {c, std::sqrt(var)};
}

// Kolmogorov distribution tail Q(lambda) = 2 sum_j (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 1e-8) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 128; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += (j % 2 == 1) ? term : -term;
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

inline KsResult ks_test_one_sample(std::vector<double> xs,
                                   const std::function<double(double)>& cdf) {
    if (xs.empty()) throw ValidationError("ks_test_one_sample: empty sample");
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    const double sn = std::sqrt(n);
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    return {d, kolmogorov_q(lambda)};
}

inline KsResult ks_test_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ValidationError("ks_test_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double xa = a[i];
        const double xb = b[j];
        if (xa <= xb) ++i;
        if (xb <= xa) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na -
                                 static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    const double lambda = (ne + 0.12 + 0.11 / ne) * d;
    return {d, kolmogorov_q(lambda)};
}

struct Chi2Result {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Pearson chi-squared test of independence on a contingency table of counts.
inline Chi2Result chi2_independence(const std::vector<std::vector<double>>& table) {
    const std::size_t rows = table.size();
    if (rows < 2) throw ValidationError("chi2_independence: need >= 2 rows");
    const std::size_t cols = table.front().size();
    if (cols < 2) throw ValidationError("chi2_independence: need >= 2 columns");
    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (table[r].size() != cols)
            throw ValidationError("chi2_independence: ragged table");
        for (std::size_t c = 0; c < cols; ++c) {
            row_sum[r] += table[r][c];
            col_sum[c] += table[r][c];
            total += table[r][c];
        }
    }
    if (total <= 0.0) throw ValidationError("chi2_independence: empty table");
    double stat = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double expect = row_sum[r] * col_sum[c] / total;
            if (expect <= 0.0) continue;
            const double diff = table[r][c] - expect;
            stat += diff * diff / expect;
        }
    }
    const int dof = static_cast<int>((rows - 1) * (cols - 1));
    const boost::math::chi_squared dist(dof);
    const double p = boost::math::cdf(boost::math::complement(dist, stat));
    return {stat, dof, p};
}

}  // namespace dualrail
