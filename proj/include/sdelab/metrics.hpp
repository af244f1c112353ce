#pragma once

// Sample-quality metrics used to compare sampler output against analytic
// references: empirical moments, unbiased RBF-kernel MMD^2, one- and
// two-sample Kolmogorov-Smirnov, and 1D Wasserstein-1 distance. Everything
// here is deterministic given its inputs (bandwidth selection subsamples a
// fixed prefix, never a random subset).

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sdelab/gmm.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

struct Moments {
    Vec mean;
    Vec var;                   // unbiased, per dimension
    std::vector<Vec> cov;      // unbiased, full matrix
    std::size_t n = 0;
};

inline Moments moments(const std::vector<Vec>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("moments: need at least 2 samples");
    std::size_t n = xs.size(), d = xs[0].size();
    Moments m;
    m.n = n;
    m.mean.assign(d, 0.0);
    for (const Vec& x : xs) {
        check_dim(x, d, "moments");
        axpy(1.0, x, m.mean);
    }
    for (double& v : m.mean) v /= double(n);
    m.cov.assign(d, Vec(d, 0.0));
    for (const Vec& x : xs)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                m.cov[i][j] += (x[i] - m.mean[i]) * (x[j] - m.mean[j]);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            m.cov[i][j] /= double(n - 1);
    m.var.resize(d);
    for (std::size_t i = 0; i < d; ++i) m.var[i] = m.cov[i][i];
    return m;
}

// Median-heuristic RBF bandwidth: gamma = 1 / median of pairwise squared
// distances over a deterministic prefix of the pooled samples.
inline double rbf_gamma_median(const std::vector<Vec>& x, const std::vector<Vec>& y) {
    std::vector<const Vec*> pool;
    std::size_t cap = 512;
    for (std::size_t i = 0; i < std::min(cap, x.size()); ++i) pool.push_back(&x[i]);
    for (std::size_t i = 0; i < std::min(cap, y.size()); ++i) pool.push_back(&y[i]);
    std::vector<double> d2;
    d2.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < pool[i]->size(); ++k) {
                double diff = (*pool[i])[k] - (*pool[j])[k];
                s += diff * diff;
            }
            d2.push_back(s);
        }
    if (d2.empty()) throw std::invalid_argument("rbf_gamma_median: not enough samples");
    std::size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + mid, d2.end());
    double med = d2[mid];
    if (!(med > 0.0)) throw std::invalid_argument("rbf_gamma_median: degenerate samples");
    return 1.0 / med;
}

// Unbiased U-statistic estimate of MMD^2 with k(a,b) = exp(-gamma |a-b|^2).
// gamma <= 0 selects the median heuristic.
inline double mmd2_rbf(const std::vector<Vec>& x, const std::vector<Vec>& y, double gamma = 0.0) {
    if (x.size() < 2 || y.size() < 2) throw std::invalid_argument("mmd2_rbf: need at least 2 samples per set");
    if (gamma <= 0.0) gamma = rbf_gamma_median(x, y);
    auto k = [gamma](const Vec& a, const Vec& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = a[i] - b[i];
            s += d * d;
        }
        return std::exp(-gamma * s);
    };
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    std::size_t m = x.size(), n = y.size();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) kxx += k(x[i], x[j]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) kyy += k(y[i], y[j]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) kxy += k(x[i], y[j]);
    return 2.0 * kxx / (double(m) * double(m - 1)) + 2.0 * kyy / (double(n) * double(n - 1)) -
           2.0 * kxy / (double(m) * double(n));
}

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
inline double kolmogorov_pvalue(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

inline KsResult ks_test_1d(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_test_1d: empty sample");
    std::sort(samples.begin(), samples.end());
    std::size_t n = samples.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double f = cdf(samples[i]);
        d = std::max(d, std::fabs(f - double(i + 1) / n));
        d = std::max(d, std::fabs(f - double(i) / n));
    }
    double rn = std::sqrt(double(n));
    KsResult r;
    r.statistic = d;
    r.p_value = kolmogorov_pvalue((rn + 0.12 + 0.11 / rn) * d);
    return r;
}

inline KsResult ks_test_2sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_test_2sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::fabs(double(i) / a.size() - double(j) / b.size()));
    }
    double ne = double(a.size()) * double(b.size()) / double(a.size() + b.size());
    double rn = std::sqrt(ne);
    KsResult r;
    r.statistic = d;
    r.p_value = kolmogorov_pvalue((rn + 0.12 + 0.11 / rn) * d);
    return r;
}

// Critical value c(alpha) * sqrt((m+n)/(mn)) for the two-sample test.
inline double ks_2sample_critical(double alpha, std::size_t m, std::size_t n) {
    double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c * std::sqrt(double(m + n) / (double(m) * double(n)));
}

// W1(empirical, F) = int |F_n(x) - F(x)| dx, computed exactly per order-
// statistic segment given the antiderivative G(x) = int_{-inf}^x F. The
// level crossings inside a segment are found by bisection (F is monotone).
inline double wasserstein1_1d(std::vector<double> samples, const std::function<double(double)>& cdf,
                              const std::function<double(double)>& cdf_antideriv) {
    if (samples.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample");
    std::sort(samples.begin(), samples.end());
    std::size_t n = samples.size();

    auto segment = [&](double a, double b, double level) {
        // int_a^b |F - level| with F monotone increasing
        double fa = cdf(a) - level, fb = cdf(b) - level;
        auto piece = [&](double lo, double hi) {
            return std::fabs(cdf_antideriv(hi) - cdf_antideriv(lo) - level * (hi - lo));
        };
        if (fa * fb >= 0.0) return piece(a, b);
        double lo = a, hi = b;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            if ((cdf(mid) - level) * fa <= 0.0)
                hi = mid;
            else
                lo = mid;
            if (hi - lo < 1e-13 * (1.0 + std::fabs(a) + std::fabs(b))) break;
        }
        double x = 0.5 * (lo + hi);
        return piece(a, x) + piece(x, b);
    };

    // left tail: |F - 0| integrates to G(x_1)
    double total = cdf_antideriv(samples.front());
    for (std::size_t i = 0; i + 1 < n; ++i)
        total += segment(samples[i], samples[i + 1], double(i + 1) / n);
    // right tail: int (1 - F) = (x - G(x)) evaluated against a far point
    double far = samples.back() + 1.0;
    double tail = (far - cdf_antideriv(far)) - (samples.back() - cdf_antideriv(samples.back()));
    for (int it = 0; it < 200 && tail > 1e-14; ++it) {
        double next = far + std::max(1.0, far - samples.back());
        double inc = (next - cdf_antideriv(next)) - (far - cdf_antideriv(far));
        tail += inc;
        far = next;
        if (inc < 1e-15 * (1.0 + tail)) break;
    }
    return total + tail;
}

inline double wasserstein1_1d(const std::vector<double>& samples, const PerturbedMixture& ref) {
    return wasserstein1_1d(
        samples, [&](double x) { return cdf_1d(ref, x); }, [&](double x) { return cdf_antideriv_1d(ref, x); });
}

// W1 between two equal-size empirical samples: mean |x_(i) - y_(i)|.
inline double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("wasserstein1_1d: need equal nonzero sample sizes");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
    return acc / a.size();
}

inline std::vector<double> component_1d(const std::vector<Vec>& xs, std::size_t j) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i][j];
    return out;
}

}  // namespace sdelab
