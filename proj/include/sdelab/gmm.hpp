#pragma once

// Gaussian mixtures with diagonal component covariances, and their exact
// perturbations under the forward SDEs. Because each kernel is Gaussian,
// perturbing a mixture keeps it a mixture: component k goes to
//   mean  m(t) * mu_k
//   var   m(t)^2 * var_k + s(t)^2
// which gives closed-form densities, scores, posteriors, and divergences
// at every t. These are the oracles everything else is checked against.
//
// All densities are handled in log space with logsumexp; nothing here
// exponentiates an unnormalized density.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdelab/rng.hpp"
#include "sdelab/score_function.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

constexpr double kLog2Pi = 1.8378770664093453;

struct GaussianMixture {
    int dim = 0;
    std::vector<double> weights;
    std::vector<Vec> means;
    std::vector<Vec> vars;  // diagonal variances per component

    int n_components() const { return static_cast<int>(weights.size()); }

    void validate() const {
        if (dim < 1) throw std::invalid_argument("GaussianMixture: dim must be >= 1");
        std::size_t k = weights.size();
        if (k == 0) throw std::invalid_argument("GaussianMixture: needs at least one component");
        if (means.size() != k || vars.size() != k)
            throw std::invalid_argument("GaussianMixture: component count mismatch");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w > 0.0)) throw std::invalid_argument("GaussianMixture: weights must be positive");
            sum += w;
        }
        if (std::fabs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("GaussianMixture: weights must sum to 1");
        for (std::size_t i = 0; i < k; ++i) {
            if (means[i].size() != static_cast<std::size_t>(dim) || vars[i].size() != static_cast<std::size_t>(dim))
                throw std::invalid_argument("GaussianMixture: component dimension mismatch");
            for (double v : vars[i])
                if (!(v > 0.0)) throw std::invalid_argument("GaussianMixture: variances must be positive");
        }
    }

    int sample_component(RngStream& rng) const {
        double u = rng.uniform();
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
            acc += weights[k];
            if (u < acc) return static_cast<int>(k);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    Vec sample(RngStream& rng) const {
        int k = sample_component(rng);
        Vec x(dim);
        for (int j = 0; j < dim; ++j) x[j] = means[k][j] + std::sqrt(vars[k][j]) * rng.gaussian();
        return x;
    }
};

inline GaussianMixture make_gmm(std::vector<double> weights, std::vector<Vec> means, std::vector<Vec> vars) {
    GaussianMixture g;
    g.dim = means.empty() ? 0 : static_cast<int>(means[0].size());
    g.weights = std::move(weights);
    g.means = std::move(means);
    g.vars = std::move(vars);
    g.validate();
    return g;
}

// The 1D two-component benchmark used across the sampler and metric checks.
inline GaussianMixture bimodal_benchmark() {
    return make_gmm({0.5, 0.5}, {{-3.0}, {3.0}}, {{1.0}, {1.0}});
}

inline Vec mixture_mean(const GaussianMixture& g) {
    Vec m(g.dim, 0.0);
    for (int k = 0; k < g.n_components(); ++k) axpy(g.weights[k], g.means[k], m);
    return m;
}

inline Vec mixture_var(const GaussianMixture& g) {
    Vec m = mixture_mean(g);
    Vec v(g.dim, 0.0);
    for (int k = 0; k < g.n_components(); ++k)
        for (int j = 0; j < g.dim; ++j)
            v[j] += g.weights[k] * (g.vars[k][j] + g.means[k][j] * g.means[k][j]);
    for (int j = 0; j < g.dim; ++j) v[j] -= m[j] * m[j];
    return v;
}

// Mixture pushed through the Gaussian kernel x_t = m x_0 + s z.
struct PerturbedMixture {
    int dim = 0;
    double mean_coeff = 1.0;
    double std = 0.0;
    std::vector<double> weights;
    std::vector<Vec> means;
    std::vector<Vec> vars;

    int n_components() const { return static_cast<int>(weights.size()); }

    Vec sample(RngStream& rng) const {
        double u = rng.uniform();
        double acc = 0.0;
        int k = n_components() - 1;
        for (int i = 0; i + 1 < n_components(); ++i) {
            acc += weights[i];
            if (u < acc) {
                k = i;
                break;
            }
        }
        Vec x(dim);
        for (int j = 0; j < dim; ++j) x[j] = means[k][j] + std::sqrt(vars[k][j]) * rng.gaussian();
        return x;
    }
};

inline PerturbedMixture perturb_gmm(const GaussianMixture& g, double mean_coeff, double std) {
    g.validate();
    if (std < 0.0) throw std::invalid_argument("perturb_gmm: std must be >= 0");
    PerturbedMixture p;
    p.dim = g.dim;
    p.mean_coeff = mean_coeff;
    p.std = std;
    p.weights = g.weights;
    p.means.resize(g.n_components());
    p.vars.resize(g.n_components());
    for (int k = 0; k < g.n_components(); ++k) {
        p.means[k] = scaled(g.means[k], mean_coeff);
        p.vars[k].resize(g.dim);
        for (int j = 0; j < g.dim; ++j)
            p.vars[k][j] = mean_coeff * mean_coeff * g.vars[k][j] + std * std;
    }
    return p;
}

inline PerturbedMixture perturb_gmm(const GaussianMixture& g, const SdeSpec& sde, double t) {
    KernelPoint k = perturbation_kernel(sde, t);
    return perturb_gmm(g, k.mean_coeff, k.std);
}

namespace detail {

inline double component_log_density(const Vec& mean, const Vec& var, const Vec& x) {
    double lp = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double d = x[j] - mean[j];
        lp += -0.5 * (kLog2Pi + std::log(var[j])) - 0.5 * d * d / var[j];
    }
    return lp;
}

inline std::vector<double> component_log_joint(const PerturbedMixture& p, const Vec& x) {
    std::vector<double> lj(p.n_components());
    for (int k = 0; k < p.n_components(); ++k)
        lj[k] = std::log(p.weights[k]) + component_log_density(p.means[k], p.vars[k], x);
    return lj;
}

inline double logsumexp(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace detail

inline double log_density(const PerturbedMixture& p, const Vec& x) {
    check_dim(x, p.dim, "log_density");
    return detail::logsumexp(detail::component_log_joint(p, x));
}

inline std::vector<double> component_posterior(const PerturbedMixture& p, const Vec& x) {
    check_dim(x, p.dim, "component_posterior");
    auto lj = detail::component_log_joint(p, x);
    double lse = detail::logsumexp(lj);
    std::vector<double> r(lj.size());
    for (std::size_t k = 0; k < lj.size(); ++k) r[k] = std::exp(lj[k] - lse);
    return r;
}

// grad_x log p(x): responsibility-weighted component scores.
inline Vec score(const PerturbedMixture& p, const Vec& x) {
    check_dim(x, p.dim, "score");
    auto r = component_posterior(p, x);
    Vec s(p.dim, 0.0);
    for (int k = 0; k < p.n_components(); ++k)
        for (int j = 0; j < p.dim; ++j)
            s[j] += r[k] * (-(x[j] - p.means[k][j]) / p.vars[k][j]);
    return s;
}

// Exact trace of the score Jacobian (test oracle for divergence estimators):
// tr grad^2 log p = sum_k r_k (tr H_k + |g_k|^2) - |sum_k r_k g_k|^2
// with g_k the component score and H_k = diag(-1/var_k).
inline double score_divergence(const PerturbedMixture& p, const Vec& x) {
    check_dim(x, p.dim, "score_divergence");
    auto r = component_posterior(p, x);
    double acc = 0.0;
    Vec g_bar(p.dim, 0.0);
    for (int k = 0; k < p.n_components(); ++k) {
        double gk2 = 0.0;
        for (int j = 0; j < p.dim; ++j) {
            double gkj = -(x[j] - p.means[k][j]) / p.vars[k][j];
            gk2 += gkj * gkj;
            g_bar[j] += r[k] * gkj;
            acc += r[k] * (-1.0 / p.vars[k][j]);
        }
        acc += r[k] * gk2;
    }
    return acc - dot(g_bar, g_bar);
}

// Score of p_t(x | component k): the single perturbed component.
inline Vec class_score(const GaussianMixture& g, const SdeSpec& sde, int k, const Vec& x, double t) {
    g.validate();
    if (k < 0 || k >= g.n_components()) throw std::invalid_argument("class_score: component index out of range");
    check_dim(x, g.dim, "class_score");
    KernelPoint kp = perturbation_kernel(sde, t);
    Vec s(g.dim);
    for (int j = 0; j < g.dim; ++j) {
        double mean = kp.mean_coeff * g.means[k][j];
        double var = kp.mean_coeff * kp.mean_coeff * g.vars[k][j] + kp.std * kp.std;
        s[j] = -(x[j] - mean) / var;
    }
    return s;
}

// Posterior-mean denoising: E[x_0 | x_t] = (x_t + s^2 score) / m.
inline Vec tweedie_denoise(const Vec& x, const Vec& score_at_x, const KernelPoint& k) {
    Vec out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] = (x[j] + k.std * k.std * score_at_x[j]) / k.mean_coeff;
    return out;
}

inline ScoreFunction oracle_score(const GaussianMixture& g, const SdeSpec& sde) {
    g.validate();
    ScoreFunction f;
    f.dim = g.dim;
    f.source = "oracle";
    f.eval = [g, sde](const Vec& x, double t) { return score(perturb_gmm(g, sde, t), x); };
    return f;
}

inline ScoreFunction oracle_class_score(const GaussianMixture& g, const SdeSpec& sde, int k) {
    g.validate();
    if (k < 0 || k >= g.n_components())
        throw std::invalid_argument("oracle_class_score: component index out of range");
    ScoreFunction f;
    f.dim = g.dim;
    f.source = "oracle";
    f.eval = [g, sde, k](const Vec& x, double t) { return class_score(g, sde, k, x, t); };
    return f;
}

// ---------------------------------------------------------------------------
// 1D distribution functions (used by the KS / Wasserstein metrics).

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865476); }

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(6.283185307179586); }

inline double cdf_1d(const PerturbedMixture& p, double x) {
    if (p.dim != 1) throw std::invalid_argument("cdf_1d: mixture must be 1D");
    double c = 0.0;
    for (int k = 0; k < p.n_components(); ++k)
        c += p.weights[k] * normal_cdf((x - p.means[k][0]) / std::sqrt(p.vars[k][0]));
    return c;
}

// int_{-inf}^{x} F(u) du, exact; the Wasserstein metric integrates |F_n - F|
// piecewise and needs the antiderivative of F.
inline double cdf_antideriv_1d(const PerturbedMixture& p, double x) {
    if (p.dim != 1) throw std::invalid_argument("cdf_antideriv_1d: mixture must be 1D");
    double a = 0.0;
    for (int k = 0; k < p.n_components(); ++k) {
        double sd = std::sqrt(p.vars[k][0]);
        double u = (x - p.means[k][0]) / sd;
        a += p.weights[k] * sd * (u * normal_cdf(u) + normal_pdf(u));
    }
    return a;
}

}  // namespace sdelab
