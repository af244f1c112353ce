#pragma once

// Forward-noising SDE families and their Gaussian perturbation kernels.
//
// All three families have affine drift, so the transition from clean data
// x(0) to x(t) is exactly Gaussian with closed-form mean coefficient m(t)
// and standard deviation s(t):
//
//   VE     dx = g(t) dw                      m = 1
//          sigma(t) = smin*(smax/smin)^t     s = sigma(t)
//          g(t) = sigma(t)*sqrt(2 ln(smax/smin))
//
//   VP     dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw
//          beta(t) = bmin + t*(bmax-bmin)    m = exp(-B(t)/2)
//          B(t) = int_0^t beta               s = sqrt(1 - exp(-B(t)))
//
//   SubVP  dx = -1/2 beta(t) x dt + sqrt(beta(t)*(1 - exp(-2 B(t)))) dw
//                                            m = exp(-B(t)/2)
//                                            s = 1 - exp(-B(t))
//
// B(t) is evaluated analytically (beta is linear); no quadrature anywhere.
// The VE schedule is discontinuous at t=0 (sigma(0+)=smin but the kernel
// std at exactly 0 is 0), so every VE query is clamped to t >= eps_train.
// VP/SubVP are smooth at 0 and evaluate exactly there (kernel is the
// identity at t=0).

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdelab/rng.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

enum class SdeKind { VE, VP, SubVP };

inline const char* sde_kind_name(SdeKind k) {
    switch (k) {
        case SdeKind::VE: return "VE";
        case SdeKind::VP: return "VP";
        case SdeKind::SubVP: return "SubVP";
    }
    return "?";
}

struct SdeParams {
    std::optional<double> sigma_min, sigma_max;
    std::optional<double> beta_min, beta_max;
    std::optional<double> t_max, eps_train, eps_sample;
};

struct SdeSpec {
    SdeKind kind = SdeKind::VP;
    double sigma_min = 0.01;
    double sigma_max = 50.0;
    double beta_min = 0.1;
    double beta_max = 20.0;
    double t_max = 1.0;
    double eps_train = 1e-5;
    double eps_sample = 1e-3;
};

inline SdeSpec build_sde(SdeKind kind, const SdeParams& p = {}) {
    SdeSpec s;
    s.kind = kind;
    if (p.sigma_min) s.sigma_min = *p.sigma_min;
    if (p.sigma_max) s.sigma_max = *p.sigma_max;
    if (p.beta_min) s.beta_min = *p.beta_min;
    if (p.beta_max) s.beta_max = *p.beta_max;
    if (p.t_max) s.t_max = *p.t_max;
    if (p.eps_train) s.eps_train = *p.eps_train;
    s.eps_sample = (kind == SdeKind::VE) ? 1e-5 : 1e-3;
    if (p.eps_sample) s.eps_sample = *p.eps_sample;

    if (!(s.sigma_min > 0.0)) throw std::invalid_argument("build_sde: sigma_min must be > 0");
    if (!(s.sigma_max > s.sigma_min)) throw std::invalid_argument("build_sde: sigma_max must exceed sigma_min");
    if (!(s.beta_min > 0.0)) throw std::invalid_argument("build_sde: beta_min must be > 0");
    if (!(s.beta_max > s.beta_min)) throw std::invalid_argument("build_sde: beta_max must exceed beta_min");
    if (!(s.t_max > 0.0)) throw std::invalid_argument("build_sde: t_max must be > 0");
    if (!(s.eps_train > 0.0 && s.eps_train < s.t_max))
        throw std::invalid_argument("build_sde: eps_train must lie in (0, t_max)");
    if (!(s.eps_sample > 0.0 && s.eps_sample < s.t_max))
        throw std::invalid_argument("build_sde: eps_sample must lie in (0, t_max)");
    return s;
}

// VE queries never go below eps_train (schedule discontinuity at 0);
// VP/SubVP evaluate exactly on [0, t_max].
inline double clamp_time(const SdeSpec& sde, double t) {
    double lo = (sde.kind == SdeKind::VE) ? sde.eps_train : 0.0;
    if (t < lo) return lo;
    if (t > sde.t_max) return sde.t_max;
    return t;
}

inline double beta_t(const SdeSpec& sde, double t) {
    return sde.beta_min + t * (sde.beta_max - sde.beta_min);
}

// int_0^t beta(s) ds for the linear schedule
inline double beta_integral(const SdeSpec& sde, double t) {
    return t * sde.beta_min + 0.5 * t * t * (sde.beta_max - sde.beta_min);
}

inline double sigma_t(const SdeSpec& sde, double t) {
    return sde.sigma_min * std::pow(sde.sigma_max / sde.sigma_min, t);
}

inline Vec drift(const SdeSpec& sde, const Vec& x, double t) {
    if (sde.kind == SdeKind::VE) return Vec(x.size(), 0.0);
    double b = beta_t(sde, clamp_time(sde, t));
    return scaled(x, -0.5 * b);
}

inline double diffusion(const SdeSpec& sde, double t) {
    t = clamp_time(sde, t);
    switch (sde.kind) {
        case SdeKind::VE:
            return sigma_t(sde, t) * std::sqrt(2.0 * std::log(sde.sigma_max / sde.sigma_min));
        case SdeKind::VP:
            return std::sqrt(beta_t(sde, t));
        case SdeKind::SubVP:
            return std::sqrt(beta_t(sde, t) * (-std::expm1(-2.0 * beta_integral(sde, t))));
    }
    return 0.0;
}

struct KernelPoint {
    double mean_coeff;  // m(t)
    double std;         // s(t)
};

inline KernelPoint perturbation_kernel(const SdeSpec& sde, double t) {
    t = clamp_time(sde, t);
    switch (sde.kind) {
        case SdeKind::VE:
            return {1.0, sigma_t(sde, t)};
        case SdeKind::VP: {
            double B = beta_integral(sde, t);
            return {std::exp(-0.5 * B), std::sqrt(-std::expm1(-B))};
        }
        case SdeKind::SubVP: {
            double B = beta_integral(sde, t);
            return {std::exp(-0.5 * B), -std::expm1(-B)};
        }
    }
    return {1.0, 0.0};
}

// Transition x(s) -> x(t) for s <= t, from each family's own closed form.
// Composing (0,s) with (s,t) reproduces (0,t); the tests rely on these
// being derived independently rather than backed out of perturbation_kernel.
inline KernelPoint transition_kernel(const SdeSpec& sde, double s, double t) {
    s = clamp_time(sde, s);
    t = clamp_time(sde, t);
    if (s > t) throw std::invalid_argument("transition_kernel: requires s <= t");
    switch (sde.kind) {
        case SdeKind::VE: {
            double a = sigma_t(sde, s), b = sigma_t(sde, t);
            return {1.0, std::sqrt(std::max(0.0, b * b - a * a))};
        }
        case SdeKind::VP: {
            double dB = beta_integral(sde, t) - beta_integral(sde, s);
            return {std::exp(-0.5 * dB), std::sqrt(-std::expm1(-dB))};
        }
        case SdeKind::SubVP: {
            double Bs = beta_integral(sde, s), Bt = beta_integral(sde, t);
            double var = -std::expm1(Bs - Bt) + std::exp(-2.0 * Bt) - std::exp(-(Bt + Bs));
            return {std::exp(-0.5 * (Bt - Bs)), std::sqrt(std::max(0.0, var))};
        }
    }
    return {1.0, 0.0};
}

// Marginal variance of one coordinate when the data has variance var0.
// Closed-form solutions of d(var)/dt = -beta*var + g^2 (VP family) and
// d(var)/dt = g^2 (VE).
inline double variance_trajectory(const SdeSpec& sde, double var0, double t) {
    t = clamp_time(sde, t);
    switch (sde.kind) {
        case SdeKind::VE: {
            double sg = sigma_t(sde, t);
            return var0 + sg * sg;
        }
        case SdeKind::VP: {
            double e = std::exp(-beta_integral(sde, t));
            return 1.0 + e * (var0 - 1.0);
        }
        case SdeKind::SubVP: {
            double B = beta_integral(sde, t);
            return 1.0 + std::exp(-2.0 * B) + std::exp(-B) * (var0 - 2.0);
        }
    }
    return var0;
}

inline double prior_std(const SdeSpec& sde) {
    return sde.kind == SdeKind::VE ? sigma_t(sde, sde.t_max) : 1.0;
}

inline Vec prior_sample(const SdeSpec& sde, std::size_t dim, RngStream& rng) {
    Vec x = rng.gaussian_vec(dim);
    double sd = prior_std(sde);
    for (double& v : x) v *= sd;
    return x;
}

inline double prior_log_density(const SdeSpec& sde, const Vec& x) {
    double sd = prior_std(sde);
    double lp = 0.0;
    for (double v : x) lp += -0.5 * std::log(6.283185307179586 * sd * sd) - 0.5 * (v / sd) * (v / sd);
    return lp;
}

// ---------------------------------------------------------------------------
// Discrete noising chains.

enum class ChainKind { SMLD, DDPM };

struct DiscreteSchedule {
    ChainKind kind = ChainKind::SMLD;
    int n = 0;
    std::vector<double> sigma;      // SMLD noise scales, ascending
    std::vector<double> beta;       // DDPM per-step betas, in (0,1)
    std::vector<double> alpha_bar;  // DDPM cumulative products of (1-beta)

    void validate() const {
        if (n < 1) throw std::invalid_argument("DiscreteSchedule: n must be >= 1");
        if (kind == ChainKind::SMLD) {
            if (static_cast<int>(sigma.size()) != n)
                throw std::invalid_argument("DiscreteSchedule: sigma size mismatch");
            double prev = 0.0;
            for (double s : sigma) {
                if (!(s > prev)) throw std::invalid_argument("DiscreteSchedule: sigma must be positive ascending");
                prev = s;
            }
        } else {
            if (static_cast<int>(beta.size()) != n || static_cast<int>(alpha_bar.size()) != n)
                throw std::invalid_argument("DiscreteSchedule: beta/alpha_bar size mismatch");
            for (double b : beta)
                if (!(b > 0.0 && b < 1.0))
                    throw std::invalid_argument("DiscreteSchedule: beta must lie in (0,1)");
        }
    }
};

// Geometric scales sigma_min .. sigma_max (n >= 2).
inline DiscreteSchedule make_smld_schedule(double sigma_min, double sigma_max, int n) {
    if (n < 2) throw std::invalid_argument("make_smld_schedule: n must be >= 2");
    if (!(sigma_min > 0.0 && sigma_max > sigma_min))
        throw std::invalid_argument("make_smld_schedule: need 0 < sigma_min < sigma_max");
    DiscreteSchedule sch;
    sch.kind = ChainKind::SMLD;
    sch.n = n;
    sch.sigma.resize(n);
    for (int i = 1; i <= n; ++i)
        sch.sigma[i - 1] = sigma_min * std::pow(sigma_max / sigma_min, double(i - 1) / double(n - 1));
    return sch;
}

// Arithmetic betas: beta_i = bmin/n + (i-1)/(n(n-1)) * (bmax-bmin), where
// (bmin, bmax) are the continuous-limit endpoints.
inline DiscreteSchedule make_ddpm_schedule(double beta_min, double beta_max, int n) {
    if (n < 1) throw std::invalid_argument("make_ddpm_schedule: n must be >= 1");
    if (!(beta_min > 0.0 && beta_max > beta_min))
        throw std::invalid_argument("make_ddpm_schedule: need 0 < beta_min < beta_max");
    DiscreteSchedule sch;
    sch.kind = ChainKind::DDPM;
    sch.n = n;
    sch.beta.resize(n);
    sch.alpha_bar.resize(n);
    double acc = 1.0;
    for (int i = 1; i <= n; ++i) {
        double b = beta_min / n;
        if (n > 1) b += (beta_max - beta_min) * double(i - 1) / (double(n) * double(n - 1));
        if (!(b < 1.0)) throw std::invalid_argument("make_ddpm_schedule: step beta reached 1; increase n");
        sch.beta[i - 1] = b;
        acc *= 1.0 - b;
        sch.alpha_bar[i - 1] = acc;
    }
    return sch;
}

// Runs the forward chain from x0, returning all n states.
//   SMLD: x_i = x_{i-1} + sqrt(sigma_i^2 - sigma_{i-1}^2) z   (sigma_0 = 0)
//   DDPM: x_i = sqrt(1 - beta_i) x_{i-1} + sqrt(beta_i) z
inline std::vector<Vec> simulate_discrete_chain(const DiscreteSchedule& sch, const Vec& x0, RngStream& rng) {
    sch.validate();
    std::vector<Vec> traj;
    traj.reserve(sch.n);
    Vec x = x0;
    double prev_sigma2 = 0.0;
    for (int i = 0; i < sch.n; ++i) {
        if (sch.kind == ChainKind::SMLD) {
            double s2 = sch.sigma[i] * sch.sigma[i];
            double step = std::sqrt(s2 - prev_sigma2);
            for (double& v : x) v += step * rng.gaussian();
            prev_sigma2 = s2;
        } else {
            double b = sch.beta[i];
            double keep = std::sqrt(1.0 - b), add = std::sqrt(b);
            for (double& v : x) v = keep * v + add * rng.gaussian();
        }
        traj.push_back(x);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Discrete-vs-continuous kernel agreement.

struct KernelMatchRow {
    double t;
    double discrete_std;
    double continuous_std;
    double discrete_mean_coeff;
    double continuous_mean_coeff;
};

struct KernelMatchSummary {
    // max over rows of |disc - cont| / cont
    double max_rel_std = 0.0;
    double max_rel_mean = 0.0;
    // max over rows of |disc - cont| / max_row |cont| (curve-scale normalized)
    double max_scaled_std = 0.0;
    double max_scaled_mean = 0.0;
};

// Compares the n-step discrete chain implied by the SDE's parameters against
// the continuous kernel on the grid t_i = i/n * t_max. VE pairs with SMLD,
// VP with DDPM; SubVP has no discrete counterpart.
inline std::vector<KernelMatchRow> kernel_match_report(const SdeSpec& sde, int n) {
    if (n < 2) throw std::invalid_argument("kernel_match_report: n must be >= 2");
    if (sde.kind == SdeKind::SubVP)
        throw std::invalid_argument("kernel_match_report: SubVP has no discrete chain counterpart");
    std::vector<KernelMatchRow> rows;
    rows.reserve(n);
    if (sde.kind == SdeKind::VE) {
        DiscreteSchedule sch = make_smld_schedule(sde.sigma_min, sde.sigma_max, n);
        for (int i = 1; i <= n; ++i) {
            double t = sde.t_max * double(i) / double(n);
            KernelPoint k = perturbation_kernel(sde, t);
            rows.push_back({t, sch.sigma[i - 1], k.std, 1.0, k.mean_coeff});
        }
    } else {
        DiscreteSchedule sch = make_ddpm_schedule(sde.beta_min, sde.beta_max, n);
        for (int i = 1; i <= n; ++i) {
            double t = sde.t_max * double(i) / double(n);
            KernelPoint k = perturbation_kernel(sde, t);
            double ab = sch.alpha_bar[i - 1];
            rows.push_back({t, std::sqrt(1.0 - ab), k.std, std::sqrt(ab), k.mean_coeff});
        }
    }
    return rows;
}

inline KernelMatchSummary summarize_kernel_match(const std::vector<KernelMatchRow>& rows) {
    KernelMatchSummary s;
    double scale_std = 0.0, scale_mean = 0.0;
    for (const auto& r : rows) {
        scale_std = std::max(scale_std, std::fabs(r.continuous_std));
        scale_mean = std::max(scale_mean, std::fabs(r.continuous_mean_coeff));
    }
    for (const auto& r : rows) {
        double ds = std::fabs(r.discrete_std - r.continuous_std);
        double dm = std::fabs(r.discrete_mean_coeff - r.continuous_mean_coeff);
        s.max_rel_std = std::max(s.max_rel_std, ds / r.continuous_std);
        s.max_rel_mean = std::max(s.max_rel_mean, dm / r.continuous_mean_coeff);
        s.max_scaled_std = std::max(s.max_scaled_std, ds / scale_std);
        s.max_scaled_mean = std::max(s.max_scaled_mean, dm / scale_mean);
    }
    return s;
}

}  // namespace sdelab
