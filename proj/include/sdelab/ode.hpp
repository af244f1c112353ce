#pragma once

// Deterministic flow sharing the SDE's marginals: dx/dt = f - 1/2 g^2 score.
// Integrating it data->noise encodes a point into the prior's space; the
// reverse direction decodes. Augmenting the state with the running divergence
// of the right-hand side turns the same integration into an exact density
// evaluation (instantaneous change of variables).

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sdelab/gmm.hpp"
#include "sdelab/rng.hpp"
#include "sdelab/score_function.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

struct OdeConfig {
    double rtol = 1e-5;
    double atol = 1e-5;
    long long max_steps = 100000;
    double initial_step = 0.0;  // 0 = heuristic from the local derivative scale
    int probes = 8;             // Hutchinson probe count K
    ProbeDist probe_dist = ProbeDist::Rademacher;
};

inline void validate_config(const OdeConfig& cfg) {
    if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0))
        throw std::invalid_argument("ode tolerances must be positive");
    if (cfg.max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (cfg.probes < 1) throw std::invalid_argument("probes must be >= 1");
}

using OdeRhs = std::function<Vec(const Vec&, double)>;

struct OdeResult {
    Vec x;
    long long nfe = 0;
};

// Dormand-Prince 5(4) embedded pair, FSAL, mixed absolute/relative error
// control. Integrates in either time direction; the last step lands on t1
// exactly.
inline OdeResult rk45_integrate(const OdeRhs& rhs, Vec x0, double t0, double t1,
                                const OdeConfig& cfg = {}) {
    validate_config(cfg);
    if (t0 == t1) throw std::invalid_argument("rk45_integrate: empty time interval");

    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
    // fifth-order minus embedded fourth-order weights
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const std::size_t d = x0.size();
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::fabs(t1 - t0);
    OdeResult out;

    Vec k1 = rhs(x0, t0);
    ++out.nfe;

    double h;
    if (cfg.initial_step > 0.0) {
        h = std::min(cfg.initial_step, span);
    } else {
        // derivative-scaled first guess, refined with one trial evaluation
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double sc = cfg.atol + cfg.rtol * std::fabs(x0[i]);
            d0 += (x0[i] / sc) * (x0[i] / sc);
            d1 += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / d);
        d1 = std::sqrt(d1 / d);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        Vec x_trial(d);
        for (std::size_t i = 0; i < d; ++i) x_trial[i] = x0[i] + dir * h0 * k1[i];
        Vec f_trial = rhs(x_trial, t0 + dir * h0);
        ++out.nfe;
        double d2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double sc = cfg.atol + cfg.rtol * std::fabs(x0[i]);
            double df = (f_trial[i] - k1[i]) / sc;
            d2 += df * df;
        }
        d2 = std::sqrt(d2 / d) / h0;
        double dm = std::max(d1, d2);
        double h1 = dm < 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        h = std::min({100.0 * h0, h1, span});
    }

    double t = t0;
    Vec x = std::move(x0);
    Vec k2(d), k3(d), k4(d), k5(d), k6(d), k7(d), x_new(d), tmp(d);

    for (long long step = 0; step < cfg.max_steps; ++step) {
        bool last = false;
        double remaining = std::fabs(t1 - t);
        if (remaining <= 1e-14 * span) {
            out.x = std::move(x);
            return out;
        }
        if (h >= remaining) {
            h = remaining;
            last = true;
        }
        if (h <= 1e-14 * span) throw std::runtime_error("rk45_integrate: step size underflow");
        double hd = dir * h;

        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + hd * a21 * k1[i];
        k2 = rhs(tmp, t + hd * c2);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + hd * (a31 * k1[i] + a32 * k2[i]);
        k3 = rhs(tmp, t + hd * c3);
        for (std::size_t i = 0; i < d; ++i)
            tmp[i] = x[i] + hd * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        k4 = rhs(tmp, t + hd * c4);
        for (std::size_t i = 0; i < d; ++i)
            tmp[i] = x[i] + hd * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        k5 = rhs(tmp, t + hd * c5);
        for (std::size_t i = 0; i < d; ++i)
            tmp[i] = x[i] + hd * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        k6 = rhs(tmp, t + hd);
        for (std::size_t i = 0; i < d; ++i)
            x_new[i] = x[i] + hd * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        k7 = rhs(x_new, t + hd);
        out.nfe += 6;

        double err = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double e = hd * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                             e7 * k7[i]);
            double sc = cfg.atol + cfg.rtol * std::max(std::fabs(x[i]), std::fabs(x_new[i]));
            err += (e / sc) * (e / sc);
        }
        err = std::sqrt(err / d);

        if (err <= 1.0) {
            t = last ? t1 : t + hd;
            std::swap(x, x_new);
            std::swap(k1, k7);  // first-same-as-last
            double factor = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
            h *= std::min(5.0, std::max(0.2, factor));
        } else {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
        }
    }
    throw std::runtime_error("rk45_integrate: max step count exceeded");
}

inline Vec ode_rhs(const Vec& x, double t, const ScoreFunction& score_fn, const SdeSpec& sde) {
    Vec s = score_fn(x, t);
    Vec f = drift(sde, x, t);
    double g = diffusion(sde, t);
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f[i] - 0.5 * g * g * s[i];
    return out;
}

inline OdeRhs flow_rhs(const ScoreFunction& score_fn, const SdeSpec& sde) {
    return [&score_fn, &sde](const Vec& x, double t) { return ode_rhs(x, t, score_fn, sde); };
}

inline Vec encode(const Vec& x, const ScoreFunction& score_fn, const SdeSpec& sde,
                  const OdeConfig& cfg = {}) {
    return rk45_integrate(flow_rhs(score_fn, sde), x, sde.eps_train, sde.t_max, cfg).x;
}

inline Vec decode(const Vec& latent, const ScoreFunction& score_fn, const SdeSpec& sde,
                  const OdeConfig& cfg = {}) {
    return rk45_integrate(flow_rhs(score_fn, sde), latent, sde.t_max, sde.eps_train, cfg).x;
}

using VectorField = std::function<Vec(const Vec&, double)>;


// Trace of the field's Jacobian estimated as the probe average of e'(Je),
// with the directional derivative Je taken by central differences.
inline double divergence_estimate(const VectorField& field, const Vec& x, double t,
                                  const OdeConfig& cfg, RngStream& rng) {
    validate_config(cfg);
    const std::size_t d = x.size();
    const double h = 1e-4 * (1.0 + norm_inf(x));
    double acc = 0.0;
    Vec xp(d), xm(d);
    for (int k = 0; k < cfg.probes; ++k) {
        Vec e = draw_probe(d, cfg.probe_dist, rng);
        for (std::size_t i = 0; i < d; ++i) {
            xp[i] = x[i] + h * e[i];
            xm[i] = x[i] - h * e[i];
        }
        Vec fp = field(xp, t);
        Vec fm = field(xm, t);
        double v = 0.0;
        for (std::size_t i = 0; i < d; ++i) v += (fp[i] - fm[i]) * e[i];
        acc += v / (2.0 * h);
    }
    return acc / cfg.probes;
}

struct LikelihoodResult {
    double log_prob = 0.0;
    double bits_per_dim = 0.0;
    double prior_term = 0.0;
    double divergence_integral = 0.0;
    long long nfe = 0;
};

// Exact log-density of the flow's pullback of the prior. The drift part of
// the divergence is analytic (0 for VE, -beta*d/2 otherwise) and accumulated
// exactly; only the score term goes through the probe estimator, against a
// probe set frozen for the whole solve so the augmented system stays a
// well-defined ODE. Passing score_div replaces the estimator with an exact
// divergence of the score field (closed-form oracles in tests).
inline LikelihoodResult log_likelihood(
    const Vec& x, const ScoreFunction& score_fn, const SdeSpec& sde, const OdeConfig& cfg,
    RngStream& rng, const std::function<double(const Vec&, double)>& score_div = {}) {
    validate_config(cfg);
    const std::size_t d = x.size();

    std::vector<Vec> probes;
    if (!score_div) {
        probes.reserve(static_cast<std::size_t>(cfg.probes));
        for (int k = 0; k < cfg.probes; ++k) probes.push_back(draw_probe(d, cfg.probe_dist, rng));
    }

    auto aug_rhs = [&](const Vec& y, double t) {
        Vec xx(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(d));
        Vec s = score_fn(xx, t);
        Vec f = drift(sde, xx, t);
        double g2 = diffusion(sde, t);
        g2 *= g2;
        Vec out(d + 1);
        for (std::size_t i = 0; i < d; ++i) out[i] = f[i] - 0.5 * g2 * s[i];

        double div_drift = sde.kind == SdeKind::VE
                               ? 0.0
                               : -0.5 * beta_t(sde, clamp_time(sde, t)) * static_cast<double>(d);
        double div_score;
        if (score_div) {
            div_score = score_div(xx, t);
        } else {
            const double h = 1e-4 * (1.0 + norm_inf(xx));
            double acc = 0.0;
            Vec xp(d), xm(d);
            for (const Vec& e : probes) {
                for (std::size_t i = 0; i < d; ++i) {
                    xp[i] = xx[i] + h * e[i];
                    xm[i] = xx[i] - h * e[i];
                }
                Vec sp = score_fn(xp, t);
                Vec sm = score_fn(xm, t);
                double v = 0.0;
                for (std::size_t i = 0; i < d; ++i) v += (sp[i] - sm[i]) * e[i];
                acc += v / (2.0 * h);
            }
            div_score = acc / cfg.probes;
        }
        out[d] = div_drift - 0.5 * g2 * div_score;
        return out;
    };

    Vec y0(d + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) y0[i] = x[i];
    OdeResult r = rk45_integrate(aug_rhs, std::move(y0), sde.eps_train, sde.t_max, cfg);

    Vec x_T(r.x.begin(), r.x.begin() + static_cast<std::ptrdiff_t>(d));
    LikelihoodResult res;
    res.prior_term = prior_log_density(sde, x_T);
    res.divergence_integral = r.x[d];
    res.log_prob = res.prior_term + res.divergence_integral;
    res.bits_per_dim = -res.log_prob / (static_cast<double>(d) * std::log(2.0));
    res.nfe = r.nfe;
    return res;
}

inline Vec slerp(const Vec& z1, const Vec& z2, double theta) {
    double n1 = norm2(z1), n2 = norm2(z2);
    if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("slerp: zero latent");
    double c = dot(z1, z2) / (n1 * n2);
    c = std::max(-1.0, std::min(1.0, c));
    double omega = std::acos(c);
    Vec out(z1.size());
    if (omega < 1e-12) {  // nearly parallel: linear blend is exact enough
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (1.0 - theta) * z1[i] + theta * z2[i];
        return out;
    }
    double s = std::sin(omega);
    double w1 = std::sin((1.0 - theta) * omega) / s;
    double w2 = std::sin(theta * omega) / s;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w1 * z1[i] + w2 * z2[i];
    return out;
}

inline Vec temperature_scale(const Vec& z, double tau) { return scaled(z, tau); }

struct IdentifiabilityReport {
    std::vector<Vec> latents_a, latents_b;
    Vec correlation;      // per dimension, across the input set
    double max_abs_diff = 0.0;
};

inline IdentifiabilityReport identifiability_report(const ScoreFunction& score_a,
                                                    const ScoreFunction& score_b,
                                                    const std::vector<Vec>& xs, const SdeSpec& sde,
                                                    const OdeConfig& cfg = {}) {
    if (score_a.dim != score_b.dim) throw std::invalid_argument("identifiability: dim mismatch");
    IdentifiabilityReport rep;
    for (const Vec& x : xs) {
        rep.latents_a.push_back(encode(x, score_a, sde, cfg));
        rep.latents_b.push_back(encode(x, score_b, sde, cfg));
    }
    const std::size_t n = xs.size(), d = score_a.dim;
    rep.correlation.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ma += rep.latents_a[i][j];
            mb += rep.latents_b[i][j];
        }
        ma /= n;
        mb /= n;
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double da = rep.latents_a[i][j] - ma, db = rep.latents_b[i][j] - mb;
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        rep.correlation[j] = sab / std::sqrt(saa * sbb);
        for (std::size_t i = 0; i < n; ++i)
            rep.max_abs_diff =
                std::max(rep.max_abs_diff, std::fabs(rep.latents_a[i][j] - rep.latents_b[i][j]));
    }
    return rep;
}

}  // namespace sdelab
