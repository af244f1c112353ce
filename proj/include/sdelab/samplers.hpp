#pragma once

// Reverse-time samplers. A predictor integrates the reverse SDE (or the
// deterministic flow) one grid step; a Langevin corrector nudges the state
// toward the marginal at the current noise level. pc_sample composes them
// and optionally removes the residual noise at the end with a posterior-mean
// (Tweedie) step.

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sdelab/gmm.hpp"
#include "sdelab/rng.hpp"
#include "sdelab/score_function.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

enum class PredictorKind { EulerMaruyama, ReverseDiffusion, Ancestral, ProbFlow, None };
enum class CorrectorKind { Langevin, None };

inline const char* predictor_name(PredictorKind k) {
    switch (k) {
        case PredictorKind::EulerMaruyama: return "euler_maruyama";
        case PredictorKind::ReverseDiffusion: return "reverse_diffusion";
        case PredictorKind::Ancestral: return "ancestral";
        case PredictorKind::ProbFlow: return "prob_flow";
        case PredictorKind::None: return "none";
    }
    return "?";
}

inline const char* corrector_name(CorrectorKind k) {
    return k == CorrectorKind::Langevin ? "langevin" : "none";
}

inline PredictorKind predictor_from_name(const std::string& s) {
    if (s == "euler_maruyama") return PredictorKind::EulerMaruyama;
    if (s == "reverse_diffusion") return PredictorKind::ReverseDiffusion;
    if (s == "ancestral") return PredictorKind::Ancestral;
    if (s == "prob_flow") return PredictorKind::ProbFlow;
    if (s == "none") return PredictorKind::None;
    throw std::invalid_argument("unknown predictor: " + s);
}

inline CorrectorKind corrector_from_name(const std::string& s) {
    if (s == "langevin") return CorrectorKind::Langevin;
    if (s == "none") return CorrectorKind::None;
    throw std::invalid_argument("unknown corrector: " + s);
}

struct PcConfig {
    PredictorKind predictor = PredictorKind::ReverseDiffusion;
    CorrectorKind corrector = CorrectorKind::None;
    int n_steps = 1000;       // predictor steps N
    int corrector_steps = 0;  // corrector steps M per noise level
    double snr = 0.16;        // Langevin signal-to-noise ratio r
    bool denoise = true;
    double eps_sample = 0.0;  // 0 = per-kind default
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    int threads = 1;
    bool record_trajectory = false;
};

inline double default_eps_sample(const SdeSpec& sde) {
    return sde.kind == SdeKind::VE ? 1e-5 : 1e-3;
}

inline double resolve_eps_sample(const SdeSpec& sde, const PcConfig& cfg) {
    double eps = cfg.eps_sample > 0.0 ? cfg.eps_sample : default_eps_sample(sde);
    if (!(eps > 0.0) || !(eps < sde.t_max))
        throw std::invalid_argument("eps_sample must lie in (0, t_max)");
    return eps;
}

inline void validate_config(const SdeSpec& sde, const PcConfig& cfg) {
    if (cfg.n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
    if (cfg.corrector_steps < 0) throw std::invalid_argument("corrector_steps must be >= 0");
    if (!(cfg.snr > 0.0)) throw std::invalid_argument("snr must be > 0");
    if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (cfg.threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (cfg.predictor == PredictorKind::None &&
        (cfg.corrector != CorrectorKind::Langevin || cfg.corrector_steps == 0))
        throw std::invalid_argument("predictor none requires langevin corrector steps");
    if (cfg.predictor == PredictorKind::Ancestral && sde.kind == SdeKind::SubVP)
        throw std::invalid_argument("ancestral predictor is defined for ve and vp only");
    resolve_eps_sample(sde, cfg);
}

// Descending traversal grid: t_0 = eps, t_N = t_max, uniform in t.
inline std::vector<double> sample_time_grid(const SdeSpec& sde, int n_steps, double eps_sample = 0.0) {
    double eps = eps_sample > 0.0 ? eps_sample : default_eps_sample(sde);
    std::vector<double> grid(static_cast<std::size_t>(n_steps) + 1);
    for (int i = 0; i <= n_steps; ++i)
        grid[i] = eps + (static_cast<double>(i) / n_steps) * (sde.t_max - eps);
    grid[n_steps] = sde.t_max;
    return grid;
}

// Discrete noise increment over [t_lo, t_hi] in the chain parameterization:
// VE uses the variance difference sigma(t_hi)^2 - sigma(t_lo)^2; VP and SubVP
// use beta(t_hi) * dt (the rate at the left endpoint of the reverse step).
inline double discrete_beta(const SdeSpec& sde, double t_lo, double t_hi) {
    double b = beta_t(sde, t_hi) * (t_hi - t_lo);
    if (b >= 1.0) throw std::runtime_error("discrete beta >= 1; use more steps");
    return b;
}

// One predictor update from grid[i+1] down to grid[i]. The score is always
// evaluated at the incoming state and time.
inline Vec predictor_step(PredictorKind kind, const Vec& x, int i, const std::vector<double>& grid,
                          const ScoreFunction& score_fn, const SdeSpec& sde, RngStream& rng) {
    const std::size_t d = x.size();
    const double t_lo = grid[i];
    const double t_hi = grid[i + 1];
    const double dt = t_hi - t_lo;
    Vec out(d);

    switch (kind) {
        case PredictorKind::None:
            return x;

        case PredictorKind::EulerMaruyama: {
            Vec s = score_fn(x, t_hi, rng);
            Vec f = drift(sde, x, t_hi);
            double g = diffusion(sde, t_hi);
            Vec z = rng.gaussian_vec(d);
            double gs = g * std::sqrt(dt);
            for (std::size_t j = 0; j < d; ++j)
                out[j] = x[j] - (f[j] - g * g * s[j]) * dt + gs * z[j];
            return out;
        }

        case PredictorKind::ReverseDiffusion: {
            Vec s = score_fn(x, t_hi, rng);
            Vec z = rng.gaussian_vec(d);
            if (sde.kind == SdeKind::VE) {
                double v_hi = sigma_t(sde, t_hi) * sigma_t(sde, t_hi);
                double v_lo = sigma_t(sde, t_lo) * sigma_t(sde, t_lo);
                double dv = v_hi - v_lo;
                double noise = std::sqrt(dv);
                for (std::size_t j = 0; j < d; ++j) out[j] = x[j] + dv * s[j] + noise * z[j];
            } else {
                double b = discrete_beta(sde, t_lo, t_hi);
                double mean_fac = 2.0 - std::sqrt(1.0 - b);
                // VP injects the full beta increment; SubVP uses its damped diffusion.
                double g2 = sde.kind == SdeKind::VP ? b : diffusion(sde, t_hi) * diffusion(sde, t_hi) * dt;
                double noise = std::sqrt(g2);
                for (std::size_t j = 0; j < d; ++j)
                    out[j] = mean_fac * x[j] + g2 * s[j] + noise * z[j];
            }
            return out;
        }

        case PredictorKind::Ancestral: {
            Vec s = score_fn(x, t_hi, rng);
            Vec z = rng.gaussian_vec(d);
            if (sde.kind == SdeKind::VE) {
                double v_hi = sigma_t(sde, t_hi) * sigma_t(sde, t_hi);
                double v_lo = sigma_t(sde, t_lo) * sigma_t(sde, t_lo);
                double dv = v_hi - v_lo;
                double noise = std::sqrt(v_lo * dv / v_hi);
                for (std::size_t j = 0; j < d; ++j) out[j] = x[j] + dv * s[j] + noise * z[j];
            } else if (sde.kind == SdeKind::VP) {
                double b = discrete_beta(sde, t_lo, t_hi);
                double inv = 1.0 / std::sqrt(1.0 - b);
                double noise = std::sqrt(b);
                for (std::size_t j = 0; j < d; ++j)
                    out[j] = inv * (x[j] + b * s[j]) + noise * z[j];
            } else {
                throw std::invalid_argument("ancestral predictor is defined for ve and vp only");
            }
            return out;
        }

        case PredictorKind::ProbFlow: {
            Vec s = score_fn(x, t_hi, rng);
            if (sde.kind == SdeKind::VE) {
                double v_hi = sigma_t(sde, t_hi) * sigma_t(sde, t_hi);
                double v_lo = sigma_t(sde, t_lo) * sigma_t(sde, t_lo);
                double dv = v_hi - v_lo;
                for (std::size_t j = 0; j < d; ++j) out[j] = x[j] + 0.5 * dv * s[j];
            } else {
                double b = discrete_beta(sde, t_lo, t_hi);
                double mean_fac = 2.0 - std::sqrt(1.0 - b);
                double g2 = sde.kind == SdeKind::VP ? b : diffusion(sde, t_hi) * diffusion(sde, t_hi) * dt;
                for (std::size_t j = 0; j < d; ++j) out[j] = mean_fac * x[j] + 0.5 * g2 * s[j];
            }
            return out;
        }
    }
    throw std::logic_error("unreachable predictor kind");
}

struct CorrectorStats {
    long long steps = 0;
    long long skipped = 0;  // zero-score states where the step size is undefined
};

inline double corrector_eps(double alpha, double r, double z_norm, double g_norm) {
    double ratio = r * z_norm / g_norm;
    return 2.0 * alpha * ratio * ratio;
}

// Step-size scale: 1 for VE, the squared kernel mean coefficient (the
// continuous limit of the chain's cumulative alpha) for VP and SubVP.
inline double corrector_alpha(const SdeSpec& sde, double t) {
    if (sde.kind == SdeKind::VE) return 1.0;
    double m = perturbation_kernel(sde, t).mean_coeff;
    return m * m;
}

// One Langevin update of a single state at fixed t. The noise z is drawn
// before the score so the stream stays aligned even when a zero score skips
// the update. With z_norm_sqrt_d the step size uses sqrt(d) in place of the
// drawn |z| (the small-batch convention).
inline Vec corrector_step(const Vec& x, double t, const ScoreFunction& score_fn, const SdeSpec& sde,
                          double r, RngStream& rng, bool z_norm_sqrt_d = true,
                          CorrectorStats* stats = nullptr) {
    const std::size_t d = x.size();
    Vec z = rng.gaussian_vec(d);
    Vec g = score_fn(x, t, rng);
    double gn = norm2(g);
    if (gn == 0.0) {
        if (stats) ++stats->skipped;
        return x;
    }
    double zn = z_norm_sqrt_d ? std::sqrt(static_cast<double>(d)) : norm2(z);
    double eps = corrector_eps(corrector_alpha(sde, t), r, zn, gn);
    double noise = std::sqrt(2.0 * eps);
    Vec out(d);
    for (std::size_t j = 0; j < d; ++j) out[j] = x[j] + eps * g[j] + noise * z[j];
    if (stats) ++stats->steps;
    return out;
}

namespace detail {

template <typename F>
inline void parallel_for(std::size_t n, int threads, F&& fn) {
    std::size_t workers = threads < 1 ? 1 : static_cast<std::size_t>(threads);
    if (workers > n) workers = n;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

// One Langevin substep applied to the whole batch at fixed t. The step size
// is shared: eps = 2 alpha (r zbar/gbar)^2 with zbar and gbar averaged over
// chains in index order (zbar falls back to sqrt(d) for batches under 8).
// The averaging keeps eps finite when individual states sit near score zeros.
// Returns false when the average score norm is zero and the sweep is skipped.
inline bool corrector_sweep(std::vector<Vec>& xs, double t, const ScoreFunction& score_fn,
                            const SdeSpec& sde, double r, std::vector<RngStream>& rngs,
                            int threads = 1, CorrectorStats* stats = nullptr) {
    const std::size_t n = xs.size();
    const std::size_t d = score_fn.dim;
    std::vector<Vec> z(n), g(n);
    detail::parallel_for(n, threads, [&](std::size_t c) {
        z[c] = rngs[c].gaussian_vec(d);
        g[c] = score_fn(xs[c], t, rngs[c]);
    });
    double zbar = 0.0, gbar = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        zbar += norm2(z[c]);
        gbar += norm2(g[c]);
    }
    zbar = n < 8 ? std::sqrt(static_cast<double>(d)) : zbar / static_cast<double>(n);
    gbar /= static_cast<double>(n);
    if (gbar == 0.0) {
        if (stats) stats->skipped += static_cast<long long>(n);
        return false;
    }
    double eps = corrector_eps(corrector_alpha(sde, t), r, zbar, gbar);
    double noise = std::sqrt(2.0 * eps);
    detail::parallel_for(n, threads, [&](std::size_t c) {
        for (std::size_t j = 0; j < d; ++j) xs[c][j] += eps * g[c][j] + noise * z[c][j];
    });
    if (stats) stats->steps += static_cast<long long>(n);
    return true;
}

struct SampleBatch {
    std::vector<Vec> samples;
    std::uint64_t seed = 0;
    PcConfig config;
    CorrectorStats corrector_stats;
    // chronological states per chain (prior, then one per noise level, then
    // the denoised output if enabled); empty unless record_trajectory
    std::vector<std::vector<Vec>> trajectories;
};

// Called whenever a chain commits a state: after the prior draw, after each
// predictor step, and after each corrector step. Conditional samplers use it
// to re-impose observed coordinates.
using StateHook = std::function<void(Vec& x, double t, std::size_t chain, RngStream& rng)>;

// The batch advances in lockstep so the corrector can share its step size
// across chains. All randomness still comes from per-chain streams, so the
// result is independent of the thread count.
inline SampleBatch pc_sample(const SdeSpec& sde, const ScoreFunction& score_fn, const PcConfig& cfg,
                             const StateHook& hook = {}) {
    validate_config(sde, cfg);
    const double eps = resolve_eps_sample(sde, cfg);
    const std::vector<double> grid = sample_time_grid(sde, cfg.n_steps, eps);
    const int n = cfg.n_steps;
    const int m = cfg.corrector == CorrectorKind::Langevin ? cfg.corrector_steps : 0;
    const std::size_t d = score_fn.dim;

    SampleBatch out;
    out.seed = cfg.seed;
    out.config = cfg;
    if (cfg.record_trajectory) out.trajectories.assign(cfg.batch, {});

    std::vector<RngStream> rngs;
    rngs.reserve(cfg.batch);
    for (std::size_t c = 0; c < cfg.batch; ++c) rngs.emplace_back(cfg.seed, "pc-chain", c);
    std::vector<Vec> xs(cfg.batch);

    auto check_finite = [&](const char* where, int i) {
        for (std::size_t c = 0; c < cfg.batch; ++c)
            if (!all_finite(xs[c]))
                throw std::runtime_error(std::string("non-finite state after ") + where + " at step " +
                                         std::to_string(i));
    };
    auto record = [&] {
        if (!cfg.record_trajectory) return;
        for (std::size_t c = 0; c < cfg.batch; ++c) out.trajectories[c].push_back(xs[c]);
    };

    detail::parallel_for(cfg.batch, cfg.threads, [&](std::size_t c) {
        xs[c] = prior_sample(sde, d, rngs[c]);
        if (hook) hook(xs[c], grid[n], c, rngs[c]);
    });
    record();

    for (int i = n - 1; i >= 0; --i) {
        if (cfg.predictor != PredictorKind::None) {
            detail::parallel_for(cfg.batch, cfg.threads, [&](std::size_t c) {
                xs[c] = predictor_step(cfg.predictor, xs[c], i, grid, score_fn, sde, rngs[c]);
            });
            check_finite("predictor", i);
        }
        if (hook)
            detail::parallel_for(cfg.batch, cfg.threads,
                                 [&](std::size_t c) { hook(xs[c], grid[i], c, rngs[c]); });
        for (int j = 0; j < m; ++j) {
            corrector_sweep(xs, grid[i], score_fn, sde, cfg.snr, rngs, cfg.threads,
                            &out.corrector_stats);
            check_finite("corrector", i);
            if (hook)
                detail::parallel_for(cfg.batch, cfg.threads,
                                     [&](std::size_t c) { hook(xs[c], grid[i], c, rngs[c]); });
        }
        record();
    }

    if (cfg.denoise) {
        KernelPoint k = perturbation_kernel(sde, grid[0]);
        detail::parallel_for(cfg.batch, cfg.threads, [&](std::size_t c) {
            Vec s = score_fn(xs[c], grid[0], rngs[c]);
            xs[c] = tweedie_denoise(xs[c], s, k);
        });
        check_finite("denoising", 0);
        record();
    }

    out.samples = std::move(xs);
    return out;
}

}  // namespace sdelab
