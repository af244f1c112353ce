#pragma once

// Small time-conditioned MLP score model with hand-rolled reverse-mode
// gradients, the denoising / sliced score-matching objectives, an
// Adam-style trainer, and a JSON checkpoint format.
//
// The network is deliberately tiny and fixed-topology: inputs are the
// state concatenated with random Fourier features of t (frequencies are
// drawn once at construction and never trained), hidden layers use the
// SiLU activation, and the output head starts at zero so an untrained
// model is the zero score field.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdelab/rng.hpp"
#include "sdelab/score_function.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

struct MlpScoreNet {
    int dim = 0;
    std::vector<int> hidden;      // hidden layer widths, may be empty
    int emb_width = 32;           // Fourier feature count (even, may be 0)
    double fourier_scale = 16.0;  // frequency std; fixed, not trained
    std::vector<double> freqs;    // emb_width/2 frequencies, fixed
    std::vector<double> params;   // all trainable parameters, flat

    // layout derived from (dim, hidden, emb_width)
    std::vector<int> widths;          // feature width, hidden..., dim
    std::vector<std::size_t> w_off;   // per linear layer: weight offset
    std::vector<std::size_t> b_off;   // per linear layer: bias offset

    int n_layers() const { return static_cast<int>(widths.size()) - 1; }
    std::size_t param_count() const { return params.size(); }
    double weight(int layer, int row, int col) const {
        return params[w_off[layer] + static_cast<std::size_t>(row) * widths[layer] + col];
    }
    double& weight_ref(int layer, int row, int col) {
        return params[w_off[layer] + static_cast<std::size_t>(row) * widths[layer] + col];
    }
    double& bias_ref(int layer, int row) { return params[b_off[layer] + row]; }

    // Scratch for one forward pass; reused by backward.
    struct Cache {
        std::vector<Vec> act;  // act[0] = input features, then post-activation
        std::vector<Vec> pre;  // pre-activation per linear layer
    };

    Vec features(const Vec& x, double t) const {
        check_dim(x, static_cast<std::size_t>(dim), "MlpScoreNet::forward");
        Vec f(static_cast<std::size_t>(dim + emb_width));
        for (int i = 0; i < dim; ++i) f[i] = x[i];
        const double two_pi = 6.283185307179586476925286766559;
        int half = emb_width / 2;
        for (int j = 0; j < half; ++j) {
            f[dim + j] = std::sin(two_pi * freqs[j] * t);
            f[dim + half + j] = std::cos(two_pi * freqs[j] * t);
        }
        return f;
    }

    static double silu(double z) { return z / (1.0 + std::exp(-z)); }
    static double silu_deriv(double z) {
        double s = 1.0 / (1.0 + std::exp(-z));
        return s * (1.0 + z * (1.0 - s));
    }

    Vec forward_cached(const Vec& x, double t, Cache& cache) const {
        int L = n_layers();
        cache.act.assign(static_cast<std::size_t>(L), Vec{});
        cache.pre.assign(static_cast<std::size_t>(L), Vec{});
        Vec a = features(x, t);
        for (int l = 0; l < L; ++l) {
            cache.act[l] = a;
            Vec z(static_cast<std::size_t>(widths[l + 1]));
            for (int r = 0; r < widths[l + 1]; ++r) {
                double acc = params[b_off[l] + r];
                const double* wrow = &params[w_off[l] + static_cast<std::size_t>(r) * widths[l]];
                for (int c = 0; c < widths[l]; ++c) acc += wrow[c] * a[c];
                z[r] = acc;
            }
            cache.pre[l] = z;
            if (l + 1 < L) {
                for (double& v : z) v = silu(v);
                a = std::move(z);
            } else {
                a = std::move(z);
            }
        }
        return a;
    }

    Vec forward(const Vec& x, double t) const {
        Cache cache;
        return forward_cached(x, t, cache);
    }

    // Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
    void backward(const Cache& cache, const Vec& dLdy, std::vector<double>& grad) const {
        int L = n_layers();
        Vec delta = dLdy;
        for (int l = L - 1; l >= 0; --l) {
            const Vec& a = cache.act[l];
            for (int r = 0; r < widths[l + 1]; ++r) {
                double d = delta[r];
                grad[b_off[l] + r] += d;
                double* grow = &grad[w_off[l] + static_cast<std::size_t>(r) * widths[l]];
                for (int c = 0; c < widths[l]; ++c) grow[c] += d * a[c];
            }
            if (l == 0) break;
            Vec prev(static_cast<std::size_t>(widths[l]), 0.0);
            for (int r = 0; r < widths[l + 1]; ++r) {
                double d = delta[r];
                const double* wrow = &params[w_off[l] + static_cast<std::size_t>(r) * widths[l]];
                for (int c = 0; c < widths[l]; ++c) prev[c] += d * wrow[c];
            }
            for (int c = 0; c < widths[l]; ++c) prev[c] *= silu_deriv(cache.pre[l - 1][c]);
            delta = std::move(prev);
        }
    }
};

inline MlpScoreNet make_mlp_score_net(int dim, std::vector<int> hidden = {64, 64},
                                      int emb_width = 32, double fourier_scale = 16.0,
                                      std::uint64_t seed = 0) {
    if (dim < 1) throw std::invalid_argument("make_mlp_score_net: dim must be >= 1");
    if (emb_width < 0 || emb_width % 2 != 0)
        throw std::invalid_argument("make_mlp_score_net: emb_width must be even and >= 0");
    if (emb_width > 0 && !(fourier_scale > 0.0))
        throw std::invalid_argument("make_mlp_score_net: fourier_scale must be positive");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("make_mlp_score_net: hidden widths must be >= 1");

    MlpScoreNet net;
    net.dim = dim;
    net.hidden = std::move(hidden);
    net.emb_width = emb_width;
    net.fourier_scale = fourier_scale;

    RngStream frng(seed, "net-fourier");
    net.freqs.resize(static_cast<std::size_t>(emb_width / 2));
    for (double& f : net.freqs) f = fourier_scale * frng.gaussian();

    net.widths.push_back(dim + emb_width);
    for (int h : net.hidden) net.widths.push_back(h);
    net.widths.push_back(dim);

    std::size_t total = 0;
    for (int l = 0; l < net.n_layers(); ++l) {
        net.w_off.push_back(total);
        total += static_cast<std::size_t>(net.widths[l]) * net.widths[l + 1];
        net.b_off.push_back(total);
        total += static_cast<std::size_t>(net.widths[l + 1]);
    }
    net.params.assign(total, 0.0);

    // He-style init for hidden layers; the output head stays zero.
    RngStream wrng(seed, "net-init");
    for (int l = 0; l + 1 < net.n_layers(); ++l) {
        double std = std::sqrt(2.0 / net.widths[l]);
        for (int r = 0; r < net.widths[l + 1]; ++r)
            for (int c = 0; c < net.widths[l]; ++c) net.weight_ref(l, r, c) = std * wrng.gaussian();
    }
    return net;
}

// ---------------------------------------------------------------------------
// Training objectives. Each returns the scalar loss and its exact gradient
// with respect to the network parameters (exact for the loss as computed,
// including any finite-difference terms inside it).

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Denoising regression over continuous time: t ~ Uniform[eps_train, t_max],
// z ~ Normal(0, I), x_t = m(t) x0 + s(t) z. With weight s(t)^2 the
// per-sample loss is |s(t) net(x_t, t) + z|^2, whose minimizer is the
// score of the perturbed data distribution. fixed_t >= 0 pins the time
// (the time draw is skipped so downstream draws stay aligned).
inline LossGrad dsm_loss_continuous(const MlpScoreNet& net, const std::vector<Vec>& x0_batch,
                                    const SdeSpec& sde, RngStream& rng, double fixed_t = -1.0) {
    if (x0_batch.empty()) throw std::invalid_argument("dsm_loss_continuous: empty batch");
    LossGrad out;
    out.grad.assign(net.param_count(), 0.0);
    MlpScoreNet::Cache cache;
    const double inv_b = 1.0 / static_cast<double>(x0_batch.size());
    for (const Vec& x0 : x0_batch) {
        double t = fixed_t >= 0.0
                       ? fixed_t
                       : sde.eps_train + rng.uniform() * (sde.t_max - sde.eps_train);
        KernelPoint kp = perturbation_kernel(sde, t);
        Vec z = rng.gaussian_vec(x0.size());
        Vec xt(x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = kp.mean_coeff * x0[i] + kp.std * z[i];
        Vec y = net.forward_cached(xt, t, cache);
        Vec dLdy(y.size());
        double li = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double r = kp.std * y[i] + z[i];
            li += r * r;
            dLdy[i] = 2.0 * kp.std * r * inv_b;
        }
        out.loss += li * inv_b;
        net.backward(cache, dLdy, out.grad);
    }
    return out;
}

// Discrete-index objectives: a uniformly drawn scale index gives an
// unbiased estimate of the full sum over scales (hence the factor n).
//   SMLD: weight sigma_i^2, kernel x0 + sigma_i z, loss |sigma_i net + z|^2
//   DDPM: weight 1 - alpha_bar_i, kernel sqrt(alpha_bar_i) x0 + sqrt(1-alpha_bar_i) z
// The network sees the scale through t_i = i/n. With n = 1 the index draw
// is skipped, which makes the estimator a single-scale denoising loss with
// the same stream usage as dsm_loss_continuous at a pinned time.
inline LossGrad discrete_loss(const MlpScoreNet& net, const std::vector<Vec>& x0_batch,
                              const DiscreteSchedule& sch, RngStream& rng) {
    if (x0_batch.empty()) throw std::invalid_argument("discrete_loss: empty batch");
    sch.validate();
    LossGrad out;
    out.grad.assign(net.param_count(), 0.0);
    MlpScoreNet::Cache cache;
    const double inv_b = 1.0 / static_cast<double>(x0_batch.size());
    const double n = static_cast<double>(sch.n);
    for (const Vec& x0 : x0_batch) {
        int idx = 0;
        if (sch.n > 1) {
            idx = static_cast<int>(rng.uniform() * n);
            if (idx >= sch.n) idx = sch.n - 1;
        }
        double m, s;
        if (sch.kind == ChainKind::SMLD) {
            m = 1.0;
            s = sch.sigma[idx];
        } else {
            m = std::sqrt(sch.alpha_bar[idx]);
            s = std::sqrt(1.0 - sch.alpha_bar[idx]);
        }
        double t = static_cast<double>(idx + 1) / n;
        Vec z = rng.gaussian_vec(x0.size());
        Vec xt(x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = m * x0[i] + s * z[i];
        Vec y = net.forward_cached(xt, t, cache);
        Vec dLdy(y.size());
        double li = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double r = s * y[i] + z[i];
            li += r * r;
            dLdy[i] = 2.0 * n * s * r * inv_b;
        }
        out.loss += n * li * inv_b;
        net.backward(cache, dLdy, out.grad);
    }
    return out;
}

// Sliced score matching with the same s(t)^2 weighting: per sample,
//   lambda(t) ( 0.5 |net(x_t,t)|^2 + v' J v ),
// where v' J v is taken by a central finite difference along the probe v.
// The gradient is the exact gradient of this finite-difference loss.
inline LossGrad ssm_loss(const MlpScoreNet& net, const std::vector<Vec>& x0_batch, const SdeSpec& sde,
                         RngStream& rng, ProbeDist probe_dist = ProbeDist::Rademacher,
                         double h = 1e-4, double fixed_t = -1.0) {
    if (x0_batch.empty()) throw std::invalid_argument("ssm_loss: empty batch");
    if (!(h >= 1e-5 && h <= 1e-2)) throw std::invalid_argument("ssm_loss: h must lie in [1e-5, 1e-2]");
    LossGrad out;
    out.grad.assign(net.param_count(), 0.0);
    MlpScoreNet::Cache cache;
    const double inv_b = 1.0 / static_cast<double>(x0_batch.size());
    for (const Vec& x0 : x0_batch) {
        double t = fixed_t >= 0.0
                       ? fixed_t
                       : sde.eps_train + rng.uniform() * (sde.t_max - sde.eps_train);
        KernelPoint kp = perturbation_kernel(sde, t);
        double lambda = kp.std * kp.std;
        Vec z = rng.gaussian_vec(x0.size());
        Vec xt(x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = kp.mean_coeff * x0[i] + kp.std * z[i];
        Vec v = draw_probe(x0.size(), probe_dist, rng);

        Vec y0 = net.forward_cached(xt, t, cache);
        double sq = 0.0;
        Vec dLdy(y0.size());
        for (std::size_t i = 0; i < y0.size(); ++i) {
            sq += y0[i] * y0[i];
            dLdy[i] = lambda * y0[i] * inv_b;
        }
        net.backward(cache, dLdy, out.grad);

        Vec xp = xt, xm = xt;
        axpy(h, v, xp);
        axpy(-h, v, xm);
        Vec yp = net.forward_cached(xp, t, cache);
        for (std::size_t i = 0; i < yp.size(); ++i) dLdy[i] = lambda * v[i] / (2.0 * h) * inv_b;
        net.backward(cache, dLdy, out.grad);
        double dir = dot(v, yp);
        Vec ym = net.forward_cached(xm, t, cache);
        for (std::size_t i = 0; i < ym.size(); ++i) dLdy[i] = -lambda * v[i] / (2.0 * h) * inv_b;
        net.backward(cache, dLdy, out.grad);
        dir = (dir - dot(v, ym)) / (2.0 * h);

        out.loss += lambda * (0.5 * sq + dir) * inv_b;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam-style trainer.

enum class Objective { DsmContinuous, SmldDiscrete, DdpmDiscrete, Ssm };

inline const char* objective_name(Objective o) {
    switch (o) {
        case Objective::DsmContinuous: return "dsm";
        case Objective::SmldDiscrete: return "smld";
        case Objective::DdpmDiscrete: return "ddpm";
        case Objective::Ssm: return "ssm";
    }
    return "?";
}

inline Objective objective_from_name(const std::string& s) {
    if (s == "dsm") return Objective::DsmContinuous;
    if (s == "smld") return Objective::SmldDiscrete;
    if (s == "ddpm") return Objective::DdpmDiscrete;
    if (s == "ssm") return Objective::Ssm;
    throw std::invalid_argument("unknown objective: " + s);
}

struct TrainConfig {
    Objective objective = Objective::DsmContinuous;
    int iterations = 20000;
    int batch = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double eps_train = 1e-5;
    DiscreteSchedule schedule;  // for the discrete objectives
    ProbeDist ssm_probes = ProbeDist::Rademacher;
    double ssm_h = 1e-4;
    int log_every = 100;
};

inline void validate_config(const TrainConfig& cfg) {
    if (cfg.iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
    if (cfg.batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (!(cfg.lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (!(cfg.eps_train > 0.0)) throw std::invalid_argument("TrainConfig: eps_train must be > 0");
    if (!(cfg.ssm_h >= 1e-5 && cfg.ssm_h <= 1e-2))
        throw std::invalid_argument("TrainConfig: ssm_h must lie in [1e-5, 1e-2]");
    if (cfg.log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
    if (cfg.objective == Objective::SmldDiscrete && cfg.schedule.kind != ChainKind::SMLD)
        throw std::invalid_argument("TrainConfig: smld objective needs an SMLD schedule");
    if (cfg.objective == Objective::DdpmDiscrete && cfg.schedule.kind != ChainKind::DDPM)
        throw std::invalid_argument("TrainConfig: ddpm objective needs a DDPM schedule");
    if (cfg.objective == Objective::SmldDiscrete || cfg.objective == Objective::DdpmDiscrete)
        cfg.schedule.validate();
}

struct AdamState {
    std::vector<double> m, v;
    long long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void update(std::vector<double>& params, const std::vector<double>& grad, double lr) {
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        ++step;
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

using DataSampler = std::function<Vec(RngStream&)>;

// Runs the configured objective with Adam; deterministic per seed. The
// returned history holds the minibatch loss every log_every iterations.
inline std::vector<double> train(MlpScoreNet& net, const DataSampler& data, const SdeSpec& sde,
                                 const TrainConfig& cfg) {
    validate_config(cfg);
    SdeSpec s2 = sde;
    s2.eps_train = cfg.eps_train;
    RngStream rng(cfg.seed, "train");
    AdamState adam;
    std::vector<double> history;
    std::vector<Vec> batch(static_cast<std::size_t>(cfg.batch));
    for (int it = 0; it < cfg.iterations; ++it) {
        for (Vec& b : batch) b = data(rng);
        LossGrad lg;
        switch (cfg.objective) {
            case Objective::DsmContinuous: lg = dsm_loss_continuous(net, batch, s2, rng); break;
            case Objective::SmldDiscrete:
            case Objective::DdpmDiscrete: lg = discrete_loss(net, batch, cfg.schedule, rng); break;
            case Objective::Ssm:
                lg = ssm_loss(net, batch, s2, rng, cfg.ssm_probes, cfg.ssm_h);
                break;
        }
        if (!std::isfinite(lg.loss))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
        adam.update(net.params, lg.grad, cfg.lr);
        if (!all_finite(net.params))
            throw std::runtime_error("train: non-finite parameter at iteration " +
                                     std::to_string(it));
        if (it % cfg.log_every == 0) history.push_back(lg.loss);
    }
    return history;
}

// ---------------------------------------------------------------------------
// ScoreFunction adapters.

// Continuous-time view of the network (snapshot by value).
inline ScoreFunction as_score(const MlpScoreNet& net) {
    ScoreFunction s;
    s.dim = net.dim;
    s.source = "network";
    s.eval = [net](const Vec& x, double t) { return net.forward(x, t); };
    return s;
}

// Discrete-trained networks address scales by index: continuous t maps to
// the nearest schedule index, i.e. the nearest grid time i/n.
inline ScoreFunction as_score(const MlpScoreNet& net, const DiscreteSchedule& sch) {
    sch.validate();
    ScoreFunction s;
    s.dim = net.dim;
    s.source = "network";
    int n = sch.n;
    s.eval = [net, n](const Vec& x, double t) {
        int i = static_cast<int>(std::lround(t * n));
        if (i < 1) i = 1;
        if (i > n) i = n;
        return net.forward(x, static_cast<double>(i) / n);
    };
    return s;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with an architecture header; doubles round-trip exactly.

inline nlohmann::json checkpoint_json(const MlpScoreNet& net) {
    nlohmann::json j;
    j["format"] = "mlp-score-net-v1";
    j["dim"] = net.dim;
    j["hidden"] = net.hidden;
    j["emb_width"] = net.emb_width;
    j["fourier_scale"] = net.fourier_scale;
    j["freqs"] = net.freqs;
    j["params"] = net.params;
    return j;
}

inline void save_checkpoint(const MlpScoreNet& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << checkpoint_json(net).dump(2) << "\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline MlpScoreNet net_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != "mlp-score-net-v1")
        throw std::runtime_error("checkpoint: unrecognized format");
    MlpScoreNet net = make_mlp_score_net(j.at("dim").get<int>(),
                                         j.at("hidden").get<std::vector<int>>(),
                                         j.at("emb_width").get<int>(),
                                         j.at("fourier_scale").get<double>());
    net.freqs = j.at("freqs").get<std::vector<double>>();
    if (net.freqs.size() != static_cast<std::size_t>(net.emb_width / 2))
        throw std::runtime_error("checkpoint: frequency count mismatch");
    std::vector<double> p = j.at("params").get<std::vector<double>>();
    if (p.size() != net.params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    net.params = std::move(p);
    return net;
}

inline MlpScoreNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return net_from_json(j);
}

}  // namespace sdelab
