#pragma once

// Task driver: turns a resolved ExperimentConfig into artifacts on disk
// (CSV, JSON, SVG). Every artifact embeds the master seed and the config
// hash, and every byte is a pure function of (config, seed): worker threads
// only change wall time, never output, because all randomness is drawn from
// per-index streams and all rows are written in fixed index order.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdelab/conditional.hpp"
#include "sdelab/config.hpp"
#include "sdelab/gmm.hpp"
#include "sdelab/metrics.hpp"
#include "sdelab/net.hpp"
#include "sdelab/ode.hpp"
#include "sdelab/samplers.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/svg.hpp"

namespace sdelab {

// Worker threads default to the hardware count and are capped by the
// SDELAB_THREADS environment variable. Thread count is a host concern: it is
// not part of the configuration, and artifact bytes never depend on it.
inline int effective_threads() {
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw > 0 ? static_cast<int>(hw) : 1;
    const char* env = std::getenv("SDELAB_THREADS");
    if (env && *env) {
        char* end = nullptr;
        long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap >= 1 && cap < n) n = static_cast<int>(cap);
    }
    return n;
}

namespace rundetail {

inline void write_file(const std::string& path, const std::string& bytes) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    std::size_t wrote = std::fwrite(bytes.data(), 1, bytes.size(), f);
    int rc = std::fclose(f);
    if (wrote != bytes.size() || rc != 0) throw std::runtime_error("write failed: " + path);
}

inline std::string join_cells(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out;
}

struct ArtifactWriter {
    std::filesystem::path dir;
    std::uint64_t seed;
    std::string hash;

    explicit ArtifactWriter(const ExperimentConfig& cfg)
        : dir(cfg.out), seed(cfg.seed), hash(config_hash(cfg)) {
        std::filesystem::create_directories(dir);
    }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    void csv(const std::string& name, const std::vector<std::string>& extra_comments,
             const std::vector<std::string>& header,
             const std::vector<std::vector<std::string>>& rows) const {
        std::string text;
        text += "# seed=" + std::to_string(seed) + "\n";
        text += "# config=" + hash + "\n";
        for (const std::string& c : extra_comments) text += "# " + c + "\n";
        text += join_cells(header) + "\n";
        for (const auto& r : rows) text += join_cells(r) + "\n";
        write_file(path(name), text);
    }

    void json(const std::string& name, nlohmann::json j) const {
        j["seed"] = seed;
        j["config_hash"] = hash;
        write_file(path(name), j.dump(2) + "\n");
    }

    void svg(const std::string& name, SvgPlot plot) const {
        plot.comment = "seed=" + std::to_string(seed) + " config=" + hash;
        emit_svg(plot, path(name));
    }
};

// 1-D marginal of a diagonal mixture along coordinate j, as a reference
// distribution for Wasserstein/KS comparisons.
inline PerturbedMixture marginal_1d(const GaussianMixture& g, std::size_t j) {
    PerturbedMixture p;
    p.dim = 1;
    p.mean_coeff = 1.0;
    p.std = 0.0;
    p.weights = g.weights;
    for (int k = 0; k < g.n_components(); ++k) {
        p.means.push_back({g.means[k][j]});
        p.vars.push_back({g.vars[k][j]});
    }
    return p;
}

inline std::vector<Vec> draw_dataset(const ExperimentConfig& cfg, std::size_t n) {
    PerturbedMixture clean = perturb_gmm(cfg.data, 1.0, 0.0);
    std::vector<Vec> xs(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(cfg.seed, "data", i);
        xs[i] = clean.sample(rng);
    }
    return xs;
}

struct ScoreBundle {
    ScoreFunction score;
    bool oracle = false;
    bool has_net = false;
    MlpScoreNet net;
    std::vector<double> history;  // nonempty when trained here
};

inline DiscreteSchedule training_schedule(const ExperimentConfig& cfg) {
    if (cfg.train.objective == Objective::SmldDiscrete)
        return make_smld_schedule(cfg.sde.sigma_min, cfg.sde.sigma_max, cfg.train_schedule_n);
    return make_ddpm_schedule(cfg.sde.beta_min, cfg.sde.beta_max, cfg.train_schedule_n);
}

inline ScoreBundle train_score(const ExperimentConfig& cfg) {
    ScoreBundle b;
    b.net = make_mlp_score_net(cfg.data.dim, cfg.net_hidden, cfg.net_emb_width,
                               cfg.net_fourier_scale, cfg.seed);
    TrainConfig tc = cfg.train;
    bool discrete = tc.objective == Objective::SmldDiscrete ||
                    tc.objective == Objective::DdpmDiscrete;
    if (discrete) tc.schedule = training_schedule(cfg);
    PerturbedMixture clean = perturb_gmm(cfg.data, 1.0, 0.0);
    DataSampler data = [clean](RngStream& rng) { return clean.sample(rng); };
    b.history = train(b.net, data, cfg.sde, tc);
    b.score = discrete ? as_score(b.net, tc.schedule) : as_score(b.net);
    b.has_net = true;
    return b;
}

inline ScoreBundle load_score(const std::string& checkpoint, int dim) {
    ScoreBundle b;
    b.net = load_checkpoint(checkpoint);
    if (b.net.dim != dim)
        throw std::runtime_error("checkpoint dimension (" + std::to_string(b.net.dim) +
                                 ") does not match data.dim (" + std::to_string(dim) + ")");
    b.score = as_score(b.net);
    b.has_net = true;
    return b;
}

inline ScoreBundle resolve_score(const ExperimentConfig& cfg) {
    if (cfg.score_source == "oracle") {
        ScoreBundle b;
        b.score = oracle_score(cfg.data, cfg.sde);
        b.oracle = true;
        return b;
    }
    if (cfg.score_source == "checkpoint") return load_score(cfg.score_checkpoint, cfg.data.dim);
    return train_score(cfg);  // score.source = train
}

inline std::vector<std::string> vec_row(const Vec& v) {
    std::vector<std::string> cells;
    cells.reserve(v.size());
    for (double x : v) cells.push_back(format_double(x));
    return cells;
}

inline std::vector<std::string> coord_header(const std::string& prefix, std::size_t dim) {
    std::vector<std::string> h;
    for (std::size_t j = 0; j < dim; ++j) h.push_back(prefix + std::to_string(j));
    return h;
}

// Scatter of the first two coordinates, or (index, value) for 1-D data.
inline SvgPlot scatter_plot(const std::vector<Vec>& xs, const std::string& title) {
    SvgPlot plot;
    plot.title = title;
    std::vector<double> px, py;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() >= 2) {
            px.push_back(xs[i][0]);
            py.push_back(xs[i][1]);
        } else {
            px.push_back(static_cast<double>(i));
            py.push_back(xs[i][0]);
        }
    }
    bool planar = !xs.empty() && xs[0].size() >= 2;
    plot.xlabel = planar ? "x0" : "sample index";
    plot.ylabel = planar ? "x1" : "value";
    SvgSeries s;
    s.scatter = true;
    for (std::size_t i = 0; i < px.size(); ++i) s.points.emplace_back(px[i], py[i]);
    plot.series.push_back(std::move(s));
    return plot;
}

// Moments plus per-coordinate Wasserstein-1 against the analytic mixture.
inline nlohmann::json sample_quality(const std::vector<Vec>& xs, const GaussianMixture& ref) {
    nlohmann::json m;
    m["n"] = xs.size();
    m["dim"] = ref.dim;
    if (xs.size() >= 2) {
        Moments mom = moments(xs);
        m["mean"] = mom.mean;
        m["var"] = mom.var;
    }
    m["ref_mean"] = mixture_mean(ref);
    m["ref_var"] = mixture_var(ref);
    Vec w1(static_cast<std::size_t>(ref.dim));
    for (std::size_t j = 0; j < w1.size(); ++j)
        w1[j] = wasserstein1_1d(component_1d(xs, j), marginal_1d(ref, j));
    m["w1"] = w1;
    return m;
}

// ---------------------------------------------------------------------------
// Tasks.

inline void task_sample(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = resolve_score(cfg);
    PcConfig pc = cfg.sampler;
    pc.threads = effective_threads();
    SampleBatch batch = pc_sample(cfg.sde, sb.score, pc);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(batch.samples.size());
    for (const Vec& x : batch.samples) rows.push_back(vec_row(x));
    w.csv("samples.csv", {}, coord_header("x", static_cast<std::size_t>(cfg.data.dim)), rows);
    w.json("metrics.json", sample_quality(batch.samples, cfg.data));
    w.svg("report.svg", scatter_plot(batch.samples, "samples"));
}

inline void task_train(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = train_score(cfg);
    save_checkpoint(sb.net, w.path("checkpoint.json"));

    std::vector<std::vector<std::string>> rows;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < sb.history.size(); ++i) {
        double it = static_cast<double>(i) * cfg.train.log_every;
        rows.push_back({format_double(it), format_double(sb.history[i])});
        xs.push_back(it);
        ys.push_back(sb.history[i]);
    }
    w.csv("history.csv", {}, {"iteration", "loss"}, rows);

    nlohmann::json m;
    m["iterations"] = cfg.train.iterations;
    m["objective"] = objective_name(cfg.train.objective);
    m["param_count"] = sb.net.param_count();
    m["final_loss"] = sb.history.empty() ? 0.0 : sb.history.back();
    m["min_loss"] = sb.history.empty() ? 0.0 : *std::min_element(sb.history.begin(), sb.history.end());
    w.json("metrics.json", m);

    SvgPlot plot;
    plot.title = "training loss";
    plot.xlabel = "iteration";
    plot.ylabel = "loss";
    plot.series.push_back(line_series("", xs, ys));
    w.svg("report.svg", plot);
}

inline void task_likelihood(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = resolve_score(cfg);
    std::vector<Vec> xs = draw_dataset(cfg, static_cast<std::size_t>(cfg.points));

    std::function<double(const Vec&, double)> score_div;
    if (cfg.ode_divergence == "exact") {
        GaussianMixture g = cfg.data;
        SdeSpec sde = cfg.sde;
        score_div = [g, sde](const Vec& x, double t) {
            return score_divergence(perturb_gmm(g, sde, t), x);
        };
    }

    std::vector<LikelihoodResult> res(xs.size());
    detail::parallel_for(xs.size(), effective_threads(), [&](std::size_t i) {
        RngStream rng(cfg.seed, "likelihood", i);
        res[i] = log_likelihood(xs[i], sb.score, cfg.sde, cfg.ode, rng, score_div);
    });

    std::vector<std::string> header = coord_header("x", static_cast<std::size_t>(cfg.data.dim));
    for (const char* c : {"log_prob", "bits_per_dim", "prior_term", "divergence_integral", "nfe"})
        header.push_back(c);
    std::vector<std::vector<std::string>> rows;
    double sum_lp = 0.0, sum_bpd = 0.0, sum_nfe = 0.0;
    double min_bpd = 0.0, max_bpd = 0.0;
    std::vector<double> idx, bpd;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<std::string> r = vec_row(xs[i]);
        r.push_back(format_double(res[i].log_prob));
        r.push_back(format_double(res[i].bits_per_dim));
        r.push_back(format_double(res[i].prior_term));
        r.push_back(format_double(res[i].divergence_integral));
        r.push_back(std::to_string(res[i].nfe));
        rows.push_back(std::move(r));
        sum_lp += res[i].log_prob;
        sum_bpd += res[i].bits_per_dim;
        sum_nfe += static_cast<double>(res[i].nfe);
        if (i == 0 || res[i].bits_per_dim < min_bpd) min_bpd = res[i].bits_per_dim;
        if (i == 0 || res[i].bits_per_dim > max_bpd) max_bpd = res[i].bits_per_dim;
        idx.push_back(static_cast<double>(i));
        bpd.push_back(res[i].bits_per_dim);
    }
    w.csv("likelihood.csv", {"divergence=" + cfg.ode_divergence}, header, rows);

    double n = static_cast<double>(xs.size());
    nlohmann::json m;
    m["n"] = xs.size();
    m["divergence"] = cfg.ode_divergence;
    m["mean_log_prob"] = sum_lp / n;
    m["mean_bits_per_dim"] = sum_bpd / n;
    m["min_bits_per_dim"] = min_bpd;
    m["max_bits_per_dim"] = max_bpd;
    m["mean_nfe"] = sum_nfe / n;
    w.json("likelihood.json", m);

    SvgPlot plot;
    plot.title = "per-point likelihood";
    plot.xlabel = "point index";
    plot.ylabel = "bits per dim";
    plot.series.push_back(scatter_series("", idx, bpd));
    w.svg("report.svg", plot);
}

inline void task_encode(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = resolve_score(cfg);
    std::vector<Vec> xs = draw_dataset(cfg, static_cast<std::size_t>(cfg.points));
    std::vector<Vec> zs(xs.size());
    detail::parallel_for(xs.size(), effective_threads(),
                         [&](std::size_t i) { zs[i] = encode(xs[i], sb.score, cfg.sde, cfg.ode); });

    std::size_t d = static_cast<std::size_t>(cfg.data.dim);
    std::vector<std::string> header = coord_header("x", d);
    for (const std::string& h : coord_header("z", d)) header.push_back(h);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<std::string> r = vec_row(xs[i]);
        for (const std::string& c : vec_row(zs[i])) r.push_back(c);
        rows.push_back(std::move(r));
    }
    w.csv("latents.csv", {}, header, rows);

    nlohmann::json m;
    m["n"] = zs.size();
    m["dim"] = cfg.data.dim;
    if (zs.size() >= 2) {
        Moments mom = moments(zs);
        m["latent_mean"] = mom.mean;
        m["latent_var"] = mom.var;
    }
    double pv = prior_std(cfg.sde);
    m["prior_var"] = pv * pv;
    w.json("metrics.json", m);
    w.svg("report.svg", scatter_plot(zs, "latent codes"));
}

inline void task_decode(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = resolve_score(cfg);
    std::size_t n = static_cast<std::size_t>(cfg.points);
    std::size_t d = static_cast<std::size_t>(cfg.data.dim);
    std::vector<Vec> xs(n);
    detail::parallel_for(n, effective_threads(), [&](std::size_t i) {
        RngStream rng(cfg.seed, "latent", i);
        Vec z = prior_sample(cfg.sde, d, rng);
        xs[i] = decode(z, sb.score, cfg.sde, cfg.ode);
    });

    std::vector<std::vector<std::string>> rows;
    for (const Vec& x : xs) rows.push_back(vec_row(x));
    w.csv("samples.csv", {}, coord_header("x", d), rows);
    w.json("metrics.json", sample_quality(xs, cfg.data));
    w.svg("report.svg", scatter_plot(xs, "decoded samples"));
}

inline void task_impute(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = resolve_score(cfg);
    PcConfig pc = cfg.sampler;
    pc.threads = effective_threads();
    std::size_t d = static_cast<std::size_t>(cfg.data.dim);

    std::string obs_note = "observed:";
    for (std::size_t j = 0; j < cfg.obs.mask_indices.size(); ++j)
        obs_note += " " + std::to_string(cfg.obs.mask_indices[j]) + "=" +
                    format_double(cfg.obs.mask_values[j]);

    nlohmann::json m;
    m["known_indices"] = cfg.obs.mask_indices;
    m["known_values"] = cfg.obs.mask_values;

    std::vector<Vec> full;
    if (cfg.obs_basis.empty()) {
        ImputeResult res =
            impute_with_score(sb.score, cfg.sde, cfg.obs.mask_indices, cfg.obs.mask_values, pc);
        full.reserve(res.batch.samples.size());
        for (const Vec& u : res.batch.samples) {
            Vec x(d, 0.0);
            for (std::size_t j = 0; j < res.known.size(); ++j)
                x[res.known[j]] = res.known_values[j];
            for (std::size_t j = 0; j < res.unknown.size(); ++j) x[res.unknown[j]] = u[j];
            full.push_back(std::move(x));
        }
        m["unknown_indices"] = res.unknown;
        if (res.batch.samples.size() >= 2) {
            Moments mom = moments(res.batch.samples);
            m["imputed_mean"] = mom.mean;
            m["imputed_var"] = mom.var;
        }
    } else {
        // observation lives in the orthogonal basis' coordinates
        SampleBatch batch = decoupled_impute(sb.score, cfg.sde, cfg.obs_basis,
                                             cfg.obs.mask_indices, cfg.obs.mask_values, pc);
        full = batch.samples;
        obs_note += " (in basis coordinates)";
        if (full.size() >= 2) {
            Moments mom = moments(full);
            m["sample_mean"] = mom.mean;
            m["sample_var"] = mom.var;
        }
    }
    m["n"] = full.size();
    m["decoupled"] = !cfg.obs_basis.empty();

    std::vector<std::vector<std::string>> rows;
    for (const Vec& x : full) rows.push_back(vec_row(x));
    w.csv("samples.csv", {obs_note}, coord_header("x", d), rows);
    w.json("metrics.json", m);
    w.svg("report.svg", scatter_plot(full, "imputed samples"));
}

inline void task_condition(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    PcConfig pc = cfg.sampler;
    pc.threads = effective_threads();

    SampleBatch batch;
    nlohmann::json m;
    if (cfg.obs.kind == ObservationKind::Class) {
        if (cfg.score_source != "oracle")
            throw std::runtime_error(
                "class conditioning needs component posteriors: set score.source=oracle");
        batch = class_conditional_sample(cfg.data, cfg.sde, cfg.obs.class_k, pc);
        m["class_k"] = cfg.obs.class_k;
    } else {
        ScoreBundle sb = resolve_score(cfg);
        ScoreFunction cond =
            linear_inverse_score(sb.score, cfg.sde, cfg.obs.A, cfg.obs.y, cfg.obs.noise_std);
        batch = pc_sample(cfg.sde, cond, pc);
        m["observation_rows"] = cfg.obs.A.size();
        m["y"] = cfg.obs.y;
        m["noise_std"] = cfg.obs.noise_std;
    }
    m["n"] = batch.samples.size();
    if (batch.samples.size() >= 2) {
        Moments mom = moments(batch.samples);
        m["mean"] = mom.mean;
        m["var"] = mom.var;
    }

    std::vector<std::vector<std::string>> rows;
    for (const Vec& x : batch.samples) rows.push_back(vec_row(x));
    w.csv("samples.csv", {}, coord_header("x", static_cast<std::size_t>(cfg.data.dim)), rows);
    w.json("metrics.json", m);
    w.svg("report.svg", scatter_plot(batch.samples, "conditional samples"));
}

inline void task_kernel_check(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    std::vector<KernelMatchRow> report = kernel_match_report(cfg.sde, cfg.sampler.n_steps);
    KernelMatchSummary sum = summarize_kernel_match(report);

    std::vector<std::vector<std::string>> rows;
    std::vector<double> ts, ds, cs;
    for (const KernelMatchRow& r : report) {
        rows.push_back({format_double(r.t), format_double(r.discrete_std),
                        format_double(r.continuous_std), format_double(r.discrete_mean_coeff),
                        format_double(r.continuous_mean_coeff)});
        ts.push_back(r.t);
        ds.push_back(r.discrete_std);
        cs.push_back(r.continuous_std);
    }
    w.csv("kernel_check.csv", {},
          {"t", "discrete_std", "continuous_std", "discrete_mean_coeff", "continuous_mean_coeff"},
          rows);

    nlohmann::json m;
    m["n_steps"] = cfg.sampler.n_steps;
    m["max_rel_std"] = sum.max_rel_std;
    m["max_rel_mean"] = sum.max_rel_mean;
    m["max_scaled_std"] = sum.max_scaled_std;
    m["max_scaled_mean"] = sum.max_scaled_mean;
    w.json("metrics.json", m);

    SvgPlot plot;
    plot.title = "discrete chain vs continuous kernel";
    plot.xlabel = "t";
    plot.ylabel = "std";
    plot.series.push_back(line_series("discrete", ts, ds));
    plot.series.push_back(line_series("continuous", ts, cs));
    w.svg("report.svg", plot);
}

inline void task_variance_check(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    SdeParams p;
    p.beta_min = cfg.sde.beta_min;
    p.beta_max = cfg.sde.beta_max;
    p.t_max = cfg.sde.t_max;
    p.eps_train = cfg.sde.eps_train;
    SdeSpec vp = build_sde(SdeKind::VP, p);
    SdeSpec subvp = build_sde(SdeKind::SubVP, p);

    int n = cfg.points;
    std::vector<std::vector<std::string>> rows;
    std::vector<double> ts, vvp, vsub;
    double max_dev_vp = 0.0, max_excess = -1.0;
    for (int i = 0; i < n; ++i) {
        double t = cfg.sde.t_max * static_cast<double>(i) / static_cast<double>(n - 1);
        double a = variance_trajectory(vp, 1.0, t);
        double b = variance_trajectory(subvp, 1.0, t);
        if (b > a + 1e-12)
            throw std::runtime_error("variance-check failed: var_subvp > var_vp at t=" +
                                     format_double(t));
        rows.push_back({format_double(t), format_double(a), format_double(b)});
        ts.push_back(t);
        vvp.push_back(a);
        vsub.push_back(b);
        max_dev_vp = std::max(max_dev_vp, std::fabs(a - 1.0));
        max_excess = std::max(max_excess, b - a);
    }
    w.csv("variance_check.csv", {"unit initial variance"}, {"t", "var_vp", "var_subvp"}, rows);

    nlohmann::json m;
    m["grid_points"] = n;
    m["max_abs_dev_vp_from_one"] = max_dev_vp;
    m["max_subvp_excess_over_vp"] = max_excess;
    m["final_var_vp"] = vvp.back();
    m["final_var_subvp"] = vsub.back();
    w.json("metrics.json", m);

    SvgPlot plot;
    plot.title = "marginal variance, unit initial variance";
    plot.xlabel = "t";
    plot.ylabel = "variance";
    plot.series.push_back(line_series("vp", ts, vvp));
    plot.series.push_back(line_series("sub-vp", ts, vsub));
    w.svg("report.svg", plot);
}

inline void task_sampler_bench(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle sb = resolve_score(cfg);
    std::vector<std::pair<PredictorKind, CorrectorKind>> combos = {
        {PredictorKind::ReverseDiffusion, CorrectorKind::None},
        {PredictorKind::ReverseDiffusion, CorrectorKind::Langevin},
        {PredictorKind::EulerMaruyama, CorrectorKind::None},
        {PredictorKind::EulerMaruyama, CorrectorKind::Langevin},
        {PredictorKind::Ancestral, CorrectorKind::None},
        {PredictorKind::Ancestral, CorrectorKind::Langevin},
        {PredictorKind::ProbFlow, CorrectorKind::None},
        {PredictorKind::None, CorrectorKind::Langevin},
    };
    if (cfg.sde.kind == SdeKind::SubVP) {
        std::erase_if(combos, [](const auto& c) { return c.first == PredictorKind::Ancestral; });
    }

    Vec ref_mean = mixture_mean(cfg.data);
    Vec ref_var = mixture_var(cfg.data);
    std::size_t d = static_cast<std::size_t>(cfg.data.dim);

    std::vector<std::vector<std::string>> rows;
    nlohmann::json combo_list = nlohmann::json::array();
    std::vector<double> idx, w1s;
    std::string best_name;
    double best_w1 = 0.0;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        PcConfig pc = cfg.sampler;
        pc.threads = effective_threads();
        pc.predictor = combos[ci].first;
        pc.corrector = combos[ci].second;
        pc.corrector_steps = pc.corrector == CorrectorKind::None
                                 ? 0
                                 : std::max(1, cfg.sampler.corrector_steps);
        SampleBatch batch = pc_sample(cfg.sde, sb.score, pc);

        Moments mom = moments(batch.samples);
        double mean_err = 0.0, var_err = 0.0, w1 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mean_err = std::max(mean_err, std::fabs(mom.mean[j] - ref_mean[j]));
            var_err = std::max(var_err, std::fabs(mom.var[j] - ref_var[j]));
            w1 += wasserstein1_1d(component_1d(batch.samples, j), marginal_1d(cfg.data, j));
        }
        w1 /= static_cast<double>(d);

        std::string pname = predictor_name(pc.predictor), cname = corrector_name(pc.corrector);
        rows.push_back({pname, cname, std::to_string(pc.corrector_steps),
                        format_double(mean_err), format_double(var_err), format_double(w1)});
        nlohmann::json entry;
        entry["predictor"] = pname;
        entry["corrector"] = cname;
        entry["corrector_steps"] = pc.corrector_steps;
        entry["mean_err"] = mean_err;
        entry["var_err"] = var_err;
        entry["w1"] = w1;
        combo_list.push_back(entry);
        idx.push_back(static_cast<double>(ci));
        w1s.push_back(w1);
        if (ci == 0 || w1 < best_w1) {
            best_w1 = w1;
            best_name = pname + "+" + cname;
        }
    }
    w.csv("bench.csv", {},
          {"predictor", "corrector", "corrector_steps", "mean_err", "var_err", "w1"}, rows);

    nlohmann::json m;
    m["combos"] = combo_list;
    m["best"] = best_name;
    m["best_w1"] = best_w1;
    w.json("metrics.json", m);

    SvgPlot plot;
    plot.title = "sampler benchmark";
    plot.xlabel = "combo index";
    plot.ylabel = "wasserstein-1";
    plot.series.push_back(scatter_series("", idx, w1s));
    w.svg("report.svg", plot);
}

inline void task_identifiability(const ExperimentConfig& cfg, const ArtifactWriter& w) {
    ScoreBundle a = resolve_score(cfg);
    ScoreBundle b = cfg.score_b_source == "oracle"
                        ? [&] {
                              ScoreBundle o;
                              o.score = oracle_score(cfg.data, cfg.sde);
                              o.oracle = true;
                              return o;
                          }()
                        : load_score(cfg.score_b_checkpoint, cfg.data.dim);

    std::vector<Vec> xs = draw_dataset(cfg, static_cast<std::size_t>(cfg.points));
    IdentifiabilityReport rep = identifiability_report(a.score, b.score, xs, cfg.sde, cfg.ode);

    std::size_t d = static_cast<std::size_t>(cfg.data.dim);
    std::vector<std::string> header = coord_header("x", d);
    for (const std::string& h : coord_header("za", d)) header.push_back(h);
    for (const std::string& h : coord_header("zb", d)) header.push_back(h);
    std::vector<std::vector<std::string>> rows;
    std::vector<double> pa, pb;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<std::string> r = vec_row(xs[i]);
        for (const std::string& c : vec_row(rep.latents_a[i])) r.push_back(c);
        for (const std::string& c : vec_row(rep.latents_b[i])) r.push_back(c);
        rows.push_back(std::move(r));
        pa.push_back(rep.latents_a[i][0]);
        pb.push_back(rep.latents_b[i][0]);
    }
    w.csv("latents.csv", {}, header, rows);

    nlohmann::json m;
    m["n"] = xs.size();
    m["correlation"] = rep.correlation;
    m["min_correlation"] = *std::min_element(rep.correlation.begin(), rep.correlation.end());
    m["max_abs_diff"] = rep.max_abs_diff;
    w.json("identifiability.json", m);

    SvgPlot plot;
    plot.title = "latent agreement (coordinate 0)";
    plot.xlabel = "encoder a";
    plot.ylabel = "encoder b";
    plot.series.push_back(scatter_series("", pa, pb));
    w.svg("report.svg", plot);
}

}  // namespace rundetail

inline void run_task(const ExperimentConfig& cfg) {
    rundetail::ArtifactWriter w(cfg);
    if (cfg.task == "sample") rundetail::task_sample(cfg, w);
    else if (cfg.task == "train") rundetail::task_train(cfg, w);
    else if (cfg.task == "likelihood") rundetail::task_likelihood(cfg, w);
    else if (cfg.task == "encode") rundetail::task_encode(cfg, w);
    else if (cfg.task == "decode") rundetail::task_decode(cfg, w);
    else if (cfg.task == "impute") rundetail::task_impute(cfg, w);
    else if (cfg.task == "condition") rundetail::task_condition(cfg, w);
    else if (cfg.task == "kernel-check") rundetail::task_kernel_check(cfg, w);
    else if (cfg.task == "variance-check") rundetail::task_variance_check(cfg, w);
    else if (cfg.task == "sampler-bench") rundetail::task_sampler_bench(cfg, w);
    else if (cfg.task == "identifiability") rundetail::task_identifiability(cfg, w);
    else throw std::invalid_argument("unknown task: " + cfg.task);
}

}  // namespace sdelab
