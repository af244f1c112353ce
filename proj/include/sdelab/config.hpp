#pragma once

// Experiment configuration: a flat dotted-key text format (key=value lines,
// '#' comments) with strict validation — unknown keys are errors, range
// violations name the offending field. Resolution applies defaults and
// produces a canonical form (every key present, sorted, full-precision
// values) that is a fixed point of parse/print and the input to the config
// hash embedded in artifacts.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdelab/conditional.hpp"
#include "sdelab/gmm.hpp"
#include "sdelab/net.hpp"
#include "sdelab/ode.hpp"
#include "sdelab/samplers.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

// ---------------------------------------------------------------------------
// Value formatting and parsing. Errors always name the key.

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace cfgdetail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

[[noreturn]] inline void fail(const std::string& key, const std::string& what) {
    throw std::invalid_argument("config: " + key + ": " + what);
}

inline double to_double(const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) fail(key, "expected a number, got '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "expected a number, got '" + s + "'");
    } catch (const std::out_of_range&) {
        fail(key, "number out of range: '" + s + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) fail(key, "expected an integer, got '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "expected an integer, got '" + s + "'");
    } catch (const std::out_of_range&) {
        fail(key, "integer out of range: '" + s + "'");
    }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size() || s.find('-') != std::string::npos)
            fail(key, "expected a non-negative integer, got '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "expected a non-negative integer, got '" + s + "'");
    } catch (const std::out_of_range&) {
        fail(key, "integer out of range: '" + s + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(key, "expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline Vec to_double_list(const std::string& key, const std::string& s) {
    Vec out;
    if (trim(s).empty()) return out;
    for (const std::string& tok : split(s, ',')) out.push_back(to_double(key, tok));
    return out;
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& s) {
    std::vector<int> out;
    if (trim(s).empty()) return out;
    for (const std::string& tok : split(s, ',')) {
        long long v = to_int(key, tok);
        out.push_back(static_cast<int>(v));
    }
    return out;
}

inline std::vector<std::size_t> to_size_list(const std::string& key, const std::string& s) {
    std::vector<std::size_t> out;
    if (trim(s).empty()) return out;
    for (const std::string& tok : split(s, ','))
        out.push_back(static_cast<std::size_t>(to_u64(key, tok)));
    return out;
}

inline std::vector<Vec> to_matrix(const std::string& key, const std::string& s) {
    std::vector<Vec> out;
    if (trim(s).empty()) return out;
    for (const std::string& row : split(s, ';')) out.push_back(to_double_list(key, row));
    return out;
}

inline std::string format_list(const Vec& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

inline std::string format_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::string format_size_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::string format_matrix(const std::vector<Vec>& m) {
    std::string out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) out += ';';
        out += format_list(m[i]);
    }
    return out;
}

}  // namespace cfgdetail

// ---------------------------------------------------------------------------
// Raw key=value text.

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = cfgdetail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        std::string key = cfgdetail::trim(line.substr(0, eq));
        std::string value = cfgdetail::trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config: line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;  // later assignments override earlier ones
    }
    return kv;
}

inline std::string read_text_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open file: " + path);
    std::string out;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, got);
    std::fclose(f);
    return out;
}

// ---------------------------------------------------------------------------
// Schema.

inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {
        "sample",       "train",          "likelihood",   "encode",
        "decode",       "impute",         "condition",    "kernel-check",
        "variance-check", "sampler-bench", "identifiability"};
    return names;
}

inline bool known_config_key(const std::string& key) {
    static const std::vector<std::string> fixed = {
        "task", "seed", "out", "points",
        "sde.kind", "sde.sigma_min", "sde.sigma_max", "sde.beta_min", "sde.beta_max",
        "sde.t_max", "sde.eps_train", "sde.eps_sample",
        "data.dim", "data.components",
        "score.source", "score.checkpoint", "score_b.source", "score_b.checkpoint",
        "net.hidden", "net.emb_width", "net.fourier_scale",
        "train.objective", "train.iterations", "train.batch", "train.lr",
        "train.log_every", "train.ssm_h", "train.ssm_probes", "train.schedule_n",
        "sampler.predictor", "sampler.corrector", "sampler.n_steps", "sampler.corrector_steps",
        "sampler.snr", "sampler.denoise", "sampler.batch",
        "ode.rtol", "ode.atol", "ode.max_steps", "ode.probes", "ode.probe_dist",
        "ode.divergence",
        "obs.kind", "obs.class_k", "obs.indices", "obs.values", "obs.matrix", "obs.y",
        "obs.noise_std", "obs.basis"};
    for (const std::string& k : fixed)
        if (k == key) return true;
    // per-component mixture keys: data.{weight,mean,var}.<index>
    for (const char* prefix : {"data.weight.", "data.mean.", "data.var."}) {
        std::string p(prefix);
        if (key.size() > p.size() && key.compare(0, p.size(), p) == 0) {
            const std::string idx = key.substr(p.size());
            if (!idx.empty() &&
                idx.find_first_not_of("0123456789") == std::string::npos)
                return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Resolved configuration.

struct ExperimentConfig {
    std::string task;
    std::uint64_t seed = 0;
    std::string out = "out";
    int points = 1000;

    SdeSpec sde;
    GaussianMixture data;

    std::string score_source;      // oracle | checkpoint | train
    std::string score_checkpoint;  // used when score_source == checkpoint
    std::string score_b_source;    // identifiability second score: oracle | checkpoint
    std::string score_b_checkpoint;

    std::vector<int> net_hidden;
    int net_emb_width = 32;
    double net_fourier_scale = 16.0;

    TrainConfig train;
    int train_schedule_n = 1000;

    PcConfig sampler;
    OdeConfig ode;
    std::string ode_divergence;  // estimate | exact

    Observation obs;
    std::vector<Vec> obs_basis;  // optional orthogonal basis for impute

    // canonical key=value view: sorted, every key present, resolved values
    std::map<std::string, std::string> canonical;
};

inline std::string print_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : cfg.canonical) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

// FNV-1a 64-bit over the canonical text, printed as 16 hex digits. The
// output directory names where artifacts land, not what they contain, so the
// "out" line is excluded: reruns of one experiment into different directories
// hash (and byte-compare) identically.
inline std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : cfg.canonical) {
        if (k == "out") continue;
        for (char c : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline ExperimentConfig resolve_config(const std::map<std::string, std::string>& kv) {
    using namespace cfgdetail;
    for (const auto& [k, v] : kv) {
        (void)v;
        if (!known_config_key(k)) throw std::invalid_argument("config: unknown key '" + k + "'");
    }
    auto get = [&kv](const std::string& key, const std::string& dflt) {
        auto it = kv.find(key);
        return it == kv.end() ? dflt : it->second;
    };
    auto has = [&kv](const std::string& key) { return kv.count(key) != 0; };

    ExperimentConfig cfg;

    // task
    cfg.task = to_lower(get("task", ""));
    if (cfg.task.empty()) fail("task", "required (one of: sample, train, likelihood, ...)");
    bool task_ok = false;
    for (const std::string& t : task_names()) task_ok = task_ok || t == cfg.task;
    if (!task_ok) fail("task", "unknown task '" + cfg.task + "'");

    cfg.seed = to_u64("seed", get("seed", "0"));
    cfg.out = get("out", "out");
    if (cfg.out.empty()) fail("out", "must be non-empty");
    long long points = to_int("points", get("points", "1000"));
    if (points < 2 || points > 10000000) fail("points", "must lie in [2, 1e7]");
    cfg.points = static_cast<int>(points);

    // sde block
    std::string kind_s = to_lower(get("sde.kind", "vp"));
    SdeKind kind;
    if (kind_s == "ve") kind = SdeKind::VE;
    else if (kind_s == "vp") kind = SdeKind::VP;
    else if (kind_s == "subvp") kind = SdeKind::SubVP;
    else fail("sde.kind", "expected ve, vp, or subvp, got '" + kind_s + "'");
    SdeParams params;
    if (has("sde.sigma_min")) params.sigma_min = to_double("sde.sigma_min", kv.at("sde.sigma_min"));
    if (has("sde.sigma_max")) params.sigma_max = to_double("sde.sigma_max", kv.at("sde.sigma_max"));
    if (has("sde.beta_min")) params.beta_min = to_double("sde.beta_min", kv.at("sde.beta_min"));
    if (has("sde.beta_max")) params.beta_max = to_double("sde.beta_max", kv.at("sde.beta_max"));
    if (has("sde.t_max")) params.t_max = to_double("sde.t_max", kv.at("sde.t_max"));
    if (has("sde.eps_train")) params.eps_train = to_double("sde.eps_train", kv.at("sde.eps_train"));
    if (has("sde.eps_sample"))
        params.eps_sample = to_double("sde.eps_sample", kv.at("sde.eps_sample"));
    try {
        cfg.sde = build_sde(kind, params);  // range violations name the field
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config: sde block: " + std::string(e.what()));
    }

    // data block
    long long dim = to_int("data.dim", get("data.dim", "2"));
    if (dim < 1 || dim > 64) fail("data.dim", "must lie in [1, 64]");
    long long comps = to_int("data.components", get("data.components", "1"));
    if (comps < 1 || comps > 32) fail("data.components", "must lie in [1, 32]");
    cfg.data.dim = static_cast<int>(dim);
    for (long long k = 0; k < comps; ++k) {
        std::string kw = "data.weight." + std::to_string(k);
        std::string km = "data.mean." + std::to_string(k);
        std::string kvr = "data.var." + std::to_string(k);
        cfg.data.weights.push_back(has(kw) ? to_double(kw, kv.at(kw)) : 1.0 / double(comps));
        Vec mean = has(km) ? to_double_list(km, kv.at(km)) : Vec(dim, 0.0);
        Vec var = has(kvr) ? to_double_list(kvr, kv.at(kvr)) : Vec(dim, 1.0);
        if (mean.size() != static_cast<std::size_t>(dim))
            fail(km, "expected " + std::to_string(dim) + " entries");
        if (var.size() != static_cast<std::size_t>(dim))
            fail(kvr, "expected " + std::to_string(dim) + " entries");
        cfg.data.means.push_back(std::move(mean));
        cfg.data.vars.push_back(std::move(var));
    }
    for (const auto& [k, v] : kv) {
        (void)v;
        for (const char* prefix : {"data.weight.", "data.mean.", "data.var."}) {
            std::string p(prefix);
            if (k.size() > p.size() && k.compare(0, p.size(), p) == 0) {
                long long idx = to_int(k, k.substr(p.size()));
                if (idx >= comps)
                    fail(k, "component index exceeds data.components=" + std::to_string(comps));
            }
        }
    }
    try {
        cfg.data.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config: data block: " + std::string(e.what()));
    }

    // score blocks
    cfg.score_source = to_lower(get("score.source", "oracle"));
    if (cfg.score_source != "oracle" && cfg.score_source != "checkpoint" &&
        cfg.score_source != "train")
        fail("score.source", "expected oracle, checkpoint, or train");
    cfg.score_checkpoint = get("score.checkpoint", "");
    if (cfg.score_source == "checkpoint") {
        if (cfg.score_checkpoint.empty()) fail("score.checkpoint", "required for checkpoint source");
        if (!std::filesystem::exists(cfg.score_checkpoint))
            fail("score.checkpoint", "file not found: " + cfg.score_checkpoint);
    }
    cfg.score_b_source = to_lower(get("score_b.source", "oracle"));
    if (cfg.score_b_source != "oracle" && cfg.score_b_source != "checkpoint")
        fail("score_b.source", "expected oracle or checkpoint");
    cfg.score_b_checkpoint = get("score_b.checkpoint", "");
    if (cfg.task == "identifiability" && cfg.score_b_source == "checkpoint") {
        if (cfg.score_b_checkpoint.empty())
            fail("score_b.checkpoint", "required for checkpoint source");
        if (!std::filesystem::exists(cfg.score_b_checkpoint))
            fail("score_b.checkpoint", "file not found: " + cfg.score_b_checkpoint);
    }

    // net block
    cfg.net_hidden = to_int_list("net.hidden", get("net.hidden", "64,64"));
    for (int w : cfg.net_hidden)
        if (w < 1) fail("net.hidden", "layer widths must be >= 1");
    long long emb = to_int("net.emb_width", get("net.emb_width", "32"));
    if (emb < 0 || emb % 2 != 0) fail("net.emb_width", "must be even and >= 0");
    cfg.net_emb_width = static_cast<int>(emb);
    cfg.net_fourier_scale = to_double("net.fourier_scale", get("net.fourier_scale", "16"));
    if (cfg.net_emb_width > 0 && !(cfg.net_fourier_scale > 0.0))
        fail("net.fourier_scale", "must be > 0");

    // train block
    std::string obj = to_lower(get("train.objective", "dsm"));
    try {
        cfg.train.objective = objective_from_name(obj);
    } catch (const std::invalid_argument&) {
        fail("train.objective", "expected dsm, smld, ddpm, or ssm, got '" + obj + "'");
    }
    long long iters = to_int("train.iterations", get("train.iterations", "20000"));
    if (iters < 1) fail("train.iterations", "must be >= 1");
    cfg.train.iterations = static_cast<int>(iters);
    long long tbatch = to_int("train.batch", get("train.batch", "128"));
    if (tbatch < 1) fail("train.batch", "must be >= 1");
    cfg.train.batch = static_cast<int>(tbatch);
    cfg.train.lr = to_double("train.lr", get("train.lr", "0.001"));
    if (!(cfg.train.lr >= 0.0)) fail("train.lr", "must be >= 0");
    long long log_every = to_int("train.log_every", get("train.log_every", "100"));
    if (log_every < 1) fail("train.log_every", "must be >= 1");
    cfg.train.log_every = static_cast<int>(log_every);
    cfg.train.ssm_h = to_double("train.ssm_h", get("train.ssm_h", "0.0001"));
    if (!(cfg.train.ssm_h >= 1e-5 && cfg.train.ssm_h <= 1e-2))
        fail("train.ssm_h", "must lie in [1e-5, 1e-2]");
    std::string probes_s = to_lower(get("train.ssm_probes", "rademacher"));
    if (probes_s == "rademacher") cfg.train.ssm_probes = ProbeDist::Rademacher;
    else if (probes_s == "gaussian") cfg.train.ssm_probes = ProbeDist::Gaussian;
    else fail("train.ssm_probes", "expected rademacher or gaussian");
    long long sched_n = to_int("train.schedule_n", get("train.schedule_n", "1000"));
    if (sched_n < 2) fail("train.schedule_n", "must be >= 2");
    cfg.train_schedule_n = static_cast<int>(sched_n);
    cfg.train.seed = cfg.seed;
    cfg.train.eps_train = cfg.sde.eps_train;

    // sampler block
    std::string pred = to_lower(get("sampler.predictor", "reverse_diffusion"));
    try {
        cfg.sampler.predictor = predictor_from_name(pred);
    } catch (const std::invalid_argument&) {
        fail("sampler.predictor",
             "expected euler_maruyama, reverse_diffusion, ancestral, prob_flow, or none");
    }
    std::string corr = to_lower(get("sampler.corrector", "none"));
    try {
        cfg.sampler.corrector = corrector_from_name(corr);
    } catch (const std::invalid_argument&) {
        fail("sampler.corrector", "expected langevin or none");
    }
    long long n_steps = to_int("sampler.n_steps", get("sampler.n_steps", "1000"));
    if (n_steps < 1) fail("sampler.n_steps", "must be >= 1");
    cfg.sampler.n_steps = static_cast<int>(n_steps);
    // Default to one corrector sweep when a corrector is requested, zero otherwise.
    std::string csteps_default = cfg.sampler.corrector == CorrectorKind::None ? "0" : "1";
    long long csteps =
        to_int("sampler.corrector_steps", get("sampler.corrector_steps", csteps_default));
    if (csteps < 0) fail("sampler.corrector_steps", "must be >= 0");
    cfg.sampler.corrector_steps = static_cast<int>(csteps);
    // Default signal-to-noise ratio per family (reverse-diffusion PC values).
    double snr_default = cfg.sde.kind == SdeKind::VE ? 0.16 : 0.01;
    cfg.sampler.snr = has("sampler.snr") ? to_double("sampler.snr", kv.at("sampler.snr"))
                                         : snr_default;
    if (!(cfg.sampler.snr > 0.0)) fail("sampler.snr", "must be > 0");
    cfg.sampler.denoise = to_bool("sampler.denoise", to_lower(get("sampler.denoise", "true")));
    std::uint64_t sbatch = to_u64("sampler.batch", get("sampler.batch", "1000"));
    if (sbatch < 1 || sbatch > 10000000) fail("sampler.batch", "must lie in [1, 1e7]");
    cfg.sampler.batch = static_cast<std::size_t>(sbatch);
    // Worker threads are a host concern, not part of the experiment: the
    // runner picks them at execution time (SDELAB_THREADS caps), and artifact
    // bytes are thread-count-invariant by construction.
    cfg.sampler.eps_sample = cfg.sde.eps_sample;
    cfg.sampler.seed = cfg.seed;

    // ode block
    cfg.ode.rtol = to_double("ode.rtol", get("ode.rtol", "1e-05"));
    cfg.ode.atol = to_double("ode.atol", get("ode.atol", "1e-05"));
    if (!(cfg.ode.rtol > 0.0)) fail("ode.rtol", "must be > 0");
    if (!(cfg.ode.atol > 0.0)) fail("ode.atol", "must be > 0");
    long long max_steps = to_int("ode.max_steps", get("ode.max_steps", "100000"));
    if (max_steps < 1) fail("ode.max_steps", "must be >= 1");
    cfg.ode.max_steps = max_steps;
    long long probes = to_int("ode.probes", get("ode.probes", "8"));
    if (probes < 1) fail("ode.probes", "must be >= 1");
    cfg.ode.probes = static_cast<int>(probes);
    std::string pd = to_lower(get("ode.probe_dist", "rademacher"));
    if (pd == "rademacher") cfg.ode.probe_dist = ProbeDist::Rademacher;
    else if (pd == "gaussian") cfg.ode.probe_dist = ProbeDist::Gaussian;
    else fail("ode.probe_dist", "expected rademacher or gaussian");
    cfg.ode_divergence = to_lower(get("ode.divergence", "estimate"));
    if (cfg.ode_divergence != "estimate" && cfg.ode_divergence != "exact")
        fail("ode.divergence", "expected estimate or exact");
    if (cfg.ode_divergence == "exact" && cfg.score_source != "oracle")
        fail("ode.divergence", "exact divergence requires score.source=oracle");

    // observation block
    std::string okind = to_lower(get("obs.kind", "class"));
    if (okind == "class") cfg.obs.kind = ObservationKind::Class;
    else if (okind == "mask") cfg.obs.kind = ObservationKind::Mask;
    else if (okind == "linear") cfg.obs.kind = ObservationKind::Linear;
    else fail("obs.kind", "expected class, mask, or linear");
    long long class_k = to_int("obs.class_k", get("obs.class_k", "0"));
    cfg.obs.class_k = static_cast<int>(class_k);
    cfg.obs.mask_indices = to_size_list("obs.indices", get("obs.indices", ""));
    cfg.obs.mask_values = to_double_list("obs.values", get("obs.values", ""));
    cfg.obs.A = to_matrix("obs.matrix", get("obs.matrix", ""));
    cfg.obs.y = to_double_list("obs.y", get("obs.y", ""));
    cfg.obs.noise_std = to_double("obs.noise_std", get("obs.noise_std", "0.1"));
    cfg.obs_basis = to_matrix("obs.basis", get("obs.basis", ""));
    if (cfg.task == "impute") {
        if (cfg.obs.kind != ObservationKind::Mask)
            fail("obs.kind", "the impute task requires obs.kind=mask");
        try {
            validate_mask(cfg.obs.mask_indices, cfg.obs.mask_values,
                          static_cast<std::size_t>(cfg.data.dim));
            if (!cfg.obs_basis.empty()) require_orthogonal(cfg.obs_basis);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config: obs block: " + std::string(e.what()));
        }
    }
    if (cfg.task == "condition") {
        if (cfg.obs.kind == ObservationKind::Mask)
            fail("obs.kind", "the condition task takes class or linear observations (use impute for masks)");
        try {
            validate_observation(cfg.obs, static_cast<std::size_t>(cfg.data.dim),
                                 cfg.data.n_components());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config: obs block: " + std::string(e.what()));
        }
    }

    // canonical view (sorted by std::map; every key present with resolved value)
    using cfgdetail::format_int_list;
    using cfgdetail::format_list;
    using cfgdetail::format_matrix;
    using cfgdetail::format_size_list;
    auto& c = cfg.canonical;
    c["task"] = cfg.task;
    c["seed"] = std::to_string(cfg.seed);
    c["out"] = cfg.out;
    c["points"] = std::to_string(cfg.points);
    c["sde.kind"] = kind_s;
    c["sde.sigma_min"] = format_double(cfg.sde.sigma_min);
    c["sde.sigma_max"] = format_double(cfg.sde.sigma_max);
    c["sde.beta_min"] = format_double(cfg.sde.beta_min);
    c["sde.beta_max"] = format_double(cfg.sde.beta_max);
    c["sde.t_max"] = format_double(cfg.sde.t_max);
    c["sde.eps_train"] = format_double(cfg.sde.eps_train);
    c["sde.eps_sample"] = format_double(cfg.sde.eps_sample);
    c["data.dim"] = std::to_string(cfg.data.dim);
    c["data.components"] = std::to_string(cfg.data.n_components());
    for (int k = 0; k < cfg.data.n_components(); ++k) {
        c["data.weight." + std::to_string(k)] = format_double(cfg.data.weights[k]);
        c["data.mean." + std::to_string(k)] = format_list(cfg.data.means[k]);
        c["data.var." + std::to_string(k)] = format_list(cfg.data.vars[k]);
    }
    c["score.source"] = cfg.score_source;
    c["score.checkpoint"] = cfg.score_checkpoint;
    c["score_b.source"] = cfg.score_b_source;
    c["score_b.checkpoint"] = cfg.score_b_checkpoint;
    c["net.hidden"] = format_int_list(cfg.net_hidden);
    c["net.emb_width"] = std::to_string(cfg.net_emb_width);
    c["net.fourier_scale"] = format_double(cfg.net_fourier_scale);
    c["train.objective"] = objective_name(cfg.train.objective);
    c["train.iterations"] = std::to_string(cfg.train.iterations);
    c["train.batch"] = std::to_string(cfg.train.batch);
    c["train.lr"] = format_double(cfg.train.lr);
    c["train.log_every"] = std::to_string(cfg.train.log_every);
    c["train.ssm_h"] = format_double(cfg.train.ssm_h);
    c["train.ssm_probes"] = cfg.train.ssm_probes == ProbeDist::Rademacher ? "rademacher" : "gaussian";
    c["train.schedule_n"] = std::to_string(cfg.train_schedule_n);
    c["sampler.predictor"] = predictor_name(cfg.sampler.predictor);
    c["sampler.corrector"] = corrector_name(cfg.sampler.corrector);
    c["sampler.n_steps"] = std::to_string(cfg.sampler.n_steps);
    c["sampler.corrector_steps"] = std::to_string(cfg.sampler.corrector_steps);
    c["sampler.snr"] = format_double(cfg.sampler.snr);
    c["sampler.denoise"] = cfg.sampler.denoise ? "true" : "false";
    c["sampler.batch"] = std::to_string(cfg.sampler.batch);
    c["ode.rtol"] = format_double(cfg.ode.rtol);
    c["ode.atol"] = format_double(cfg.ode.atol);
    c["ode.max_steps"] = std::to_string(cfg.ode.max_steps);
    c["ode.probes"] = std::to_string(cfg.ode.probes);
    c["ode.probe_dist"] = pd;
    c["ode.divergence"] = cfg.ode_divergence;
    c["obs.kind"] = okind;
    c["obs.class_k"] = std::to_string(cfg.obs.class_k);
    c["obs.indices"] = format_size_list(cfg.obs.mask_indices);
    c["obs.values"] = format_list(cfg.obs.mask_values);
    c["obs.matrix"] = format_matrix(cfg.obs.A);
    c["obs.y"] = format_list(cfg.obs.y);
    c["obs.noise_std"] = format_double(cfg.obs.noise_std);
    c["obs.basis"] = format_matrix(cfg.obs_basis);
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    return resolve_config(parse_key_values(text));
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    return parse_config_text(read_text_file(path));
}

}  // namespace sdelab
