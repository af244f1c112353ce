#pragma once

// Controllable generation: conditioning a reverse-time sampler on class
// labels, observed coordinates (imputation), observed coordinates in an
// orthogonally transformed basis, and noisy linear measurements. Every
// conditioner is expressed as a ScoreFunction so the samplers consume it
// unchanged.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdelab/gmm.hpp"
#include "sdelab/rng.hpp"
#include "sdelab/samplers.hpp"
#include "sdelab/score_function.hpp"
#include "sdelab/sde.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

// ---------------------------------------------------------------------------
// Observations.

enum class ObservationKind { Class, Mask, Linear };

struct Observation {
    ObservationKind kind = ObservationKind::Class;
    // Class
    int class_k = 0;
    // Mask: observed coordinate indices and their values
    std::vector<std::size_t> mask_indices;
    Vec mask_values;
    // Linear: y = A x + noise, A given as m rows of length d
    std::vector<Vec> A;
    Vec y;
    double noise_std = 0.0;
};

inline void validate_mask(const std::vector<std::size_t>& indices, const Vec& values,
                          std::size_t dim) {
    if (indices.empty()) throw std::invalid_argument("mask: no observed coordinates");
    if (indices.size() >= dim) throw std::invalid_argument("mask: must leave unknown coordinates");
    if (indices.size() != values.size()) throw std::invalid_argument("mask: index/value mismatch");
    std::vector<bool> seen(dim, false);
    for (std::size_t i : indices) {
        if (i >= dim) throw std::invalid_argument("mask: index out of range");
        if (seen[i]) throw std::invalid_argument("mask: duplicate index");
        seen[i] = true;
    }
}

// Gram-determinant full-row-rank check (m is small in every use here).
inline void validate_linear(const std::vector<Vec>& A, const Vec& y) {
    if (A.empty()) throw std::invalid_argument("linear observation: empty matrix");
    std::size_t d = A[0].size();
    for (const Vec& row : A)
        if (row.size() != d) throw std::invalid_argument("linear observation: ragged matrix");
    if (A.size() > d) throw std::invalid_argument("linear observation: more rows than columns");
    if (y.size() != A.size()) throw std::invalid_argument("linear observation: y size mismatch");

    std::size_t m = A.size();
    std::vector<std::vector<double>> gram(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) gram[i][j] = dot(A[i], A[j]);
    // Cholesky; failure means rank deficiency
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = gram[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= gram[i][k] * gram[j][k];
            if (i == j) {
                if (sum <= 1e-12 * std::max(1.0, gram[i][i]))
                    throw std::invalid_argument("linear observation: matrix is rank deficient");
                gram[i][i] = std::sqrt(sum);
            } else {
                gram[i][j] = sum / gram[j][j];
            }
        }
    }
}

inline void validate_observation(const Observation& obs, std::size_t dim, int n_components) {
    switch (obs.kind) {
        case ObservationKind::Class:
            if (obs.class_k < 0 || obs.class_k >= n_components)
                throw std::invalid_argument("observation: class label out of range");
            return;
        case ObservationKind::Mask:
            validate_mask(obs.mask_indices, obs.mask_values, dim);
            return;
        case ObservationKind::Linear:
            validate_linear(obs.A, obs.y);
            if (obs.A[0].size() != dim)
                throw std::invalid_argument("observation: matrix width must match dimension");
            if (!(obs.noise_std >= 0.0))
                throw std::invalid_argument("observation: noise_std must be >= 0");
            return;
    }
    throw std::logic_error("unreachable observation kind");
}

// ---------------------------------------------------------------------------
// Score assembly.

using ObservationGradient = std::function<Vec(const Vec&, double)>;

// Sum of the unconditional score and the observation log-likelihood
// gradient; conditioning on several observations nests additively.
inline ScoreFunction conditional_score(const ScoreFunction& base,
                                       const ObservationGradient& obs_grad) {
    if (!obs_grad) throw std::invalid_argument("conditional_score: missing observation gradient");
    ScoreFunction s;
    s.dim = base.dim;
    s.source = base.source + "+observation";
    if (base.eval) {
        s.eval = [base, obs_grad](const Vec& x, double t) {
            return add(base.eval(x, t), obs_grad(x, t));
        };
    }
    if (base.eval_rng) {
        s.eval_rng = [base, obs_grad](const Vec& x, double t, RngStream& rng) {
            return add(base.eval_rng(x, t, rng), obs_grad(x, t));
        };
    }
    return s;
}

// ---------------------------------------------------------------------------
// Class-conditional sampling: the analytic component posterior plays the
// role of a time-dependent classifier, so the conditional score is exact.

inline SampleBatch class_conditional_sample(const GaussianMixture& g, const SdeSpec& sde, int k,
                                            const PcConfig& cfg) {
    if (k < 0 || k >= g.n_components())
        throw std::invalid_argument("class_conditional_sample: component index out of range");
    return pc_sample(sde, oracle_class_score(g, sde, k), cfg);
}

// ---------------------------------------------------------------------------
// Imputation. The known coordinates have a tractable forward law
// (the perturbation kernel acts coordinatewise), so at every committed
// state at time t they are overwritten with a fresh draw from
// Normal(m(t) y, s(t)^2 I) and the unknown coordinates advance under the
// full joint score of the composite vector.

inline StateHook make_impute_hook(const SdeSpec& sde, std::vector<std::size_t> indices,
                                  Vec values) {
    return [sde, indices = std::move(indices), values = std::move(values)](
               Vec& x, double t, std::size_t, RngStream& rng) {
        KernelPoint kp = perturbation_kernel(sde, t);
        for (std::size_t j = 0; j < indices.size(); ++j)
            x[indices[j]] = kp.mean_coeff * values[j] + kp.std * rng.gaussian();
    };
}

struct ImputeResult {
    SampleBatch batch;                  // samples hold only the unknown coordinates
    std::vector<std::size_t> known;     // observed indices (mask)
    Vec known_values;                   // observed values, for echoing
    std::vector<std::size_t> unknown;   // indices the samples correspond to
};

inline ImputeResult impute_with_score(const ScoreFunction& score, const SdeSpec& sde,
                                      const std::vector<std::size_t>& indices, const Vec& values,
                                      const PcConfig& cfg) {
    validate_mask(indices, values, static_cast<std::size_t>(score.dim));
    SampleBatch full = pc_sample(sde, score, cfg, make_impute_hook(sde, indices, values));

    ImputeResult res;
    res.known = indices;
    res.known_values = values;
    std::vector<bool> is_known(static_cast<std::size_t>(score.dim), false);
    for (std::size_t i : indices) is_known[i] = true;
    for (std::size_t i = 0; i < static_cast<std::size_t>(score.dim); ++i)
        if (!is_known[i]) res.unknown.push_back(i);

    res.batch = full;
    res.batch.samples.clear();
    res.batch.samples.reserve(full.samples.size());
    for (const Vec& x : full.samples) {
        Vec u(res.unknown.size());
        for (std::size_t j = 0; j < res.unknown.size(); ++j) u[j] = x[res.unknown[j]];
        res.batch.samples.push_back(std::move(u));
    }
    return res;
}

inline ImputeResult impute(const GaussianMixture& g, const SdeSpec& sde,
                           const std::vector<std::size_t>& indices, const Vec& values,
                           const PcConfig& cfg) {
    return impute_with_score(oracle_score(g, sde), sde, indices, values, cfg);
}

// ---------------------------------------------------------------------------
// Imputation in an orthogonally transformed basis. Isotropic noise is
// invariant under orthogonal maps, so the transformed process obeys the
// same forward SDE and masking in u = C' x space is again tractable.

inline Vec mat_vec(const std::vector<Vec>& C, const Vec& v) {
    Vec out(C.size(), 0.0);
    for (std::size_t i = 0; i < C.size(); ++i) out[i] = dot(C[i], v);
    return out;
}

inline Vec mat_tvec(const std::vector<Vec>& C, const Vec& v) {
    std::size_t d = C.empty() ? 0 : C[0].size();
    Vec out(d, 0.0);
    for (std::size_t i = 0; i < C.size(); ++i) axpy(v[i], C[i], out);
    return out;
}

inline void require_orthogonal(const std::vector<Vec>& C, double tol = 1e-10) {
    std::size_t d = C.size();
    for (const Vec& row : C)
        if (row.size() != d) throw std::invalid_argument("orthogonal transform must be square");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            double want = i == j ? 1.0 : 0.0;
            if (std::fabs(dot(C[i], C[j]) - want) > tol)
                throw std::invalid_argument("transform is not orthogonal");
        }
}

// Score of u = C' x: chain rule through x = C u.
inline ScoreFunction transformed_score(const ScoreFunction& base, const std::vector<Vec>& C) {
    ScoreFunction s;
    s.dim = base.dim;
    s.source = base.source + "+rotation";
    if (base.eval) {
        s.eval = [base, C](const Vec& u, double t) { return mat_tvec(C, base.eval(mat_vec(C, u), t)); };
    }
    if (base.eval_rng) {
        s.eval_rng = [base, C](const Vec& u, double t, RngStream& rng) {
            return mat_tvec(C, base.eval_rng(mat_vec(C, u), t, rng));
        };
    }
    return s;
}

// Observes u-coordinates `indices` at `values`, imputes the rest in
// u-space, and returns full samples mapped back to x-space.
inline SampleBatch decoupled_impute(const ScoreFunction& score, const SdeSpec& sde,
                                    const std::vector<Vec>& C,
                                    const std::vector<std::size_t>& indices, const Vec& values,
                                    const PcConfig& cfg) {
    require_orthogonal(C);
    if (static_cast<std::size_t>(score.dim) != C.size())
        throw std::invalid_argument("decoupled_impute: transform/score dimension mismatch");
    ImputeResult u_res = impute_with_score(transformed_score(score, C), sde, indices, values, cfg);

    SampleBatch out = u_res.batch;
    out.samples.clear();
    out.samples.reserve(u_res.batch.samples.size());
    Vec u(C.size(), 0.0);
    for (std::size_t j = 0; j < indices.size(); ++j) u[indices[j]] = values[j];
    for (const Vec& partial : u_res.batch.samples) {
        for (std::size_t j = 0; j < u_res.unknown.size(); ++j) u[u_res.unknown[j]] = partial[j];
        out.samples.push_back(mat_vec(C, u));
    }
    return out;
}

inline SampleBatch decoupled_impute(const GaussianMixture& g, const SdeSpec& sde,
                                    const std::vector<Vec>& C,
                                    const std::vector<std::size_t>& indices, const Vec& values,
                                    const PcConfig& cfg) {
    return decoupled_impute(oracle_score(g, sde), sde, C, indices, values, cfg);
}

// Exact orthonormal basis whose entries round (3 decimals) to the
// luminance-separating matrix used for the decoupling demonstration:
// first row the grayscale direction, the others its orthogonal complement.
inline std::vector<Vec> colorization_basis() {
    double a = 1.0 / std::sqrt(3.0);
    double b = std::sqrt(2.0 / 3.0);
    double c = 1.0 / std::sqrt(6.0);
    double d = 1.0 / std::sqrt(2.0);
    return {Vec{a, -b, 0.0}, Vec{a, c, d}, Vec{a, c, -d}};
}

// ---------------------------------------------------------------------------
// Noisy linear measurements y = A x0 + Normal(0, noise_std^2 I). The
// measurement's forward perturbation is sampled per evaluation:
// y_hat ~ Normal(m(t) y, s(t)^2 I), and the likelihood gradient uses the
// widened noise noise_std^2 + s(t)^2. Draws come from the caller's stream,
// so chains stay independent and thread-invariant.

inline ScoreFunction linear_inverse_score(const ScoreFunction& base, const SdeSpec& sde,
                                          const std::vector<Vec>& A, const Vec& y,
                                          double noise_std) {
    validate_linear(A, y);
    if (static_cast<std::size_t>(base.dim) != A[0].size())
        throw std::invalid_argument("linear_inverse_score: dimension mismatch");
    if (!(noise_std >= 0.0))
        throw std::invalid_argument("linear_inverse_score: noise_std must be >= 0");

    ScoreFunction s;
    s.dim = base.dim;
    s.source = base.source + "+linear-inverse";
    SdeSpec sde_copy = sde;  // keep the closure self-contained
    s.eval_rng = [base, sde_copy, A, y, noise_std](const Vec& x, double t, RngStream& rng) {
        KernelPoint kp = perturbation_kernel(sde_copy, t);
        double denom = noise_std * noise_std + kp.std * kp.std;
        Vec grad(x.size(), 0.0);
        for (std::size_t i = 0; i < A.size(); ++i) {
            double y_hat = kp.mean_coeff * y[i] + kp.std * rng.gaussian();
            double r = (y_hat - dot(A[i], x)) / denom;
            axpy(r, A[i], grad);
        }
        return add(base(x, t, rng), grad);
    };
    return s;
}

}  // namespace sdelab
