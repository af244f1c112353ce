#include <catch_amalgamated.hpp>

#include <cmath>

#include "sdelab/gmm.hpp"
#include "sdelab/metrics.hpp"
#include "sdelab/ode.hpp"
#include "sdelab/rng.hpp"
#include "sdelab/samplers.hpp"
#include "sdelab/sde.hpp"

using namespace sdelab;
using Catch::Approx;

namespace {

GaussianMixture benchmark_2d() {
    return make_gmm({0.6, 0.4}, {{-2.0, 1.0}, {2.5, -1.5}}, {{0.8, 1.2}, {0.5, 0.9}});
}

// dense finite-difference Jacobian trace, used as the divergence oracle
double fd_jacobian_trace(const VectorField& field, const Vec& x, double t) {
    double h = 1e-5 * (1.0 + norm_inf(x));
    double tr = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        tr += (field(xp, t)[j] - field(xm, t)[j]) / (2.0 * h);
    }
    return tr;
}

}  // namespace

TEST_CASE("rk45 integrates known solutions") {
    OdeConfig cfg;

    auto decay = [](const Vec& x, double) { return Vec{-x[0]}; };
    OdeResult r = rk45_integrate(decay, {1.0}, 0.0, 1.0, cfg);
    CHECK(r.x[0] == Approx(std::exp(-1.0)).margin(1e-6));
    CHECK(r.nfe > 0);
    CHECK(r.nfe < 200);

    // reverse-time integration undoes it
    OdeResult back = rk45_integrate(decay, r.x, 1.0, 0.0, cfg);
    CHECK(back.x[0] == Approx(1.0).margin(1e-6));

    // fifth-order scheme is exact on a quartic solution
    auto cubic = [](const Vec&, double t) { return Vec{t * t * t}; };
    CHECK(rk45_integrate(cubic, {0.0}, 0.0, 2.0, cfg).x[0] == Approx(4.0).margin(1e-12));

    // harmonic oscillator returns home after a full period
    auto circle = [](const Vec& x, double) { return Vec{x[1], -x[0]}; };
    OdeResult orbit = rk45_integrate(circle, {1.0, 0.0}, 0.0, 2.0 * 3.14159265358979323846, cfg);
    CHECK(orbit.x[0] == Approx(1.0).margin(5e-4));
    CHECK(orbit.x[1] == Approx(0.0).margin(5e-4));
}

TEST_CASE("rk45 edge cases") {
    OdeConfig cfg;
    auto zero = [](const Vec& x, double) { return Vec(x.size(), 0.0); };
    OdeResult r = rk45_integrate(zero, {3.0, -1.0}, 0.0, 5.0, cfg);
    CHECK(r.x[0] == 3.0);
    CHECK(r.x[1] == -1.0);
    // conservative initial guess plus the 5x growth clamp bounds the cost
    CHECK(r.nfe <= 100);

    auto decay = [](const Vec& x, double) { return Vec{-x[0]}; };
    CHECK_THROWS_AS(rk45_integrate(decay, {1.0}, 0.5, 0.5, cfg), std::invalid_argument);

    OdeConfig tiny = cfg;
    tiny.max_steps = 2;
    tiny.rtol = tiny.atol = 1e-12;
    auto stiffish = [](const Vec& x, double) { return Vec{-40.0 * x[0]}; };
    CHECK_THROWS_AS(rk45_integrate(stiffish, {1.0}, 0.0, 10.0, tiny), std::runtime_error);

    OdeConfig bad = cfg;
    bad.rtol = 0.0;
    CHECK_THROWS_AS(rk45_integrate(decay, {1.0}, 0.0, 1.0, bad), std::invalid_argument);
}

TEST_CASE("flow right-hand side") {
    // standard-normal data under VP is the stationary point: rhs vanishes
    GaussianMixture std_normal = make_gmm({1.0}, {{0.0, 0.0}}, {{1.0, 1.0}});
    SdeSpec vp = build_sde(SdeKind::VP);
    ScoreFunction score = oracle_score(std_normal, vp);
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
        Vec r = ode_rhs({1.7, -0.4}, t, score, vp);
        CHECK(std::fabs(r[0]) < 1e-12);
        CHECK(std::fabs(r[1]) < 1e-12);
    }

    // VE has zero drift: rhs is the pure score term
    GaussianMixture g = bimodal_benchmark();
    SdeSpec ve = build_sde(SdeKind::VE);
    ScoreFunction sve = oracle_score(g, ve);
    Vec x{1.1};
    double t = 0.42;
    double gt = diffusion(ve, t);
    Vec expect = scaled(sve(x, t), -0.5 * gt * gt);
    CHECK(ode_rhs(x, t, sve, ve)[0] == Approx(expect[0]));

    // against a finite-difference log-density gradient
    PerturbedMixture pm = perturb_gmm(g, ve, t);
    double h = 1e-6;
    double fd = (log_density(pm, {x[0] + h}) - log_density(pm, {x[0] - h})) / (2.0 * h);
    CHECK(ode_rhs(x, t, sve, ve)[0] == Approx(-0.5 * gt * gt * fd).epsilon(1e-5));
}

TEST_CASE("loosening rtol trades accuracy for evaluations") {
    GaussianMixture g = benchmark_2d();
    SdeSpec vp = build_sde(SdeKind::VP);
    ScoreFunction score = oracle_score(g, vp);

    Vec x{-3.0, 0.75};
    OdeConfig tight_cfg;  // rtol = atol = 1e-5
    OdeResult tight = rk45_integrate(flow_rhs(score, vp), x, vp.eps_train, vp.t_max, tight_cfg);
    OdeConfig loose_cfg;
    loose_cfg.rtol = 1e-2;
    OdeResult loose = rk45_integrate(flow_rhs(score, vp), x, vp.eps_train, vp.t_max, loose_cfg);
    CHECK(2 * loose.nfe <= tight.nfe);
    CHECK(norm2(sub(loose.x, tight.x)) < 1e-2);

    // evaluation count never rises as both tolerances loosen together
    Vec y{-1.5, 0.7};
    long long prev = 1LL << 40;
    for (double tol : {1e-5, 1e-4, 1e-3, 1e-2}) {
        OdeConfig cfg;
        cfg.rtol = cfg.atol = tol;
        OdeResult r = rk45_integrate(flow_rhs(score, vp), y, vp.eps_train, vp.t_max, cfg);
        CHECK(r.nfe <= prev);
        prev = r.nfe;
    }
}

TEST_CASE("encode and decode invert each other") {
    GaussianMixture g = benchmark_2d();
    SdeSpec vp = build_sde(SdeKind::VP);
    ScoreFunction score = oracle_score(g, vp);
    RngStream rng(17, "roundtrip");
    for (int i = 0; i < 5; ++i) {
        Vec x = g.sample(rng);
        Vec z = encode(x, score, vp);
        Vec back = decode(z, score, vp);
        CHECK(norm2(sub(back, x)) < 1e-3);
    }
}

TEST_CASE("stationary encode is the identity") {
    GaussianMixture std_normal = make_gmm({1.0}, {{0.0, 0.0}}, {{1.0, 1.0}});
    SdeSpec vp = build_sde(SdeKind::VP);
    ScoreFunction score = oracle_score(std_normal, vp);
    Vec x{0.9, -1.4};
    Vec z = encode(x, score, vp);
    CHECK(std::fabs(z[0] - x[0]) < 1e-12);
    CHECK(std::fabs(z[1] - x[1]) < 1e-12);
}

TEST_CASE("one-dimensional encodings preserve order") {
    GaussianMixture g = bimodal_benchmark();
    SdeSpec ve = build_sde(SdeKind::VE);
    ScoreFunction score = oracle_score(g, ve);
    double prev = -1e300;
    for (double x = -5.0; x <= 5.01; x += 1.25) {
        double z = encode({x}, score, ve)[0];
        CHECK(z > prev);
        prev = z;
    }
}

TEST_CASE("divergence estimator on linear fields") {
    OdeConfig cfg;
    cfg.probes = 1;
    RngStream rng(23, "divergence");

    // diagonal Jacobian: every Rademacher probe is exact
    VectorField diag = [](const Vec& x, double) { return Vec{1.3 * x[0], -0.7 * x[1]}; };
    for (int rep = 0; rep < 10; ++rep)
        CHECK(divergence_estimate(diag, {0.4, -1.1, }, 0.0, cfg, rng) == Approx(0.6).margin(1e-9));

    // full matrix: unbiased for the trace, with the known probe variance
    std::vector<Vec> A = {{1.0, 2.0, -0.5}, {0.3, -1.5, 0.8}, {-0.6, 0.4, 2.2}};
    VectorField lin = [&](const Vec& x, double) {
        Vec y(3, 0.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) y[i] += A[i][j] * x[j];
        return y;
    };
    double tr = A[0][0] + A[1][1] + A[2][2];
    double probe_var = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) {
                double m = 0.5 * (A[i][j] + A[j][i]);
                probe_var += 2.0 * m * m;
            }
    OdeConfig big = cfg;
    big.probes = 10000;
    double est = divergence_estimate(lin, {0.2, 0.5, -0.3}, 0.0, big, rng);
    CHECK(est == Approx(tr).margin(3.0 * std::sqrt(probe_var / big.probes)));

    OdeConfig gauss = big;
    gauss.probe_dist = ProbeDist::Gaussian;
    CHECK(divergence_estimate(lin, {0.2, 0.5, -0.3}, 0.0, gauss, rng) == Approx(tr).margin(0.5));
}

TEST_CASE("estimator error shrinks as probe count grows") {
    std::vector<Vec> A = {{0.5, 1.5, -1.0}, {-0.8, 1.2, 0.6}, {0.9, -0.4, -0.7}};
    VectorField lin = [&](const Vec& x, double) {
        Vec y(3, 0.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) y[i] += A[i][j] * x[j];
        return y;
    };
    Vec x{0.1, -0.2, 0.4};
    auto sample_sd = [&](int k, int reps) {
        OdeConfig cfg;
        cfg.probes = k;
        double s = 0.0, s2 = 0.0;
        for (int r = 0; r < reps; ++r) {
            RngStream rng(900 + r, "kscale", static_cast<std::uint64_t>(k));
            double e = divergence_estimate(lin, x, 0.0, cfg, rng);
            s += e;
            s2 += e * e;
        }
        return std::sqrt(s2 / reps - (s / reps) * (s / reps));
    };
    double s16 = sample_sd(16, 100);
    double s256 = sample_sd(256, 100);
    double s4096 = sample_sd(4096, 100);
    // each 16x probe increase should shrink the error ~4x, within factor 1.5
    CHECK(s16 / s256 > 4.0 / 1.5);
    CHECK(s16 / s256 < 4.0 * 1.5);
    CHECK(s256 / s4096 > 4.0 / 1.5);
    CHECK(s256 / s4096 < 4.0 * 1.5);
}

TEST_CASE("divergence of the oracle flow field") {
    GaussianMixture g = benchmark_2d();
    SdeSpec ve = build_sde(SdeKind::VE);
    ScoreFunction score = oracle_score(g, ve);
    VectorField field = [&](const Vec& x, double t) { return ode_rhs(x, t, score, ve); };
    Vec x{-2.0, 1.0};  // at a mode
    double t = 0.5;

    double dense = fd_jacobian_trace(field, x, t);
    double gt = diffusion(ve, t);
    double exact = -0.5 * gt * gt * score_divergence(perturb_gmm(g, ve, t), x);
    CHECK(dense == Approx(exact).epsilon(1e-6));

    OdeConfig cfg;
    cfg.probes = 4096;
    RngStream rng(31, "flow-div");
    double est = divergence_estimate(field, x, t, cfg, rng);
    CHECK(est == Approx(dense).epsilon(1e-3));
}

TEST_CASE("likelihood of the stationary gaussian") {
    GaussianMixture std_normal = make_gmm({1.0}, {{0.0, 0.0}}, {{1.0, 1.0}});
    SdeSpec vp = build_sde(SdeKind::VP);
    ScoreFunction score = oracle_score(std_normal, vp);
    OdeConfig cfg;
    RngStream rng(41, "ll");
    LikelihoodResult r = log_likelihood({0.0, 0.0}, score, vp, cfg, rng);
    CHECK(-r.log_prob == Approx(std::log(6.283185307179586)).margin(1e-3));
    CHECK(r.log_prob == r.prior_term + r.divergence_integral);
    CHECK(r.bits_per_dim == Approx(-r.log_prob / (2.0 * std::log(2.0))));
    CHECK(r.nfe > 0);
}

TEST_CASE("likelihood matches closed forms on a grid") {
    SdeSpec vp = build_sde(SdeKind::VP);
    OdeConfig cfg;

    // single zero-mean gaussian, exact-divergence path and probe path
    GaussianMixture g1 = make_gmm({1.0}, {{0.0}}, {{0.64}});
    ScoreFunction s1 = oracle_score(g1, vp);
    auto div1 = [&](const Vec& x, double t) { return score_divergence(perturb_gmm(g1, vp, t), x); };
    double worst = 0.0, worst_probe = 0.0;
    for (int i = 0; i <= 20; ++i) {
        double x = -2.0 + 0.2 * i;
        double closed = -0.5 * std::log(6.283185307179586 * 0.64) - x * x / (2.0 * 0.64);
        RngStream rng(50 + i, "ll-grid");
        LikelihoodResult r = log_likelihood({x}, s1, vp, cfg, rng, div1);
        worst = std::max(worst, std::fabs(r.log_prob - closed));
        LikelihoodResult rp = log_likelihood({x}, s1, vp, cfg, rng);
        worst_probe = std::max(worst_probe, std::fabs(rp.log_prob - closed));
    }
    CHECK(worst < 1e-3);
    CHECK(worst_probe < 1e-3);  // 1D Jacobians make Rademacher probes exact

    // two-component mixture against the analytic density near t=0
    GaussianMixture g2 = bimodal_benchmark();
    ScoreFunction s2 = oracle_score(g2, vp);
    auto div2 = [&](const Vec& x, double t) { return score_divergence(perturb_gmm(g2, vp, t), x); };
    PerturbedMixture ref = perturb_gmm(g2, vp, vp.eps_train);
    double worst2 = 0.0;
    for (int i = 0; i <= 20; ++i) {
        double x = -4.5 + 0.45 * i;
        RngStream rng(80 + i, "ll-gmm");
        LikelihoodResult r = log_likelihood({x}, s2, vp, cfg, rng, div2);
        worst2 = std::max(worst2, std::fabs(r.log_prob - log_density(ref, {x})));
    }
    CHECK(worst2 < 2e-3);
}

TEST_CASE("likelihood is insensitive to tolerance tightening") {
    SdeSpec vp = build_sde(SdeKind::VP);
    GaussianMixture g = bimodal_benchmark();
    ScoreFunction s = oracle_score(g, vp);
    auto dv = [&](const Vec& x, double t) { return score_divergence(perturb_gmm(g, vp, t), x); };
    OdeConfig loose, tight;
    tight.rtol = tight.atol = 1e-6;
    RngStream rng(61, "ll-tol");
    for (double x : {-3.0, -0.5, 1.2, 3.4}) {
        LikelihoodResult a = log_likelihood({x}, s, vp, loose, rng, dv);
        LikelihoodResult b = log_likelihood({x}, s, vp, tight, rng, dv);
        CHECK(std::fabs(a.log_prob - b.log_prob) < 1e-3);
        CHECK(b.nfe >= a.nfe);
    }

    // evaluation count is non-increasing as both tolerances loosen
    long long prev = 1LL << 40;
    for (double tol : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
        OdeConfig cfg;
        cfg.rtol = cfg.atol = tol;
        RngStream r2(62, "ll-ladder");
        LikelihoodResult r = log_likelihood({1.2}, s, vp, cfg, r2, dv);
        CHECK(r.nfe <= prev);
        prev = r.nfe;
    }
}

TEST_CASE("likelihood under the exploding-variance family") {
    SdeSpec ve = build_sde(SdeKind::VE);
    GaussianMixture g = make_gmm({1.0}, {{0.0}}, {{4.0}});
    ScoreFunction s = oracle_score(g, ve);
    auto dv = [&](const Vec& x, double t) { return score_divergence(perturb_gmm(g, ve, t), x); };
    OdeConfig cfg;
    RngStream rng(71, "ll-ve");
    for (double x : {-2.0, 0.0, 1.5}) {
        double closed = -0.5 * std::log(6.283185307179586 * 4.0) - x * x / 8.0;
        LikelihoodResult r = log_likelihood({x}, s, ve, cfg, rng, dv);
        CHECK(r.log_prob == Approx(closed).margin(5e-3));
    }
}

TEST_CASE("latent space operations") {
    Vec z1{2.0, 0.0}, z2{0.0, 2.0};
    Vec a = slerp(z1, z2, 0.0);
    CHECK(a[0] == Approx(2.0));
    CHECK(a[1] == Approx(0.0).margin(1e-15));
    Vec b = slerp(z1, z2, 1.0);
    CHECK(b[1] == Approx(2.0));
    Vec mid = slerp(z1, z2, 0.5);
    CHECK(norm2(mid) == Approx(2.0).epsilon(1e-12));  // equal-norm inputs stay on the sphere
    CHECK_THROWS_AS(slerp({0.0, 0.0}, z2, 0.5), std::invalid_argument);

    Vec z{3.0, -4.0};
    CHECK(temperature_scale(z, 1.0) == z);
    CHECK(norm2(temperature_scale(z, 0.4)) == Approx(2.0));
}

TEST_CASE("identical score functions give identical encodings") {
    GaussianMixture g = benchmark_2d();
    SdeSpec vp = build_sde(SdeKind::VP);
    ScoreFunction score = oracle_score(g, vp);
    RngStream rng(81, "ident");
    std::vector<Vec> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(g.sample(rng));
    IdentifiabilityReport rep = identifiability_report(score, score, xs, vp);
    CHECK(rep.max_abs_diff == 0.0);
    for (double c : rep.correlation) CHECK(c == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("deterministic flow samples match stochastic ones in distribution") {
    GaussianMixture g = bimodal_benchmark();
    SdeSpec ve = build_sde(SdeKind::VE);
    ScoreFunction score = oracle_score(g, ve);

    const std::size_t n = 4000;
    RngStream prior_rng(91, "flow-prior");
    std::vector<double> flow(n);
    OdeConfig cfg;
    for (std::size_t i = 0; i < n; ++i) {
        Vec z = prior_sample(ve, 1, prior_rng);
        flow[i] = decode(z, score, ve, cfg)[0];
    }

    PcConfig pc;
    pc.predictor = PredictorKind::ReverseDiffusion;
    pc.corrector = CorrectorKind::Langevin;
    pc.n_steps = 1000;
    pc.corrector_steps = 1;
    pc.snr = 0.16;
    pc.batch = n;
    pc.seed = 92;
    SampleBatch sde_samples = pc_sample(ve, score, pc);
    std::vector<double> sde1(n);
    for (std::size_t i = 0; i < n; ++i) sde1[i] = sde_samples.samples[i][0];

    KsResult ks = ks_test_2sample(flow, sde1);
    CHECK(ks.statistic < ks_2sample_critical(0.01, n, n));
}
