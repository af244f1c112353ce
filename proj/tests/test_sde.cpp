#include <catch_amalgamated.hpp>

#include <cmath>

#include "sdelab/sde.hpp"

using namespace sdelab;
using Catch::Approx;

TEST_CASE("build_sde defaults and validation") {
    SdeSpec ve = build_sde(SdeKind::VE);
    CHECK(ve.sigma_min == 0.01);
    CHECK(ve.sigma_max == 50.0);
    CHECK(ve.eps_sample == 1e-5);
    CHECK(ve.eps_train == 1e-5);

    SdeSpec vp = build_sde(SdeKind::VP);
    CHECK(vp.beta_min == 0.1);
    CHECK(vp.beta_max == 20.0);
    CHECK(vp.eps_sample == 1e-3);
    CHECK(vp.t_max == 1.0);

    SdeParams bad;
    bad.sigma_max = 0.005;  // below sigma_min
    CHECK_THROWS_AS(build_sde(SdeKind::VE, bad), std::invalid_argument);
    SdeParams bad2;
    bad2.beta_min = -1.0;
    CHECK_THROWS_AS(build_sde(SdeKind::VP, bad2), std::invalid_argument);
    SdeParams inverted;
    inverted.beta_min = 5.0;
    inverted.beta_max = 1.0;
    CHECK_THROWS_AS(build_sde(SdeKind::VP, inverted), std::invalid_argument);
    SdeParams bad3;
    bad3.eps_train = 2.0;
    CHECK_THROWS_AS(build_sde(SdeKind::VP, bad3), std::invalid_argument);
}

TEST_CASE("drift and diffusion closed forms") {
    SdeSpec ve = build_sde(SdeKind::VE);
    SdeSpec vp = build_sde(SdeKind::VP);
    SdeSpec sub = build_sde(SdeKind::SubVP);

    Vec x{1.0, 0.0};
    CHECK(drift(ve, x, 0.3) == Vec{0.0, 0.0});
    Vec dv = drift(vp, x, 0.0);
    CHECK(dv[0] == Approx(-0.05).margin(1e-15));  // -beta_min/2 * x
    CHECK(dv[1] == 0.0);

    CHECK(diffusion(vp, 1.0) == Approx(4.47213595499958).epsilon(1e-14));
    CHECK(diffusion(ve, 1.0) == Approx(206.363674024963).epsilon(1e-12));

    // SubVP diffusion vanishes at t=0 and is below VP everywhere
    CHECK(diffusion(sub, 0.0) == Approx(0.0).margin(1e-12));
    for (double t : {0.1, 0.3, 0.5, 0.9, 1.0}) CHECK(diffusion(sub, t) < diffusion(vp, t));
}

TEST_CASE("perturbation kernel values") {
    SdeSpec ve = build_sde(SdeKind::VE);
    SdeSpec vp = build_sde(SdeKind::VP);
    SdeSpec sub = build_sde(SdeKind::SubVP);

    KernelPoint k0 = perturbation_kernel(vp, 0.0);
    CHECK(k0.mean_coeff == 1.0);
    CHECK(k0.std == 0.0);
    KernelPoint ks0 = perturbation_kernel(sub, 0.0);
    CHECK(ks0.mean_coeff == 1.0);
    CHECK(ks0.std == 0.0);

    KernelPoint k1 = perturbation_kernel(vp, 1.0);
    CHECK(k1.mean_coeff == Approx(0.006571586494929619).epsilon(1e-13));
    CHECK(k1.std == Approx(0.9999784068923386).epsilon(1e-13));

    KernelPoint s1 = perturbation_kernel(sub, 1.0);
    CHECK(s1.std == Approx(0.9999568142509396).epsilon(1e-13));
    CHECK(s1.std < k1.std);

    CHECK(perturbation_kernel(ve, 0.5).std == Approx(0.7071067811865476).epsilon(1e-13));
    CHECK(perturbation_kernel(ve, 1.0).std == Approx(50.0).epsilon(1e-13));

    // VE queries below eps_train clamp to eps_train
    KernelPoint klo = perturbation_kernel(ve, 0.0);
    KernelPoint keps = perturbation_kernel(ve, ve.eps_train);
    CHECK(klo.std == keps.std);
    CHECK(klo.std > 0.0);

    // monotone noise growth
    for (const SdeSpec& s : {ve, vp, sub}) {
        double prev = perturbation_kernel(s, s.eps_train).std;
        for (int i = 1; i <= 20; ++i) {
            double t = s.eps_train + (s.t_max - s.eps_train) * i / 20.0;
            double cur = perturbation_kernel(s, t).std;
            CHECK(cur > prev);
            prev = cur;
        }
    }
}

TEST_CASE("transition kernels compose into the full kernel") {
    for (SdeKind kind : {SdeKind::VE, SdeKind::VP, SdeKind::SubVP}) {
        SdeSpec sde = build_sde(kind);
        RngStream rng(11, "semigroup");
        for (int trial = 0; trial < 200; ++trial) {
            double a = sde.eps_train + (sde.t_max - sde.eps_train) * rng.uniform();
            double b = sde.eps_train + (sde.t_max - sde.eps_train) * rng.uniform();
            double s = std::min(a, b), t = std::max(a, b);
            KernelPoint full = perturbation_kernel(sde, t);
            KernelPoint head = perturbation_kernel(sde, s);
            KernelPoint tail = transition_kernel(sde, s, t);
            double m = head.mean_coeff * tail.mean_coeff;
            double var = tail.mean_coeff * tail.mean_coeff * head.std * head.std + tail.std * tail.std;
            REQUIRE(m == Approx(full.mean_coeff).epsilon(1e-12));
            REQUIRE(var == Approx(full.std * full.std).epsilon(1e-12).margin(1e-15));
        }
        CHECK_THROWS_AS(transition_kernel(sde, 0.9, 0.1), std::invalid_argument);
    }
}

TEST_CASE("variance trajectories") {
    SdeSpec ve = build_sde(SdeKind::VE);
    SdeSpec vp = build_sde(SdeKind::VP);
    SdeSpec sub = build_sde(SdeKind::SubVP);

    // unit-variance data is a fixed point of the VP flow
    for (int i = 0; i <= 100; ++i) {
        double t = i / 100.0;
        CHECK(std::fabs(variance_trajectory(vp, 1.0, t) - 1.0) <= 1e-12);
    }

    // SubVP sits at or below VP for matched var0, both reach 1 at t_max
    for (double var0 : {0.25, 1.0, 2.0}) {
        for (int i = 0; i <= 100; ++i) {
            double t = i / 100.0;
            CHECK(variance_trajectory(sub, var0, t) <= variance_trajectory(vp, var0, t) + 1e-12);
        }
        CHECK(variance_trajectory(vp, var0, 1.0) == Approx(1.0).margin(1e-4));
        CHECK(variance_trajectory(sub, var0, 1.0) == Approx(1.0).margin(1e-4));
        // identity at t=0 (VP/SubVP evaluate exactly there)
        CHECK(variance_trajectory(vp, var0, 0.0) == Approx(var0).margin(1e-15));
        CHECK(variance_trajectory(sub, var0, 0.0) == Approx(var0).margin(1e-15));
    }
    CHECK(variance_trajectory(sub, 1.0, 0.5) == Approx(0.9271872739864679).epsilon(1e-13));

    // VE variance adds sigma(t)^2 on top of the data variance
    CHECK(variance_trajectory(ve, 2.0, 1.0) == Approx(2.0 + 2500.0).epsilon(1e-13));

    // consistency with the kernel: var(t) = m(t)^2 var0 + s(t)^2
    for (const SdeSpec& sde : {ve, vp, sub}) {
        for (double var0 : {0.5, 1.0, 3.0}) {
            for (int i = 1; i <= 10; ++i) {
                double t = sde.eps_train + (sde.t_max - sde.eps_train) * i / 10.0;
                KernelPoint k = perturbation_kernel(sde, t);
                double via_kernel = k.mean_coeff * k.mean_coeff * var0 + k.std * k.std;
                REQUIRE(variance_trajectory(sde, var0, t) == Approx(via_kernel).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("discrete schedules") {
    DiscreteSchedule smld = make_smld_schedule(0.01, 50.0, 10);
    CHECK(smld.sigma.front() == Approx(0.01));
    CHECK(smld.sigma.back() == Approx(50.0));
    for (int i = 1; i < 10; ++i)
        CHECK(smld.sigma[i] / smld.sigma[i - 1] == Approx(smld.sigma[1] / smld.sigma[0]).epsilon(1e-12));

    DiscreteSchedule ddpm = make_ddpm_schedule(0.1, 20.0, 1000);
    CHECK(ddpm.beta.front() == Approx(0.1 / 1000).epsilon(1e-12));
    CHECK(ddpm.beta.back() == Approx(20.0 / 1000).epsilon(1e-12));
    double prev = 1.0;
    for (double ab : ddpm.alpha_bar) {
        CHECK(ab > 0.0);
        CHECK(ab < prev);
        prev = ab;
    }

    CHECK_THROWS_AS(make_smld_schedule(0.5, 0.1, 10), std::invalid_argument);
    CHECK_THROWS_AS(make_ddpm_schedule(0.1, 20.0, 0), std::invalid_argument);
    // per-step beta would reach 1
    CHECK_THROWS_AS(make_ddpm_schedule(0.5, 3.0, 2), std::invalid_argument);
}

TEST_CASE("discrete chain marginals match closed forms") {
    const int paths = 20000;
    {
        DiscreteSchedule sch = make_smld_schedule(0.1, 3.0, 10);
        RngStream rng(5, "chain-smld");
        double sum = 0.0, sumsq = 0.0;
        for (int p = 0; p < paths; ++p) {
            auto traj = simulate_discrete_chain(sch, Vec{2.0}, rng);
            double v = traj.back()[0];
            sum += v;
            sumsq += v * v;
        }
        double mean = sum / paths;
        double var = sumsq / paths - mean * mean;
        // x_n ~ N(x0, sigma_n^2)
        double se_mean = 3.0 / std::sqrt(double(paths));
        CHECK(std::fabs(mean - 2.0) < 3 * se_mean);
        CHECK(std::fabs(var - 9.0) < 3 * 9.0 * std::sqrt(2.0 / paths));
    }
    {
        DiscreteSchedule sch = make_ddpm_schedule(0.1, 20.0, 100);
        RngStream rng(5, "chain-ddpm");
        double sum = 0.0, sumsq = 0.0;
        for (int p = 0; p < paths; ++p) {
            auto traj = simulate_discrete_chain(sch, Vec{2.0}, rng);
            double v = traj.back()[0];
            sum += v;
            sumsq += v * v;
        }
        double mean = sum / paths;
        double var = sumsq / paths - mean * mean;
        double ab = sch.alpha_bar.back();
        // x_n ~ N(sqrt(ab) x0, 1 - ab)
        double tgt_mean = std::sqrt(ab) * 2.0;
        double tgt_var = 1.0 - ab;
        CHECK(std::fabs(mean - tgt_mean) < 3 * std::sqrt(tgt_var / paths));
        CHECK(std::fabs(var - tgt_var) < 3 * tgt_var * std::sqrt(2.0 / paths));
    }
}

// Monte-Carlo check of the VP kernel against a fine Euler-Maruyama
// simulation of the forward SDE itself (independent of the closed forms).
TEST_CASE("forward simulation reproduces the VP kernel") {
    SdeSpec vp = build_sde(SdeKind::VP);
    const int paths = 20000, steps = 2000;
    const double dt = 1.0 / steps;
    RngStream rng(17, "forward-em");
    double sum = 0.0, sumsq = 0.0;
    for (int p = 0; p < paths; ++p) {
        double x = 2.0;
        for (int i = 0; i < steps; ++i) {
            double t = i * dt;
            double b = beta_t(vp, t);
            x += -0.5 * b * x * dt + std::sqrt(b * dt) * rng.gaussian();
        }
        sum += x;
        sumsq += x * x;
    }
    double mean = sum / paths;
    double var = sumsq / paths - mean * mean;
    KernelPoint k = perturbation_kernel(vp, 1.0);
    double tgt_mean = k.mean_coeff * 2.0;
    double tgt_var = k.std * k.std;
    CHECK(std::fabs(mean - tgt_mean) < 3 * std::sqrt(tgt_var / paths) + 0.02 * std::fabs(tgt_mean) + 1e-3);
    CHECK(std::fabs(var - tgt_var) < 3 * tgt_var * std::sqrt(2.0 / paths) + 0.01 * tgt_var);
}

TEST_CASE("kernel match report") {
    SdeSpec ve = build_sde(SdeKind::VE);
    SdeSpec vp = build_sde(SdeKind::VP);

    auto rows_ve = kernel_match_report(ve, 1000);
    REQUIRE(rows_ve.size() == 1000);
    CHECK(rows_ve.back().t == Approx(1.0));
    CHECK(rows_ve.back().discrete_std == Approx(rows_ve.back().continuous_std).epsilon(1e-12));

    // Frozen deviation summaries (independently computed from the two
    // closed-form columns). The SMLD/VE gap is O(1/n) from the off-by-one
    // between the geometric grid exponent (i-1)/(n-1) and t=i/n.
    KernelMatchSummary s_ve = summarize_kernel_match(rows_ve);
    CHECK(s_ve.max_rel_std == Approx(0.008481024659119504).epsilon(1e-9));
    CHECK(s_ve.max_scaled_std == Approx(0.000368061840017333).epsilon(1e-9));

    KernelMatchSummary s_vp = summarize_kernel_match(kernel_match_report(vp, 1000));
    // The DDPM mean coefficient genuinely decays faster than the continuous
    // kernel by exp(-sum(beta_i^2)/4) ~ 3.3% at n=1000; the curve-scale
    // deviations are the O(1/n) quantities.
    CHECK(s_vp.max_rel_mean == Approx(0.03329004457727158).epsilon(1e-9));
    CHECK(s_vp.max_rel_std == Approx(0.046294426428328726).epsilon(1e-9));
    CHECK(s_vp.max_scaled_mean == Approx(0.0009932088995209187).epsilon(1e-9));
    CHECK(s_vp.max_scaled_std == Approx(0.0013209543461593612).epsilon(1e-9));

    // deviations halve when n doubles
    KernelMatchSummary s_ve2 = summarize_kernel_match(kernel_match_report(ve, 2000));
    KernelMatchSummary s_vp2 = summarize_kernel_match(kernel_match_report(vp, 2000));
    CHECK(s_ve2.max_rel_std / s_ve.max_rel_std == Approx(0.5).margin(0.25));
    CHECK(s_vp2.max_scaled_mean / s_vp.max_scaled_mean == Approx(0.5).margin(0.25));
    CHECK(s_vp2.max_scaled_std / s_vp.max_scaled_std == Approx(0.5).margin(0.25));

    CHECK_THROWS_AS(kernel_match_report(build_sde(SdeKind::SubVP), 100), std::invalid_argument);
}

TEST_CASE("prior matches the kernel at t_max") {
    SdeSpec ve = build_sde(SdeKind::VE);
    SdeSpec vp = build_sde(SdeKind::VP);
    CHECK(prior_std(ve) == Approx(50.0));
    CHECK(prior_std(vp) == 1.0);
    // standard normal log density at the origin in 2D: -log(2*pi)
    CHECK(prior_log_density(vp, Vec{0.0, 0.0}) == Approx(-1.8378770664093453).epsilon(1e-12));

    RngStream rng(3, "prior");
    double sumsq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        Vec x = prior_sample(ve, 1, rng);
        sumsq += x[0] * x[0];
    }
    CHECK(sumsq / n == Approx(2500.0).epsilon(0.05));
}
