// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cfmimo/beamform.hpp"
#include "support/oracles.hpp"

using namespace cfmimo;

TEST_CASE("MRT stats wire alpha into phi and theta") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 3, 4, 2);
    const Grouping x = round_robin_grouping(4, 2);
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const BeamformStats b = mrt_stats(cs, sc);
    for (int g = 0; g < 2; ++g)
        for (int m = 0; m < 3; ++m)
            for (int n = 0; n < 4; ++n) {
                CHECK(b.phi(g, m, n) == cs.alpha(g, m, n));
                CHECK(b.theta(g, m, n) == cs.alpha(g, m, n));
                for (int i = 0; i < 4; ++i)
                    CHECK(b.upsilon(g, m, n, i) ==
                          sc.beta(m, n) * cs.alpha(g, m, i));
            }
}

TEST_CASE("all-zero alpha gives all-zero MRT stats") {
    RadioConfig cfg;
    Scenario sc = generate_scenario(cfg, 2, 2, 3);
    ChannelStats cs = estimation_variance(sc, round_robin_grouping(2, 1), cfg);
    cs.alpha = Tensor3(1, 2, 2, 0.0);
    const BeamformStats b = mrt_stats(cs, sc);
    const Grouping x = round_robin_grouping(2, 1);
    PowerAllocation p{Mat::Constant(2, 2, 1.0), Beamforming::MRT};
    CHECK(sinr(b, x, p, 0) == 0.0);
    CHECK(b.phi(0, 1, 1) == 0.0);
}

TEST_CASE("single link SINR reduces to the scalar formula") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 1, 1, 5);
    const Grouping x = round_robin_grouping(1, 1);
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const BeamformStats b = mrt_stats(cs, sc);
    const double alpha = cs.alpha(0, 0, 0), beta = sc.beta(0, 0);
    const double p = 3.7e4;
    PowerAllocation pa{Mat::Constant(1, 1, std::sqrt(p)), Beamforming::MRT};
    const double expected = p * alpha * alpha / (cs.sigma2 + p * beta * alpha);
    CHECK(sinr(b, x, pa, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("SINR against the literal transcription") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 3, 4, 17);
    const Grouping x(2, {0, 1, 0, 1});
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const BeamformStats b = mrt_stats(cs, sc);
    Rng rng(4);
    Mat q(3, 4);
    for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 4; ++n) q(m, n) = rng.uniform(0.0, 1e4);
    PowerAllocation pa{q, Beamforming::MRT};
    for (int n = 0; n < 4; ++n) {
        const double mine = sinr(b, x, pa, n);
        const double naive = oracles::naive_mrt_sinr(sc.beta, cs.alpha, cs.sigma2, x, q, n);
        CHECK(mine == doctest::Approx(naive).epsilon(1e-12));
    }
}

TEST_CASE("two users in one group match the transcription too") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 4, 2, 23);
    const Grouping x(1, {0, 0});
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const BeamformStats b = mrt_stats(cs, sc);
    Rng rng(7);
    Mat q(4, 2);
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 2; ++n) q(m, n) = rng.uniform(0.0, 2e4);
    PowerAllocation pa{q, Beamforming::MRT};
    for (int n = 0; n < 2; ++n)
        CHECK(sinr(b, x, pa, n) ==
              doctest::Approx(oracles::naive_mrt_sinr(sc.beta, cs.alpha, cs.sigma2, x,
                                                      q, n))
                  .epsilon(1e-12));
}

TEST_CASE("SINR monotonicity in amplitudes") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 3, 3, 29);
    const Grouping x(1, {0, 0, 0});
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const BeamformStats b = mrt_stats(cs, sc);
    Mat q = Mat::Constant(3, 3, 1e3);
    PowerAllocation pa{q, Beamforming::MRT};
    const double base = sinr(b, x, pa, 0);
    PowerAllocation up = pa;
    up.q(1, 0) *= 1.5;  // more power to the served user
    CHECK(sinr(b, x, up, 0) > base);
    PowerAllocation interferer = pa;
    interferer.q(1, 1) *= 1.5;  // more power to a same-group interferer
    CHECK(sinr(b, x, interferer, 0) <= base);
}

TEST_CASE("single user SINR saturates at alpha/beta") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 1, 1, 5);
    const Grouping x = round_robin_grouping(1, 1);
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const BeamformStats b = mrt_stats(cs, sc);
    const double ceiling = cs.alpha(0, 0, 0) / sc.beta(0, 0);
    // saturation needs p beta alpha >> sigma^2
    const double p_sat = cs.sigma2 / (sc.beta(0, 0) * cs.alpha(0, 0, 0));
    double prev = 0.0;
    for (double p : {1e-4 * p_sat, 1e-2 * p_sat, p_sat, 1e2 * p_sat, 1e4 * p_sat}) {
        PowerAllocation pa{Mat::Constant(1, 1, std::sqrt(p)), Beamforming::MRT};
        const double s = sinr(b, x, pa, 0);
        CHECK(s > prev);
        CHECK(s < ceiling);
        prev = s;
    }
    CHECK(prev == doctest::Approx(ceiling).epsilon(1e-3));
}

TEST_CASE("gamma targets") {
    RadioConfig cfg;
    SUBCASE("zero rate gives zero target") {
        const Grouping x = round_robin_grouping(3, 3);
        QosTargets qos;
        qos.target_rate_bps = {0.0, 0.0, 0.0};
        const GammaTargets t = gamma_targets(qos, cfg, x);
        for (double g : t.gamma) CHECK(g == 0.0);
    }
    SUBCASE("unit exponent gives gamma = 1") {
        // G=1, r=0.5 Mbps, tau_c/(tau_c - tau_g) = 2  =>  2^1 - 1 = 1
        RadioConfig c2 = cfg;
        c2.coherence_len = 2;
        const Grouping x = round_robin_grouping(1, 1);
        QosTargets qos;
        qos.target_rate_bps = {5e5};  // 0.5 Mbps
        const GammaTargets t = gamma_targets(qos, c2, x);
        CHECK(t.gamma[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("reference operating point") {
        // R=1 Mbps, G=5, tau_c=200, tau_g=10: 2^{5 * 200/190} - 1
        RadioConfig c2 = cfg;
        c2.coherence_len = 200;
        std::vector<int> assign(50);
        for (int n = 0; n < 50; ++n) assign[n] = n / 10;  // five groups of ten
        const Grouping x(5, assign);
        QosTargets qos;
        qos.target_rate_bps.assign(50, 1e6);
        const GammaTargets t = gamma_targets(qos, c2, x);
        CHECK(t.gamma[0] == doctest::Approx(37.40328702649931).epsilon(1e-10));
    }
    SUBCASE("frame overflow") {
        RadioConfig c2 = cfg;
        c2.coherence_len = 4;
        const Grouping x = round_robin_grouping(8, 2);  // tau_g = 4 = tau_c
        QosTargets qos;
        qos.target_rate_bps.assign(8, 1e5);
        CHECK_THROWS_AS(gamma_targets(qos, c2, x), FrameOverflowError);
    }
    SUBCASE("monotone in rate, groups and pilot length") {
        QosTargets qos;
        qos.target_rate_bps = {5e5, 8e5};
        const Grouping x2(1, {0, 0});
        const GammaTargets t = gamma_targets(qos, cfg, x2);
        CHECK(t.gamma[1] > t.gamma[0]);
        // same rates, more groups
        QosTargets qq;
        qq.target_rate_bps = {5e5, 5e5};
        const Grouping one(1, {0, 0});
        const Grouping two(2, {0, 1});
        const GammaTargets g1 = gamma_targets(qq, cfg, one);
        const GammaTargets g2 = gamma_targets(qq, cfg, two);
        CHECK(g2.gamma[0] > g1.gamma[0] / 2.0);  // G doubles the exponent
        // longer pilots raise the frame overhead
        RadioConfig shortframe = cfg;
        shortframe.coherence_len = 12;
        const Grouping big(1, std::vector<int>(10, 0));
        const Grouping small(1, {0, 0});
        QosTargets q10;
        q10.target_rate_bps.assign(10, 5e5);
        QosTargets q2s;
        q2s.target_rate_bps.assign(2, 5e5);
        CHECK(gamma_targets(q10, shortframe, big).gamma[0] >
              gamma_targets(q2s, shortframe, small).gamma[0]);
    }
}

TEST_CASE("ZF statistics") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 8, 6, 13);
    const Grouping x = round_robin_grouping(6, 2);
    const ChannelStats cs = estimation_variance(sc, x, cfg);

    SUBCASE("more users than APs is rejected") {
        const Scenario tiny = generate_scenario(cfg, 2, 6, 13);
        const ChannelStats cst = estimation_variance(tiny, x, cfg);
        CHECK_THROWS_AS(zf_stats(tiny, x, cst, cfg, 50, 1), InfeasiblePrecoderError);
    }

    SUBCASE("perfect estimation nulls the interference") {
        ChannelStats perfect = cs;
        for (int g = 0; g < 2; ++g)
            for (int m = 0; m < 8; ++m)
                for (int n = 0; n < 6; ++n) perfect.alpha(g, m, n) = sc.beta(m, n);
        const BeamformStats b = zf_stats(sc, x, perfect, cfg, 60, 2);
        for (int n = 0; n < 6; ++n)
            for (int i = 0; i < 6; ++i) CHECK(b.eta(n, i) == doctest::Approx(0.0));
        // with eta = 0 the denominator is exactly sigma^2
        Mat q = Mat::Constant(8, 6, 2.0);
        PowerAllocation pa{q, Beamforming::ZF};
        const double expected = 4.0 / b.sigma2;  // p_n / sigma^2
        CHECK(sinr(b, x, pa, 0) == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("square single-user system is flagged unstable") {
        const Scenario s11 = generate_scenario(cfg, 1, 1, 3);
        const Grouping x11 = round_robin_grouping(1, 1);
        const ChannelStats c11 = estimation_variance(s11, x11, cfg);
        const BeamformStats b = zf_stats(s11, x11, c11, cfg, 40, 4);
        CHECK(b.unstable);
    }

    SUBCASE("deterministic per seed") {
        const BeamformStats a = zf_stats(sc, x, cs, cfg, 30, 7);
        const BeamformStats b = zf_stats(sc, x, cs, cfg, 30, 7);
        const BeamformStats c = zf_stats(sc, x, cs, cfg, 30, 8);
        CHECK(a.eta == b.eta);
        CHECK(a.phi_zf == b.phi_zf);
        CHECK(a.eta != c.eta);
    }
}

TEST_CASE("exponential smoothing recursion") {
    CHECK(smoothed_eta(3.0, 5.0, 1.0) == 3.0);   // w = 1 returns the true value
    CHECK(smoothed_eta(3.0, 5.0, 0.0) == 5.0);   // w = 0 keeps the estimate
    CHECK(smoothed_eta(2.0, 4.0, 0.25) == doctest::Approx(3.5));
}
