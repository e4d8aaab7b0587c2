// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cfmimo/channel.hpp"

using namespace cfmimo;

TEST_CASE("pilot length equals group size") {
    const Grouping x(3, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1});
    CHECK(pilot_length(x, 0) == 10);
    CHECK(pilot_length(x, 1) == 1);
    CHECK(pilot_length(x, 2) == 0);  // empty group is degenerate
}

TEST_CASE("estimation variance formula") {
    // rho=0.2 W, tau=10, beta=1e-12, sigma2=7.96e-14
    CHECK(estimation_variance_entry(0.2, 10.0, 1e-12, 7.96e-14) ==
          doctest::Approx(9.617234083477591e-13).epsilon(1e-12));
    CHECK(estimation_variance_entry(0.2, 10.0, 0.0, 7.96e-14) == 0.0);
    CHECK(estimation_variance_entry(0.2, 0.0, 1e-12, 7.96e-14) == 0.0);
    // rho tau beta >> sigma^2  =>  alpha -> beta
    const double beta = 1e-9, sigma2 = 7.96e-14;
    const double a = estimation_variance_entry(0.5, 2000.0, beta, sigma2);
    CHECK(0.5 * 2000.0 * beta / sigma2 > 1e3);
    CHECK(std::abs(a - beta) / beta < 1e-3);
}

TEST_CASE("alpha stays below beta and responds to pilot power and length") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 6, 8, 21);
    const Grouping x = round_robin_grouping(8, 2);
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    for (int g = 0; g < 2; ++g)
        for (int m = 0; m < 6; ++m)
            for (int n = 0; n < 8; ++n) {
                CHECK(cs.alpha(g, m, n) >= 0.0);
                CHECK(cs.alpha(g, m, n) < sc.beta(m, n));
            }

    RadioConfig stronger = cfg;
    stronger.pilot_power_w = 2.0 * cfg.pilot_power_w;
    const ChannelStats cs2 = estimation_variance(sc, x, stronger);
    RadioConfig longer = cfg;
    longer.pilot_factor = 1.0;
    RadioConfig shorter = cfg;
    shorter.pilot_factor = 0.5;
    const ChannelStats cs_long = estimation_variance(sc, x, longer);
    const ChannelStats cs_short = estimation_variance(sc, x, shorter);
    for (int g = 0; g < 2; ++g)
        for (int m = 0; m < 6; ++m)
            for (int n = 0; n < 8; ++n) {
                CHECK(cs2.alpha(g, m, n) >= cs.alpha(g, m, n));
                CHECK(cs_long.alpha(g, m, n) >= cs_short.alpha(g, m, n));
            }
}

TEST_CASE("moving a user into a larger group weakly increases its alpha") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 5, 6, 9);
    const Grouping before(2, {0, 0, 1, 1, 1, 1});
    const Grouping after(2, {1, 0, 1, 1, 1, 1});  // user 0 joins the size-4 group
    const ChannelStats a = estimation_variance(sc, before, cfg);
    const ChannelStats b = estimation_variance(sc, after, cfg);
    for (int m = 0; m < 5; ++m)
        CHECK(b.alpha(after.group_of(0), m, 0) >= a.alpha(before.group_of(0), m, 0));
}

TEST_CASE("channel sampling matches the estimation statistics") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 2, 4, 31);
    const Grouping x = round_robin_grouping(4, 2);
    const ChannelStats cs = estimation_variance(sc, x, cfg);

    // empirical variances over many draws: var(hhat) -> alpha,
    // var(h - hhat) -> beta - alpha, both within 3% relative
    const int draws = 100000;
    const std::vector<int> kappa = within_group_rank(sc, x);
    double est_acc = 0.0, err_acc = 0.0;
    const int g = x.group_of(0), m = 0, c = kappa[0];
    for (int d = 0; d < draws; ++d) {
        const ChannelRealization cr = sample_channel(sc, x, cs, 1000 + d);
        const auto est = cr.h_hat[g](m, c);
        const auto err = cr.h[g](m, c) - est;
        est_acc += std::norm(est);
        err_acc += std::norm(err);
    }
    const double alpha = cs.alpha(g, m, 0);
    const double errvar = sc.beta(m, 0) - alpha;
    CHECK(std::abs(est_acc / draws - alpha) / alpha < 0.03);
    CHECK(std::abs(err_acc / draws - errvar) / errvar < 0.03);
}

TEST_CASE("channel sampling is deterministic per seed") {
    RadioConfig cfg;
    const Scenario sc = generate_scenario(cfg, 3, 5, 8);
    const Grouping x = round_robin_grouping(5, 2);
    const ChannelStats cs = estimation_variance(sc, x, cfg);
    const ChannelRealization a = sample_channel(sc, x, cs, 99);
    const ChannelRealization b = sample_channel(sc, x, cs, 99);
    const ChannelRealization c = sample_channel(sc, x, cs, 100);
    CHECK(a.h[0] == b.h[0]);
    CHECK(a.h_hat[1] == b.h_hat[1]);
    CHECK(a.h[0] != c.h[0]);
}
