// SPDX-License-Identifier: Apache-2.0
//
// Pilot-based MMSE channel-estimation statistics and channel realization
// sampling. The estimate variance alpha(g, m, n) is kept for every
// (g, m, n) triple: entries with x_gn = 1 drive the physical SINR, the
// full tensor is what frozen master-problem cuts evaluate against when a
// user is hypothetically moved to another group.

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/common.hpp"
#include "cfmimo/grouping.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

using CMat = Eigen::MatrixXcd;

// Pilot length equals the group size (0 for an empty group, which callers
// must treat as degenerate).
inline int pilot_length(const Grouping& x, int g) {
    return x.size(g);
}

// alpha = rho tau beta^2 / (sigma^2 + rho tau beta)
inline double estimation_variance_entry(double rho, double tau, double beta,
                                        double sigma2) {
    if (beta == 0.0 || tau == 0.0) return 0.0;
    return rho * tau * beta * beta / (sigma2 + rho * tau * beta);
}

struct ChannelStats {
    Tensor3 alpha;            // (G, M, N)
    std::vector<double> tau;  // effective pilot length per group
    double sigma2 = 0.0;
    double pilot_factor = 1.0;
};

inline ChannelStats estimation_variance(const Scenario& sc, const Grouping& x,
                                        const RadioConfig& config) {
    const int G = x.groups(), M = sc.aps(), N = sc.users();
    ChannelStats st;
    st.sigma2 = noise_power_w(config);
    st.pilot_factor = config.pilot_factor;
    st.tau.resize(G);
    st.alpha = Tensor3(G, M, N);
    for (int g = 0; g < G; ++g) {
        st.tau[g] = config.pilot_factor * x.size(g);
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n)
                st.alpha(g, m, n) = estimation_variance_entry(
                    config.pilot_power_w, st.tau[g], sc.beta(m, n), st.sigma2);
    }
    return st;
}

// Channels of one grouping: per group an M x U_g matrix with columns in
// kappa order. h_hat ~ CN(0, alpha) with independent error CN(0, beta-alpha),
// statistically equivalent to the pilot-projection MMSE construction under
// orthogonal pilots.
struct ChannelRealization {
    std::vector<CMat> h;       // true channels
    std::vector<CMat> h_hat;   // MMSE estimates
    std::vector<std::vector<int>> col_user;  // group -> column -> user index
};

inline ChannelRealization sample_channel(const Scenario& sc, const Grouping& x,
                                         const ChannelStats& stats,
                                         std::uint64_t seed) {
    const int G = x.groups(), M = sc.aps();
    const std::vector<int> kappa = within_group_rank(sc, x);
    ChannelRealization cr;
    cr.h.resize(G);
    cr.h_hat.resize(G);
    cr.col_user.resize(G);
    const double inv_sqrt2 = 0.70710678118654752440;
    for (int g = 0; g < G; ++g) {
        const int U = x.size(g);
        cr.h[g].resize(M, U);
        cr.h_hat[g].resize(M, U);
        cr.col_user[g].assign(U, -1);
        for (int n : x.members(g)) cr.col_user[g][kappa[n]] = n;
        Rng rng(derive_seed(seed, 0xc4a2ULL, static_cast<std::uint64_t>(g)));
        for (int c = 0; c < U; ++c) {
            const int n = cr.col_user[g][c];
            for (int m = 0; m < M; ++m) {
                const double a = stats.alpha(g, m, n);
                const double err_var = std::max(sc.beta(m, n) - a, 0.0);
                const std::complex<double> zeta(rng.normal() * inv_sqrt2,
                                                rng.normal() * inv_sqrt2);
                const std::complex<double> xi(rng.normal() * inv_sqrt2,
                                              rng.normal() * inv_sqrt2);
                cr.h_hat[g](m, c) = std::sqrt(a) * zeta;
                cr.h[g](m, c) = cr.h_hat[g](m, c) + std::sqrt(err_var) * xi;
            }
        }
    }
    return cr;
}

}  // namespace cfmimo
