// SPDX-License-Identifier: Apache-2.0
//
// Unified beamforming coefficient tensors (phi, theta, upsilon) for MRT
// and ZF precoding, the closed-form SINR lower bound they induce, and the
// conversion of rate targets to SINR targets gamma.
//
// MRT stores upsilon factored as beta(m,n) * alpha(g,m,i); ZF stores it as
// eta(n,i) / M. Full tensors are only materialized by test oracles.

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/channel.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/grouping.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

enum class Beamforming { MRT, ZF };

inline const char* to_string(Beamforming b) {
    return b == Beamforming::MRT ? "mrt" : "zf";
}

// Amplitude matrix q with q_mn = sqrt(p_mn). In ZF mode every row of a
// column is equal (one power level per user).
struct PowerAllocation {
    Mat q;  // M x N, nonnegative
    Beamforming mode = Beamforming::MRT;

    double total_coefficient_power() const { return q.array().square().sum(); }
};

struct BeamformStats {
    Beamforming mode = Beamforming::MRT;
    double sigma2 = 0.0;
    int num_aps = 0;

    Tensor3 alpha;  // (G, M, N) frozen estimation variances
    Mat beta;       // M x N (factored MRT upsilon)

    // ZF only
    Mat eta;         // N x N, eta(n, i): residual interference weight at n from stream i
    Mat phi_zf;      // M x N expected squared precoder magnitude per (AP, user)
    int zf_samples = 0;
    int rejected_samples = 0;
    bool unstable = false;

    // objective weight
    double phi(int g, int m, int n) const {
        return mode == Beamforming::MRT ? alpha(g, m, n) : phi_zf(m, n);
    }
    // signal weight
    double theta(int g, int m, int n) const {
        return mode == Beamforming::MRT ? alpha(g, m, n) : 1.0 / num_aps;
    }
    // interference weight
    double upsilon(int g, int m, int n, int i) const {
        return mode == Beamforming::MRT ? beta(m, n) * alpha(g, m, i)
                                        : eta(n, i) / num_aps;
    }
};

inline BeamformStats mrt_stats(const ChannelStats& stats, const Scenario& sc) {
    BeamformStats b;
    b.mode = Beamforming::MRT;
    b.sigma2 = stats.sigma2;
    b.num_aps = sc.aps();
    b.alpha = stats.alpha;
    b.beta = sc.beta;
    return b;
}

// One exponential-smoothing step: eta^(t) = w * eta^{t-1} + (1 - w) * eta^{(t-1)}.
inline double smoothed_eta(double prev_true, double prev_estimate, double w) {
    return w * prev_true + (1.0 - w) * prev_estimate;
}

// Monte Carlo estimate of the ZF coefficients.
//
// Per sample and group g: W = Hhat* (Hhat^T Hhat*)^{-1}. Then
//   phi(m, n)  = E |W(m, kappa_n)|^2            (expected precoder power)
//   eta(n, i)  = E sum_m |W(m, kappa_i)|^2 (beta_mn - alpha_{g_i m n})
// eta is filled for every user n against every stream i, with the stream's
// precoder frozen to its snapshot group; pairs not co-grouped at snapshot
// time only matter to master-problem cut evaluation.
inline BeamformStats zf_stats(const Scenario& sc, const Grouping& x,
                              const ChannelStats& stats, const RadioConfig& config,
                              int num_samples, std::uint64_t seed) {
    (void)config;
    if (num_samples < 1)
        throw InvalidInputError("zf_stats: need at least one sample");
    const int G = x.groups(), M = sc.aps(), N = sc.users();
    for (int g = 0; g < G; ++g)
        if (x.size(g) > M)
            throw InfeasiblePrecoderError(
                "zf_stats: group " + std::to_string(g) + " has " +
                std::to_string(x.size(g)) + " users but only " + std::to_string(M) +
                " APs");

    BeamformStats b;
    b.mode = Beamforming::ZF;
    b.sigma2 = stats.sigma2;
    b.num_aps = M;
    b.alpha = stats.alpha;
    b.beta = sc.beta;
    b.eta = Mat::Zero(N, N);
    b.phi_zf = Mat::Zero(M, N);
    b.zf_samples = num_samples;

    const std::vector<int> kappa = within_group_rank(sc, x);
    const double cond_threshold = 1e10;
    const double inv_sqrt2 = 0.70710678118654752440;

    for (int g = 0; g < G; ++g) {
        const int U = x.size(g);
        if (U == 0) continue;
        // the inverse-Gram mean only exists with at least one AP of margin
        if (U == M) b.unstable = true;
        std::vector<int> col_user(U, -1);
        for (int n : x.members(g)) col_user[kappa[n]] = n;

        // expected Gram diagonal, used as the conditioning scale
        double scale = 0.0;
        for (int c = 0; c < U; ++c) {
            double s = 0.0;
            for (int m = 0; m < M; ++m) s += stats.alpha(g, m, col_user[c]);
            scale = std::max(scale, s);
        }
        if (scale <= 0.0) {
            b.unstable = true;
            continue;
        }

        int accepted = 0;
        long attempts = 0;
        const long max_attempts = 50L * num_samples;
        double worst_ill = 0.0;
        CMat hhat(M, U);
        while (accepted < num_samples && attempts < max_attempts) {
            ++attempts;
            Rng rng(derive_seed(seed, 0x2f5aULL, static_cast<std::uint64_t>(g),
                                static_cast<std::uint64_t>(attempts)));
            for (int c = 0; c < U; ++c) {
                const int n = col_user[c];
                for (int m = 0; m < M; ++m) {
                    const std::complex<double> zeta(rng.normal() * inv_sqrt2,
                                                    rng.normal() * inv_sqrt2);
                    hhat(m, c) = std::sqrt(stats.alpha(g, m, n)) * zeta;
                }
            }
            const CMat gram = hhat.transpose() * hhat.conjugate();  // U x U Hermitian
            Eigen::SelfAdjointEigenSolver<CMat> es(gram);
            const double smin = es.eigenvalues().minCoeff();
            const double smax = es.eigenvalues().maxCoeff();
            if (!(smin > 0.0) || smax / smin > cond_threshold ||
                scale / smin > cond_threshold) {
                ++b.rejected_samples;
                continue;
            }
            worst_ill = std::max(worst_ill, scale / smin);
            const CMat w = hhat.conjugate() * gram.inverse();  // M x U
            for (int c = 0; c < U; ++c) {
                const int i = col_user[c];
                for (int m = 0; m < M; ++m) {
                    const double wm2 = std::norm(w(m, c));
                    b.phi_zf(m, i) += wm2;
                    for (int n = 0; n < N; ++n) {
                        const double err = std::max(sc.beta(m, n) - stats.alpha(g, m, n), 0.0);
                        b.eta(n, i) += wm2 * err;
                    }
                }
            }
            ++accepted;
        }
        if (accepted < num_samples || worst_ill > 1e6) b.unstable = true;
        if (accepted > 0) {
            const double inv = 1.0 / accepted;
            for (int c = 0; c < U; ++c) {
                const int i = col_user[c];
                b.phi_zf.col(i) *= inv;
                b.eta.col(i) *= inv;
            }
        }
    }
    return b;
}

struct GammaTargets {
    std::vector<double> gamma;  // >= 0, zero iff the rate target is zero
};

// Rate unit of the SINR-target exponent. Targets enter as their numeric
// value in Mbps: the group count multiplies the per-slot rate and the
// frame ratio compensates the pilot overhead.
inline constexpr double kRateExponentUnitBps = 1e6;

// gamma = 2^{G r tau_c / (tau_c - tau_g)} - 1, r in Mbps.
inline double gamma_target_value(double rate_bps, int groups, double tau_c,
                                 double tau_g) {
    if (tau_c <= tau_g)
        throw FrameOverflowError(
            "gamma_target_value: pilot length " + std::to_string(tau_g) +
            " does not fit coherence interval " + std::to_string(tau_c));
    const double r = rate_bps / kRateExponentUnitBps;
    return std::exp2(groups * r * tau_c / (tau_c - tau_g)) - 1.0;
}

inline GammaTargets gamma_targets(const QosTargets& qos, const RadioConfig& config,
                                  const Grouping& x) {
    config.validate();
    qos.validate();
    if (static_cast<int>(qos.target_rate_bps.size()) != x.users())
        throw InvalidInputError("gamma_targets: rate vector size mismatch");
    GammaTargets t;
    t.gamma.resize(x.users());
    for (int n = 0; n < x.users(); ++n) {
        const double tau_g = config.pilot_factor * x.size(x.group_of(n));
        t.gamma[n] = gamma_target_value(qos.target_rate_bps[n], x.groups(),
                                        config.coherence_len, tau_g);
    }
    return t;
}

// Closed-form SINR lower bound for user n:
//   (sum_m q_mn theta)^2 / (sigma^2 + sum_{i in group} sum_m q_mi^2 upsilon)
inline double sinr(const BeamformStats& b, const Grouping& x,
                   const PowerAllocation& p, int n) {
    const int g = x.group_of(n);
    const int M = b.num_aps;
    double signal = 0.0;
    for (int m = 0; m < M; ++m) signal += p.q(m, n) * b.theta(g, m, n);
    double interf = 0.0;
    for (int i : x.members(g))
        for (int m = 0; m < M; ++m) {
            const double q = p.q(m, i);
            interf += q * q * b.upsilon(g, m, n, i);
        }
    return signal * signal / (b.sigma2 + interf);
}

}  // namespace cfmimo
