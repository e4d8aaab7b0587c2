// SPDX-License-Identifier: Apache-2.0
//
// Reference grouping strategies and comparison metrics: random assignment
// (BCGA), capacity-balanced deferred acceptance (Gale-S), the non-grouping
// single-slot system, the exhaustive joint oracle, and the
// mean-interference report used in the evaluation figures.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cfmimo/beamform.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/gbd.hpp"
#include "cfmimo/grouping.hpp"
#include "cfmimo/primal.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

struct MetricsReport {
    double total_power_w = 0.0;
    double total_power_dbm = -kInf;
    double mean_interference = 0.0;
    std::vector<double> sinr_margin;  // per-user achieved/target - 1
    std::vector<int> group_sizes;
};

// I = (1/N) sum_n sum_g x_gn sum_i x_gi sum_m p_mi beta_mn alpha_gmi.
// MRT is the paper's metric; with ZF statistics the eta-weighted analogue
// is returned (interference that the precoder could not null).
inline double mean_interference(const BeamformStats& b, const Grouping& x,
                                const PowerAllocation& p) {
    const int N = x.users(), M = b.num_aps;
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        const int g = x.group_of(n);
        for (int i : x.members(g))
            for (int m = 0; m < M; ++m) {
                const double pw = p.q(m, i) * p.q(m, i);
                total += b.mode == Beamforming::MRT
                             ? pw * b.beta(m, n) * b.alpha(g, m, i)
                             : pw * b.eta(n, i) / M;
            }
    }
    return total / N;
}

inline MetricsReport make_metrics(const BeamformStats& b, const Grouping& x,
                                  const PowerAllocation& p, const GammaTargets& gamma,
                                  double total_power) {
    MetricsReport rep;
    rep.total_power_w = total_power;
    rep.total_power_dbm = total_power > 0.0 ? watts_to_dbm(total_power) : -kInf;
    rep.mean_interference = mean_interference(b, x, p);
    rep.group_sizes = x.sizes();
    rep.sinr_margin.resize(x.users());
    for (int n = 0; n < x.users(); ++n) {
        const double target = gamma.gamma[n];
        rep.sinr_margin[n] =
            target > 0.0 ? sinr(b, x, p, n) / target - 1.0 : kInf;
    }
    return rep;
}

namespace detail {

// Closed-form power a lone user needs under equal per-AP amplitudes:
// p = gamma sigma^2 / ((sum_m alpha)^2 - gamma sum_m beta alpha),
// infinite when the self-interference ceiling sits below the target.
inline double single_user_power_proxy(const Scenario& sc, int n, double gamma_n,
                                      double rho, double tau, double sigma2) {
    double sum_alpha = 0.0, sum_beta_alpha = 0.0;
    for (int m = 0; m < sc.aps(); ++m) {
        const double a = estimation_variance_entry(rho, tau, sc.beta(m, n), sigma2);
        sum_alpha += a;
        sum_beta_alpha += sc.beta(m, n) * a;
    }
    const double denom = sum_alpha * sum_alpha - gamma_n * sum_beta_alpha;
    if (!(denom > 0.0)) return kInf;
    return gamma_n * sigma2 / denom;
}

// beta-coupling interference estimate of user n against a tentative
// member set.
inline double coupling_estimate(const Scenario& sc, int n,
                                const std::vector<int>& members) {
    double s = 0.0;
    for (int i : members) {
        if (i == n) continue;
        for (int m = 0; m < sc.aps(); ++m) s += sc.beta(m, n) * sc.beta(m, i);
    }
    return s;
}

}  // namespace detail

// Deferred-acceptance matching: users propose to the group with the least
// estimated in-group interference, groups reject the proposers with the
// highest single-user power demand. Capacities are balanced so the final
// sizes differ by at most one.
inline Grouping gale_shapley_grouping(const Scenario& sc, const QosTargets& qos,
                                      const RadioConfig& config, int num_groups) {
    config.validate();
    const int N = sc.users(), G = num_groups;
    if (G < 1) throw InvalidInputError("gale_shapley_grouping: need >= 1 group");
    const double sigma2 = noise_power_w(config);
    const double cap_tau =
        config.pilot_factor * static_cast<double>((N + G - 1) / G);

    // power demand proxy at the capacity pilot length
    std::vector<double> demand(N);
    for (int n = 0; n < N; ++n) {
        const double gamma_n = gamma_target_value(qos.target_rate_bps[n], G,
                                                  config.coherence_len, cap_tau);
        demand[n] = detail::single_user_power_proxy(sc, n, gamma_n,
                                                    config.pilot_power_w, cap_tau,
                                                    sigma2);
    }

    std::vector<int> capacity(G, N / G);
    for (int g = 0; g < G && g < N % G; ++g) ++capacity[g];

    std::vector<std::vector<int>> tentative(G);
    std::vector<std::vector<bool>> rejected(N, std::vector<bool>(G, false));
    std::vector<int> assigned(N, -1);
    std::vector<int> queue(N);
    std::iota(queue.begin(), queue.end(), 0);

    while (!queue.empty()) {
        const int n = queue.front();
        queue.erase(queue.begin());
        // best open group by current coupling estimate, index tie-break
        int best_g = -1;
        double best_i = kInf;
        for (int g = 0; g < G; ++g) {
            if (rejected[n][g]) continue;
            const double est = detail::coupling_estimate(sc, n, tentative[g]);
            if (est < best_i) {
                best_i = est;
                best_g = g;
            }
        }
        if (best_g < 0)
            throw Error("gale_shapley_grouping: user rejected everywhere");
        tentative[best_g].push_back(n);
        assigned[n] = best_g;
        if (static_cast<int>(tentative[best_g].size()) > capacity[best_g]) {
            // evict the member with the highest power demand
            auto& mem = tentative[best_g];
            int worst = 0;
            for (int k = 1; k < static_cast<int>(mem.size()); ++k)
                if (demand[mem[k]] > demand[mem[worst]] ||
                    (demand[mem[k]] == demand[mem[worst]] && mem[k] > mem[worst]))
                    worst = k;
            const int evicted = mem[worst];
            mem.erase(mem.begin() + worst);
            rejected[evicted][best_g] = true;
            assigned[evicted] = -1;
            queue.push_back(evicted);
        }
    }
    return Grouping(G, assigned);
}

// Audit helper: true when no user/group pair both strictly prefer each
// other over the produced match.
inline bool is_stable_matching(const Scenario& sc, const QosTargets& qos,
                               const RadioConfig& config, const Grouping& x) {
    const int N = sc.users(), G = x.groups();
    const double sigma2 = noise_power_w(config);
    const double cap_tau =
        config.pilot_factor * static_cast<double>((N + G - 1) / G);
    std::vector<double> demand(N);
    for (int n = 0; n < N; ++n) {
        const double gamma_n = gamma_target_value(qos.target_rate_bps[n], G,
                                                  config.coherence_len, cap_tau);
        demand[n] = detail::single_user_power_proxy(sc, n, gamma_n,
                                                    config.pilot_power_w, cap_tau,
                                                    sigma2);
    }
    std::vector<int> capacity(G, N / G);
    for (int g = 0; g < G && g < N % G; ++g) ++capacity[g];
    for (int n = 0; n < N; ++n) {
        const int home = x.group_of(n);
        const double own = detail::coupling_estimate(sc, n, x.members(home));
        for (int g = 0; g < G; ++g) {
            if (g == home) continue;
            const double other = detail::coupling_estimate(sc, n, x.members(g));
            if (!(other < own)) continue;  // user does not prefer g
            if (x.size(g) < capacity[g]) return false;
            for (int i : x.members(g))
                if (demand[i] > demand[n]) return false;
        }
    }
    return true;
}

// Single-slot system: everyone shares one group with pilot length N.
inline std::pair<JointSolution, MetricsReport> no_grouping_solution(
    const Scenario& sc, const QosTargets& qos, const RadioConfig& config,
    Beamforming mode = Beamforming::MRT, double tol = 1e-8, int zf_samples = 200,
    std::uint64_t zf_seed = 1) {
    const Grouping x = round_robin_grouping(sc.users(), 1);
    const ChannelStats cs = estimation_variance(sc, x, config);
    const BeamformStats b = mode == Beamforming::MRT
                                ? mrt_stats(cs, sc)
                                : zf_stats(sc, x, cs, config, zf_samples, zf_seed);
    const GammaTargets gamma = gamma_targets(qos, config, x);
    const PrimalOutcome out = solve_power(b, x, gamma, tol);
    JointSolution sol;
    sol.grouping = x;
    sol.feasible = out.status == PrimalOutcome::Status::Feasible;
    sol.power = out.power;
    sol.total_power_w = sol.feasible ? out.objective : kInf;
    sol.gap = 0.0;
    sol.iterations = 1;
    return {sol, make_metrics(b, x, out.power, gamma, out.objective)};
}

// Power of a fixed grouping (baseline comparisons): one primal solve.
inline std::pair<JointSolution, MetricsReport> fixed_grouping_solution(
    const Scenario& sc, const QosTargets& qos, const RadioConfig& config,
    const Grouping& x, Beamforming mode = Beamforming::MRT, double tol = 1e-8,
    int zf_samples = 200, std::uint64_t zf_seed = 1) {
    const ChannelStats cs = estimation_variance(sc, x, config);
    const BeamformStats b = mode == Beamforming::MRT
                                ? mrt_stats(cs, sc)
                                : zf_stats(sc, x, cs, config, zf_samples, zf_seed);
    const GammaTargets gamma = gamma_targets(qos, config, x);
    const PrimalOutcome out = solve_power(b, x, gamma, tol);
    JointSolution sol;
    sol.grouping = x;
    sol.feasible = out.status == PrimalOutcome::Status::Feasible;
    sol.power = out.power;
    sol.total_power_w = sol.feasible ? out.objective : kInf;
    sol.gap = 0.0;
    sol.iterations = 1;
    return {sol, make_metrics(b, x, out.power, gamma, out.objective)};
}

// Exhaustive joint oracle: every G^N assignment, one primal each.
inline JointSolution brute_force_joint(const Scenario& sc, const QosTargets& qos,
                                       const RadioConfig& config, int num_groups,
                                       Beamforming mode = Beamforming::MRT,
                                       double tol = 1e-8, int zf_samples = 200,
                                       std::uint64_t zf_seed = 1) {
    const int N = sc.users(), G = num_groups;
    double count = 1.0;
    for (int n = 0; n < N; ++n) {
        count *= G;
        if (count > 1e5)
            throw InvalidInputError("brute_force_joint: G^N exceeds the 1e5 guardrail");
    }
    JointSolution best;
    best.grouping = round_robin_grouping(N, G);
    std::vector<int> assign(N, 0);
    for (;;) {
        Grouping x(G, assign);
        bool usable = true;
        try {
            const ChannelStats cs = estimation_variance(sc, x, config);
            const BeamformStats b =
                mode == Beamforming::MRT
                    ? mrt_stats(cs, sc)
                    : zf_stats(sc, x, cs, config, zf_samples, zf_seed);
            const GammaTargets gamma = gamma_targets(qos, config, x);
            const PrimalOutcome out = solve_power(b, x, gamma, tol);
            if (out.status == PrimalOutcome::Status::Feasible &&
                out.objective < best.total_power_w) {
                best.feasible = true;
                best.grouping = x;
                best.power = out.power;
                best.total_power_w = out.objective;
                best.gap = 0.0;
            }
        } catch (const FrameOverflowError&) {
            usable = false;  // pilots longer than the frame: grouping unusable
        } catch (const InfeasiblePrecoderError&) {
            usable = false;  // ZF with more users than APs in a group
        }
        (void)usable;
        ++best.iterations;
        int pos = N - 1;
        while (pos >= 0 && assign[pos] == G - 1) assign[pos--] = 0;
        if (pos < 0) break;
        ++assign[pos];
    }
    return best;
}

}  // namespace cfmimo
