// SPDX-License-Identifier: Apache-2.0
//
// Outer GBD driver (GPGA): alternate primal power solves with the
// graph-based master search, maintain the incumbent and the bound pair
// (b_u, b_l), stop at delta-optimality, stagnation or the iteration cap.
//
// b_u is the running minimum over feasible primal objectives and b_l the
// running maximum of the master bound, clamped at b_u: the local-search
// master can overshoot the incumbent, which simply certifies that no
// better grouping was found.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <unordered_set>
#include <vector>

#include "cfmimo/beamform.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/grouping.hpp"
#include "cfmimo/master.hpp"
#include "cfmimo/primal.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

struct GbdConfig {
    double delta = 1e-6;
    int max_iterations = 0;  // 0: defaults to the number of users
    Beamforming mode = Beamforming::MRT;
    LoopSearch search = LoopSearch::EBSA;
    double primal_tol = 1e-8;
    int zf_samples = 200;
    std::uint64_t zf_seed = 1;
    int stagnation_window = 3;       // feasible iterations with unchanged b_u
    double stagnation_rel = 1e-12;
};

struct GbdTraceRow {
    int iteration = 0;
    bool feasible = false;
    double primal_value = 0.0;   // P_t or phi*
    double upper_bound = kInf;   // running b_u
    double lower_bound = -kInf;  // running, clamped b_l
    double master_bound_raw = -kInf;
    std::uint64_t grouping_hash = 0;
    bool repeated_grouping = false;
    double wall_ms = 0.0;
};

struct GbdTrace {
    std::vector<GbdTraceRow> rows;
    bool master_infeasible = false;
    std::string stop_reason;
};

inline void write_trace_csv(std::ostream& os, const GbdTrace& trace) {
    os << "iteration,b_u,b_l,status,grouping_hash\n";
    os.precision(17);
    for (const auto& r : trace.rows)
        os << r.iteration << ',' << r.upper_bound << ',' << r.lower_bound << ','
           << (r.feasible ? "feasible" : "infeasible") << ',' << r.grouping_hash
           << "\n";
}

struct JointSolution {
    bool feasible = false;
    Grouping grouping;
    PowerAllocation power;
    double total_power_w = kInf;
    double gap = kInf;
    int iterations = 0;
};

// Round-robin start, g = mod(n, G) + 1 over 1-indexed users.
inline Grouping initial_grouping(int n, int g) {
    return round_robin_grouping(n, g);
}

// One GPGA run. Channel statistics, beamforming tensors and gamma targets
// are recomputed for every visited grouping (pilot lengths follow group
// sizes); each cut keeps the snapshot it was generated under.
inline std::pair<JointSolution, GbdTrace> gpga(const Scenario& scenario,
                                               const QosTargets& qos,
                                               const RadioConfig& radio,
                                               int num_groups,
                                               const GbdConfig& config) {
    if (!(config.delta > 0.0)) throw InvalidInputError("gpga: delta must be positive");
    if (num_groups < 1) throw InvalidInputError("gpga: need at least one group");
    const int N = scenario.users();
    const int max_iter = config.max_iterations > 0 ? config.max_iterations : N;

    Grouping x = initial_grouping(N, num_groups);
    auto scenario_ref = std::make_shared<const Scenario>(scenario);
    std::vector<Cut> cuts;
    GbdTrace trace;
    JointSolution best;
    best.grouping = x;

    double b_u = kInf, b_l = -kInf;
    int unchanged_feasible = 0;
    std::unordered_set<std::uint64_t> visited;

    for (int k = 1; k <= max_iter; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        GbdTraceRow row;
        row.iteration = k;
        row.grouping_hash = x.hash();
        row.repeated_grouping = !visited.insert(x.hash()).second;

        const ChannelStats cs = estimation_variance(scenario, x, radio);
        auto stats = std::make_shared<BeamformStats>(
            config.mode == Beamforming::MRT
                ? mrt_stats(cs, scenario)
                : zf_stats(scenario, x, cs, radio, config.zf_samples,
                           derive_seed(config.zf_seed, static_cast<std::uint64_t>(k))));
        const GammaTargets gamma = gamma_targets(qos, radio, x);

        const PrimalOutcome outcome = solve_power(*stats, x, gamma, config.primal_tol);
        row.feasible = outcome.status == PrimalOutcome::Status::Feasible;
        row.primal_value = outcome.objective;

        if (row.feasible) {
            if (outcome.objective < b_u * (1.0 - config.stagnation_rel)) {
                unchanged_feasible = 0;
            } else {
                ++unchanged_feasible;
            }
            if (outcome.objective < b_u) {
                b_u = outcome.objective;
                best.feasible = true;
                best.grouping = x;
                best.power = outcome.power;
                best.total_power_w = b_u;
            }
        }
        cuts.push_back(make_cut(outcome, scenario_ref, radio, qos, *stats, x));

        const GbmaResult master = gbma(cuts, x, config.search);
        row.master_bound_raw = master.master_bound;
        // The local-search master bound is heuristic and may overshoot the
        // incumbent; it is clamped at the b_u of its own iteration before
        // the ratchet, which keeps the reported sequence nondecreasing. A
        // later incumbent can still undercut it: that crossing stops the
        // run and the final gap clips at zero.
        if (std::isfinite(master.master_bound))
            b_l = std::max(b_l, std::min(master.master_bound, b_u));
        row.upper_bound = b_u;
        row.lower_bound = b_l;
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        trace.rows.push_back(row);

        if (master.master_infeasible) {
            // The feasibility cuts cannot all be cleared by loop moves. The
            // search continues from the master's best-effort grouping. A
            // completely stuck master first sheds stale feasibility cuts
            // (their frozen amplitudes may rule out every grouping) and
            // keeps only the newest one; if that does not free it, stop.
            trace.master_infeasible = true;
            if (master.x == x) {
                std::vector<Cut> pruned;
                int last_feas = -1;
                for (int c = 0; c < static_cast<int>(cuts.size()); ++c)
                    if (cuts[c].kind == Cut::Kind::Feasibility) last_feas = c;
                for (int c = 0; c < static_cast<int>(cuts.size()); ++c)
                    if (cuts[c].kind == Cut::Kind::Optimality || c == last_feas)
                        pruned.push_back(cuts[c]);
                if (pruned.size() < cuts.size()) {
                    cuts = std::move(pruned);
                    const GbmaResult retry = gbma(cuts, x, config.search);
                    if (!retry.master_infeasible || !(retry.x == x)) {
                        x = retry.x;
                        continue;
                    }
                }
                trace.stop_reason = "master infeasible: " + master.note;
                break;
            }
            x = master.x;
            continue;
        }
        if (std::isfinite(b_u) && std::isfinite(row.lower_bound) &&
            b_u - row.lower_bound <= config.delta) {
            trace.stop_reason = "delta gap reached";
            break;
        }
        if (unchanged_feasible >= config.stagnation_window) {
            trace.stop_reason = "upper bound stagnated";
            break;
        }
        if (k == max_iter) {
            trace.stop_reason = "iteration cap reached";
            break;
        }
        x = master.x;
    }

    best.iterations = static_cast<int>(trace.rows.size());
    if (std::isfinite(b_u) && std::isfinite(b_l)) best.gap = std::max(b_u - b_l, 0.0);
    if (trace.stop_reason.empty()) trace.stop_reason = "iteration cap reached";
    return {std::move(best), std::move(trace)};
}

}  // namespace cfmimo
