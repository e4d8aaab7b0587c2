// SPDX-License-Identifier: Apache-2.0
//
// Fixed-grouping power minimization: the SOC program S^(k), its
// feasibility relaxation S2^(k) with a common violation variable, and the
// partial Lagrangians whose values drive the GBD master problem.
//
// Groups do not interfere across slots, so S^(k) decomposes into one cone
// program per group. S2^(k) keeps a single violation level: each group
// minimizes its own worst violation and the reported phi* is the maximum;
// the dual certificate (sum nu = 1) is taken from the group attaining it.

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cfmimo/beamform.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/grouping.hpp"
#include "cfmimo/socp.hpp"

namespace cfmimo {

// SOC slack of user n at grouping x with frozen coefficient tensors:
//   sqrt(gamma_n) * sqrt(sigma^2 + interference) - signal
// Nonpositive iff the SINR target of n is met.
inline double soc_slack(const BeamformStats& b, const Grouping& x, const Mat& q,
                        const GammaTargets& gamma, int n) {
    const int g = x.group_of(n);
    const int M = b.num_aps;
    double interf = b.sigma2;
    for (int i : x.members(g))
        for (int m = 0; m < M; ++m)
            interf += q(m, i) * q(m, i) * b.upsilon(g, m, n, i);
    double signal = 0.0;
    for (int m = 0; m < M; ++m) signal += q(m, n) * b.theta(g, m, n);
    return std::sqrt(interf) * std::sqrt(gamma.gamma[n]) - signal;
}

// P_t(q, x) = sum_mn q_mn^2 * phi of the group user n occupies under x.
inline double total_power(const BeamformStats& b, const Grouping& x, const Mat& q) {
    const int M = b.num_aps;
    double p = 0.0;
    for (int n = 0; n < x.users(); ++n) {
        const int g = x.group_of(n);
        for (int m = 0; m < M; ++m) p += q(m, n) * q(m, n) * b.phi(g, m, n);
    }
    return p;
}

// Partial Lagrangian L(q, lambda, x) = P_t + sum_n lambda_n slack_n.
// Pure in x: master-problem cuts evaluate it at groupings other than the
// one the tensors were generated for.
inline double lagrangian(const Mat& q, const std::vector<double>& lambda,
                         const Grouping& x, const BeamformStats& b,
                         const GammaTargets& gamma) {
    double val = total_power(b, x, q);
    for (int n = 0; n < x.users(); ++n) {
        if (lambda[n] == 0.0) continue;
        val += lambda[n] * soc_slack(b, x, q, gamma, n);
    }
    return val;
}

// L'(q, nu, x) = sum_n nu_n slack_n (no power term).
inline double lagrangian_infeasible(const Mat& q, const std::vector<double>& nu,
                                    const Grouping& x, const BeamformStats& b,
                                    const GammaTargets& gamma) {
    double val = 0.0;
    for (int n = 0; n < x.users(); ++n) {
        if (nu[n] == 0.0) continue;
        val += nu[n] * soc_slack(b, x, q, gamma, n);
    }
    return val;
}

struct PrimalOutcome {
    enum class Status { Feasible, Infeasible };
    Status status = Status::Feasible;
    PowerAllocation power;
    double objective = 0.0;          // P_t if feasible, violation phi* otherwise
    std::vector<double> duals;       // lambda (feasible) or nu (infeasible)
    double kkt_residual = 0.0;
};

namespace detail {

struct GroupProgram {
    int g = -1;
    std::vector<int> active;  // members with gamma > 0, variable-block order
    ConicProblem prob;        // without the violation variable
    bool zf = false;
    int num_aps = 0;
};

// Variable layout: MRT -> active-member-major blocks of M amplitudes,
// ZF -> one shared amplitude per active member.
inline GroupProgram build_group_program(const BeamformStats& b, const Grouping& x,
                                        const GammaTargets& gamma, int g) {
    GroupProgram gp;
    gp.g = g;
    gp.zf = b.mode == Beamforming::ZF;
    gp.num_aps = b.num_aps;
    for (int n : x.members(g))
        if (gamma.gamma[n] > 0.0) gp.active.push_back(n);
    const int M = b.num_aps;
    const int U = static_cast<int>(gp.active.size());
    const int d = gp.zf ? U : U * M;
    gp.prob.num_vars = d;
    gp.prob.quad_cost.assign(d, 0.0);
    gp.prob.lin_cost.assign(d, 0.0);
    for (int a = 0; a < U; ++a) {
        const int i = gp.active[a];
        if (gp.zf) {
            double c = 0.0;
            for (int m = 0; m < M; ++m) c += b.phi(g, m, i);
            gp.prob.quad_cost[a] = c;
        } else {
            for (int m = 0; m < M; ++m)
                gp.prob.quad_cost[a * M + m] = b.phi(g, m, i);
        }
    }
    for (int a = 0; a < U; ++a) {
        const int n = gp.active[a];
        SocConstraint cone;
        cone.offset = b.sigma2;
        cone.scale = std::sqrt(gamma.gamma[n]);
        for (int bidx = 0; bidx < U; ++bidx) {
            const int i = gp.active[bidx];
            if (gp.zf) {
                double coef = 0.0;
                for (int m = 0; m < M; ++m) coef += b.upsilon(g, m, n, i);
                if (coef > 0.0) cone.quad.push_back({bidx, coef});
            } else {
                for (int m = 0; m < M; ++m) {
                    const double coef = b.upsilon(g, m, n, i);
                    if (coef > 0.0) cone.quad.push_back({bidx * M + m, coef});
                }
            }
        }
        if (gp.zf) {
            cone.lin.push_back({a, 1.0});  // sum_m (1/M) collapses to the shared amplitude
        } else {
            for (int m = 0; m < M; ++m) {
                const double coef = b.theta(g, m, n);
                if (coef > 0.0) cone.lin.push_back({a * M + m, coef});
            }
        }
        gp.prob.cones.push_back(std::move(cone));
    }
    return gp;
}

// Classic fixed-point power scaling; returns a strictly interior point of
// the group program when the targets are comfortably feasible.
inline std::optional<std::vector<double>> interior_by_power_iteration(
    const GroupProgram& gp) {
    const int U = static_cast<int>(gp.active.size());
    if (U == 0) return std::vector<double>{};
    const int d = gp.prob.num_vars;
    std::vector<double> v(d, 0.0);
    // per-member equal-amplitude baseline meeting the noise-only target
    for (int a = 0; a < U; ++a) {
        const auto& cone = gp.prob.cones[a];
        double lin_sum = 0.0;
        for (const auto& t : cone.lin) lin_sum += t.coef;
        if (!(lin_sum > 0.0)) return std::nullopt;  // no usable signal weight
        const double amp = cone.scale * std::sqrt(cone.offset) / lin_sum;
        for (const auto& t : cone.lin) v[t.var] = amp;
    }
    const std::vector<double> base = v;
    bool feasible_point = false;
    for (int it = 0; it < 30 && !feasible_point; ++it) {
        bool all_neg = true;
        std::vector<double> factor(U, 1.0);
        for (int a = 0; a < U; ++a) {
            const auto& cone = gp.prob.cones[a];
            double s = cone.offset;
            for (const auto& t : cone.quad) s += t.coef * v[t.var] * v[t.var];
            double lin_part = 0.0;
            for (const auto& t : cone.lin) lin_part += t.coef * v[t.var];
            const double need = cone.scale * std::sqrt(s);
            if (!(lin_part > 0.0)) return std::nullopt;
            factor[a] = need / lin_part * 1.05;
            if (need - lin_part >= -1e-9 * cone.scale * std::sqrt(cone.offset))
                all_neg = false;
        }
        if (all_neg) {
            feasible_point = true;
            break;
        }
        for (int a = 0; a < U; ++a) {
            const auto& cone = gp.prob.cones[a];
            for (const auto& t : cone.lin) v[t.var] *= factor[a];
        }
        // diverging scaling means the group is (near-)infeasible
        for (int j = 0; j < d; ++j)
            if (v[j] > 1e12 * std::max(base[j], 1e-300)) return std::nullopt;
    }
    if (!feasible_point && !strictly_feasible(gp.prob, v)) return std::nullopt;
    // the scaling loop overshoots; walk back toward the boundary so the
    // barrier starts near the natural solution scale
    double kmin = kInf;
    for (const auto& cone : gp.prob.cones)
        kmin = std::min(kmin, cone.scale * std::sqrt(cone.offset));
    const double margin = 1e-3 * (kmin < kInf ? kmin : 0.0);
    for (int back = 0; back < 200; ++back) {
        std::vector<double> smaller = v;
        for (auto& val : smaller) val /= 1.25;
        if (!strictly_feasible(gp.prob, smaller, margin)) break;
        v = smaller;
    }
    return v;
}

struct Phase1Result {
    double phi_star = 0.0;
    std::vector<double> nu;  // per active member
    std::vector<double> v;   // group variables at the S2 optimum
    double kkt = 0.0;
    bool found_interior = false;  // stopped early on a strictly feasible point
};

// S2 for one group: minimize the common violation phi subject to
// slack_n - phi <= 0 and phi >= 0. The zero-power point shows
// phi* <= max_n sqrt(gamma_n) sigma, so a redundant cap on phi keeps the
// costless amplitude variables from ballooning along the central path.
inline Phase1Result solve_group_phase1(const GroupProgram& gp,
                                       const BarrierOptions& opt) {
    const int d = gp.prob.num_vars;
    ConicProblem p2 = gp.prob;
    p2.num_vars = d + 1;
    p2.quad_cost.assign(d + 1, 0.0);  // S2 minimizes the violation only
    p2.lin_cost.assign(d + 1, 0.0);
    p2.lin_cost[d] = 1.0;
    for (auto& cone : p2.cones) cone.lin.push_back({d, 1.0});

    double kmax = 0.0;
    for (const auto& cone : gp.prob.cones)
        kmax = std::max(kmax, cone.scale * std::sqrt(cone.offset));
    p2.upper.assign(d + 1, kInf);
    p2.upper[d] = 2.2 * kmax;

    // start: near-zero amplitudes, violation level above the q = 0 slacks
    std::vector<double> v0(d + 1, 0.0);
    for (int a = 0; a < static_cast<int>(gp.active.size()); ++a) {
        const auto& cone = gp.prob.cones[a];
        double lin_sum = 0.0;
        for (const auto& t : cone.lin) lin_sum += t.coef;
        if (lin_sum > 0.0) {
            const double amp = cone.scale * std::sqrt(cone.offset) / lin_sum;
            for (const auto& t : cone.lin) v0[t.var] = std::max(v0[t.var], 1e-3 * amp);
        }
    }
    for (int j = 0; j < d; ++j) v0[j] = std::max(v0[j], 1e-9 * kmax);
    double worst = 0.0;
    for (const auto& cone : gp.prob.cones) {
        std::vector<double> vq(v0.begin(), v0.begin() + d);
        worst = std::max(worst, cone.slack(vq));
    }
    v0[d] = std::min(std::max(1.2 * worst, 0.5 * kmax), 2.0 * kmax);

    // The violation barrier is unbounded below once the group is strictly
    // feasible, so stop as soon as every real cone clears zero.
    BarrierOptions opt1 = opt;
    opt1.stop_when = [&gp](const std::vector<double>& vv) {
        std::vector<double> q(vv.begin(), vv.begin() + gp.prob.num_vars);
        for (const auto& cone : gp.prob.cones) {
            const double margin = 1e-6 * cone.scale * std::sqrt(cone.offset);
            if (!(cone.slack(q) < -margin)) return false;
        }
        return true;
    };

    const ConicSolution sol = solve_conic(p2, v0, opt1);
    Phase1Result r;
    r.phi_star = sol.v[d];
    r.nu = sol.cone_duals;
    r.v.assign(sol.v.begin(), sol.v.begin() + d);
    r.kkt = sol.kkt_residual;
    r.found_interior = sol.early_stopped;
    return r;
}

}  // namespace detail

// Solves S^(k) at the given grouping; falls back to the violation problem
// S2^(k) when the SINR targets cannot all be met.
inline PrimalOutcome solve_power(const BeamformStats& b, const Grouping& x,
                                 const GammaTargets& gamma, double tol = 1e-8) {
    if (static_cast<int>(gamma.gamma.size()) != x.users())
        throw InvalidInputError("solve_power: gamma size mismatch");
    double gamma_max = 0.0;
    for (double g : gamma.gamma) {
        if (!std::isfinite(g) || g < 0.0)
            throw InvalidInputError("solve_power: gamma must be finite and >= 0");
        gamma_max = std::max(gamma_max, g);
    }
    if (!(tol > 0.0)) throw InvalidInputError("solve_power: tol must be positive");

    const int M = b.num_aps, N = x.users(), G = x.groups();
    BarrierOptions opt;
    opt.tol = tol;

    PrimalOutcome out;
    out.power.mode = b.mode;
    out.power.q = Mat::Zero(M, N);
    out.duals.assign(N, 0.0);
    out.kkt_residual = 0.0;

    if (gamma_max == 0.0) return out;  // all targets trivial: zero power

    const double infeas_threshold = 1e-7 * std::sqrt(b.sigma2 * gamma_max);

    struct GroupState {
        detail::GroupProgram gp;
        std::optional<std::vector<double>> interior;
        std::optional<detail::Phase1Result> phase1;
    };
    std::vector<GroupState> states;
    states.reserve(G);
    double phi_star = 0.0;
    double phase1_kkt = 0.0;
    int worst_group = -1;
    for (int g = 0; g < G; ++g) {
        GroupState st;
        st.gp = detail::build_group_program(b, x, gamma, g);
        if (!st.gp.active.empty()) {
            st.interior = detail::interior_by_power_iteration(st.gp);
            if (!st.interior) {
                st.phase1 = detail::solve_group_phase1(st.gp, opt);
                if (st.phase1->found_interior) {
                    st.interior = st.phase1->v;
                } else {
                    phase1_kkt = std::max(phase1_kkt, st.phase1->kkt);
                    if (st.phase1->phi_star > phi_star) {
                        phi_star = st.phase1->phi_star;
                        worst_group = g;
                    }
                }
            }
        }
        states.push_back(std::move(st));
    }

    auto scatter = [&](const detail::GroupProgram& gp, const std::vector<double>& v) {
        for (int a = 0; a < static_cast<int>(gp.active.size()); ++a) {
            const int i = gp.active[a];
            if (gp.zf) {
                for (int m = 0; m < M; ++m) out.power.q(m, i) = v[a];
            } else {
                for (int m = 0; m < M; ++m) out.power.q(m, i) = v[a * M + m];
            }
        }
    };

    if (phi_star > infeas_threshold) {
        // Infeasible: report the worst violation and its dual certificate.
        out.status = PrimalOutcome::Status::Infeasible;
        out.objective = phi_star;
        out.kkt_residual = phase1_kkt;
        for (auto& st : states) {
            if (st.gp.active.empty()) continue;
            if (st.phase1)
                scatter(st.gp, st.phase1->v);
            else if (st.interior)
                scatter(st.gp, *st.interior);
        }
        const auto& ws = states[worst_group];
        for (int a = 0; a < static_cast<int>(ws.gp.active.size()); ++a)
            out.duals[ws.gp.active[a]] = ws.phase1->nu[a];
        return out;
    }

    // Feasible: per-group cone solves.
    double objective = 0.0;
    for (auto& st : states) {
        if (st.gp.active.empty()) continue;
        std::vector<double> start;
        if (st.interior) {
            start = *st.interior;
        } else {
            // scale the violation-minimizing point into the strict interior
            start = st.phase1->v;
            for (auto& val : start) val = std::max(val, 1e-300);
            bool ok = false;
            for (int attempt = 0; attempt < 60; ++attempt) {
                if (strictly_feasible(st.gp.prob, start)) {
                    ok = true;
                    break;
                }
                for (auto& val : start) val *= 2.0;
            }
            if (!ok)
                throw NumericalError(
                    "solve_power: no strict interior found for group " +
                        std::to_string(st.gp.g) + " (feasible at boundary)",
                    st.phase1->v);
        }
        const ConicSolution sol = solve_conic(st.gp.prob, start, opt);
        objective += sol.objective;
        out.kkt_residual = std::max(out.kkt_residual, sol.kkt_residual);
        scatter(st.gp, sol.v);
        for (int a = 0; a < static_cast<int>(st.gp.active.size()); ++a)
            out.duals[st.gp.active[a]] = sol.cone_duals[a];
    }
    out.status = PrimalOutcome::Status::Feasible;
    out.objective = objective;
    return out;
}

// Dumps the per-group cone programs of S^(k) in the exchange format.
inline void dump_primal_programs(std::ostream& os, const BeamformStats& b,
                                 const Grouping& x, const GammaTargets& gamma) {
    for (int g = 0; g < x.groups(); ++g) {
        const auto gp = detail::build_group_program(b, x, gamma, g);
        os << "# group " << g << "\n";
        dump_program(os, gp.prob);
    }
}

}  // namespace cfmimo
