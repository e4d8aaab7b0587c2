// SPDX-License-Identifier: Apache-2.0
//
// Narrow conic-solve interface plus a primal log-barrier interior-point
// implementation for the problem family used by the power allocation:
//
//   minimize    sum_j c_j v_j^2 + sum_j l_j v_j
//   subject to  scale_t * sqrt(offset_t + sum_k quad_tk v_k^2)
//                 - sum_k lin_tk v_k  <= 0          (cone t)
//               v >= 0
//
// with c, l, quad, lin >= 0 and offset > 0. The positive offset keeps the
// cone constraints smooth, so the barrier Newton steps need no special
// cone handling. An external conic solver could be swapped in behind
// ConicProblem/ConicSolution without touching any caller.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/common.hpp"

namespace cfmimo {

struct SocTerm {
    int var;
    double coef;
};

struct SocConstraint {
    double offset = 0.0;  // inside the sqrt, must be > 0
    double scale = 1.0;   // multiplies the sqrt (sqrt(gamma) in the SINR cones)
    std::vector<SocTerm> quad;
    std::vector<SocTerm> lin;

    double slack(const std::vector<double>& v) const {
        double s = offset;
        for (const auto& t : quad) s += t.coef * v[t.var] * v[t.var];
        double lin_part = 0.0;
        for (const auto& t : lin) lin_part += t.coef * v[t.var];
        return scale * std::sqrt(s) - lin_part;
    }
};

struct ConicProblem {
    int num_vars = 0;
    std::vector<double> quad_cost;  // c_j
    std::vector<double> lin_cost;   // l_j
    std::vector<double> upper;      // optional upper bounds (empty: none)
    std::vector<SocConstraint> cones;

    double objective(const std::vector<double>& v) const {
        double f = 0.0;
        for (int j = 0; j < num_vars; ++j)
            f += quad_cost[j] * v[j] * v[j] + lin_cost[j] * v[j];
        return f;
    }

    double upper_of(int j) const {
        return upper.empty() ? kInf : upper[j];
    }
};

struct ConicSolution {
    std::vector<double> v;
    std::vector<double> cone_duals;   // lambda_t >= 0 for slack_t <= 0
    std::vector<double> bound_duals;  // z_j >= 0 for v_j >= 0
    std::vector<double> upper_duals;  // zu_j >= 0 for v_j <= upper_j
    double objective = 0.0;
    double kkt_residual = kInf;
    int newton_iters = 0;
    bool converged = false;
    bool early_stopped = false;  // stop_when fired before convergence
    // polish diagnostics: 0 adopted, 1 skipped (barrier already tight),
    // 2 empty active set, 3 newton failure, 4 invalid point, 5 not better
    int polish_status = 0;
};

struct BarrierOptions {
    double tol = 1e-8;
    double mu0 = 1.0;
    double mu_shrink = 0.2;
    int max_newton = 900;
    // Per-level budget: weak-cost coordinates push early centers far from
    // the solution scale, so instead of chasing them the solver moves to
    // the next level and re-centers where the path comes back.
    int newton_per_level = 60;
    bool trace = false;  // one stderr line per barrier level
    // Optional early exit, checked on the unscaled iterate after every
    // accepted step. Used by the feasibility phase, whose barrier is
    // unbounded below once a strictly feasible point exists.
    std::function<bool(const std::vector<double>&)> stop_when;
};

namespace detail {

struct ScaledProgram {
    ConicProblem prob;            // scaled
    std::vector<double> var_scale;
    std::vector<double> cone_scale;
    double obj_scale = 1.0;
};

// Rescales variables so cone linear coefficients are O(1), divides each
// cone by scale*sqrt(offset), and normalizes the objective.
inline ScaledProgram scale_program(const ConicProblem& p) {
    ScaledProgram sp;
    const int d = p.num_vars;
    sp.cone_scale.resize(p.cones.size());
    for (std::size_t t = 0; t < p.cones.size(); ++t) {
        const auto& c = p.cones[t];
        if (!(c.offset > 0.0) || !(c.scale > 0.0))
            throw InvalidInputError("solve_conic: cone needs positive offset and scale");
        sp.cone_scale[t] = c.scale * std::sqrt(c.offset);
    }
    sp.var_scale.assign(d, 0.0);
    for (std::size_t t = 0; t < p.cones.size(); ++t)
        for (const auto& term : p.cones[t].lin)
            sp.var_scale[term.var] =
                std::max(sp.var_scale[term.var], term.coef / sp.cone_scale[t]);
    for (std::size_t t = 0; t < p.cones.size(); ++t)
        for (const auto& term : p.cones[t].quad) {
            if (sp.var_scale[term.var] > 0.0) continue;
            const double k = sp.cone_scale[t];
            sp.var_scale[term.var] = std::max(sp.var_scale[term.var],
                                              std::sqrt(term.coef) / k);
        }
    for (auto& s : sp.var_scale) s = (s > 0.0) ? 1.0 / s : 1.0;

    sp.prob.num_vars = d;
    sp.prob.quad_cost.resize(d);
    sp.prob.lin_cost.resize(d);
    if (!p.upper.empty()) {
        sp.prob.upper.resize(d);
        for (int j = 0; j < d; ++j) sp.prob.upper[j] = p.upper[j] / sp.var_scale[j];
    }
    double obj_mag = 0.0;
    for (int j = 0; j < d; ++j) {
        sp.prob.quad_cost[j] = p.quad_cost[j] * sp.var_scale[j] * sp.var_scale[j];
        sp.prob.lin_cost[j] = p.lin_cost[j] * sp.var_scale[j];
        obj_mag = std::max({obj_mag, sp.prob.quad_cost[j], sp.prob.lin_cost[j]});
    }
    sp.obj_scale = (obj_mag > 0.0) ? obj_mag : 1.0;
    for (int j = 0; j < d; ++j) {
        sp.prob.quad_cost[j] /= sp.obj_scale;
        sp.prob.lin_cost[j] /= sp.obj_scale;
    }
    sp.prob.cones.resize(p.cones.size());
    for (std::size_t t = 0; t < p.cones.size(); ++t) {
        const auto& c = p.cones[t];
        auto& sc = sp.prob.cones[t];
        const double k = sp.cone_scale[t];
        sc.offset = c.scale * c.scale * c.offset / (k * k);  // = 1
        sc.scale = 1.0;
        sc.quad.reserve(c.quad.size());
        for (const auto& term : c.quad) {
            const double sv = sp.var_scale[term.var];
            sc.quad.push_back({term.var, c.scale * c.scale * term.coef * sv * sv / (k * k)});
        }
        sc.lin.reserve(c.lin.size());
        for (const auto& term : c.lin)
            sc.lin.push_back({term.var, term.coef * sp.var_scale[term.var] / k});
    }
    return sp;
}

struct ConeEval {
    double r = 0.0;      // sqrt(offset + sum quad v^2)
    double slack = 0.0;  // scale * r - lin . v
};

inline ConeEval eval_cone(const SocConstraint& c, const std::vector<double>& v) {
    ConeEval e;
    double s = c.offset;
    for (const auto& t : c.quad) s += t.coef * v[t.var] * v[t.var];
    e.r = std::sqrt(s);
    double lin_part = 0.0;
    for (const auto& t : c.lin) lin_part += t.coef * v[t.var];
    e.slack = c.scale * e.r - lin_part;
    return e;
}

}  // namespace detail

// Strict interior test used by callers building start points.
inline bool strictly_feasible(const ConicProblem& p, const std::vector<double>& v,
                              double margin = 0.0) {
    for (int j = 0; j < p.num_vars; ++j)
        if (!(v[j] > 0.0) || !(v[j] < p.upper_of(j))) return false;
    for (const auto& c : p.cones)
        if (!(c.slack(v) < -margin)) return false;
    return true;
}

// Log-barrier path following from a strictly feasible start.
inline ConicSolution solve_conic(const ConicProblem& problem,
                                 const std::vector<double>& v_start,
                                 const BarrierOptions& opt = {}) {
    using Vec = Eigen::VectorXd;
    if (static_cast<int>(v_start.size()) != problem.num_vars)
        throw InvalidInputError("solve_conic: start point size mismatch");
    if (!strictly_feasible(problem, v_start))
        throw InvalidInputError("solve_conic: start point not strictly interior");

    const detail::ScaledProgram sp = detail::scale_program(problem);
    const ConicProblem& p = sp.prob;
    const int d = p.num_vars;
    const int T = static_cast<int>(p.cones.size());

    std::vector<double> v(d);
    for (int j = 0; j < d; ++j) v[j] = v_start[j] / sp.var_scale[j];

    std::vector<detail::ConeEval> ce(T);
    auto refresh = [&] {
        for (int t = 0; t < T; ++t) ce[t] = detail::eval_cone(p.cones[t], v);
    };
    refresh();

    auto barrier_value = [&](const std::vector<double>& w, double mu,
                             bool& feasible) -> double {
        feasible = true;
        double f = 0.0;
        for (int j = 0; j < d; ++j) {
            const double ub = p.upper_of(j);
            if (!(w[j] > 0.0) || !(w[j] < ub)) {
                feasible = false;
                return kInf;
            }
            f += p.quad_cost[j] * w[j] * w[j] + p.lin_cost[j] * w[j] - mu * std::log(w[j]);
            if (ub < kInf) f -= mu * std::log(ub - w[j]);
        }
        for (int t = 0; t < T; ++t) {
            const double s = detail::eval_cone(p.cones[t], w).slack;
            if (!(s < 0.0)) {
                feasible = false;
                return kInf;
            }
            f -= mu * std::log(-s);
        }
        return f;
    };

    ConicSolution sol;
    int newton_used = 0;
    bool early_stop = false;
    std::vector<double> unscaled(d);
    auto hit_stop = [&]() -> bool {
        if (!opt.stop_when) return false;
        for (int j = 0; j < d; ++j) unscaled[j] = v[j] * sp.var_scale[j];
        return opt.stop_when(unscaled);
    };
    double mu = opt.mu0;
    // Below ~0.3 tol the barrier decrements drop under double-precision
    // resolution; the remaining dual accuracy comes from the polish step.
    const double mu_floor = 0.3 * std::max(opt.tol, 1e-12);

    // scratch
    Vec grad(d), diag(d), step(d);
    std::vector<Vec> grad_slack(T), u_vec(T);
    for (int t = 0; t < T; ++t) {
        grad_slack[t] = Vec::Zero(d);
        u_vec[t] = Vec::Zero(d);
    }

    // KKT residual for given duals (scaled units): relative stationarity,
    // complementarity and cone violation.
    auto kkt_for_duals = [&](const std::vector<double>& lam, const std::vector<double>& z,
                             const std::vector<double>& zu) -> double {
        double obj = 0.0;
        for (int j = 0; j < d; ++j)
            obj += p.quad_cost[j] * v[j] * v[j] + p.lin_cost[j] * v[j];
        double comp = 0.0, feas = 0.0;
        for (int t = 0; t < T; ++t) {
            comp = std::max(comp, std::abs(lam[t] * ce[t].slack));
            feas = std::max(feas, ce[t].slack);
        }
        std::vector<double> resid(d), denom(d);
        for (int j = 0; j < d; ++j) {
            resid[j] = 2.0 * p.quad_cost[j] * v[j] + p.lin_cost[j] - z[j] + zu[j];
            denom[j] = std::abs(2.0 * p.quad_cost[j] * v[j]) + p.lin_cost[j] + z[j] + zu[j];
            comp = std::max(comp, z[j] * v[j]);
            if (p.upper_of(j) < kInf)
                comp = std::max(comp, zu[j] * (p.upper_of(j) - v[j]));
        }
        for (int t = 0; t < T; ++t) {
            const auto& c = p.cones[t];
            for (const auto& term : c.quad) {
                const double g_j = lam[t] * term.coef * v[term.var] / ce[t].r;
                resid[term.var] += g_j;
                denom[term.var] += std::abs(g_j);
            }
            for (const auto& term : c.lin) {
                resid[term.var] -= lam[t] * term.coef;
                denom[term.var] += lam[t] * term.coef;
            }
        }
        double stat = 0.0;
        for (int j = 0; j < d; ++j)
            stat = std::max(stat, std::abs(resid[j]) / std::max(denom[j], 1e-12));
        return std::max({stat, comp / (1.0 + std::abs(obj)), std::max(feas, 0.0)});
    };

    auto implied_duals = [&](std::vector<double>& lam, std::vector<double>& z,
                             std::vector<double>& zu) {
        lam.resize(T);
        z.resize(d);
        zu.assign(d, 0.0);
        for (int t = 0; t < T; ++t) lam[t] = mu / (-ce[t].slack);
        for (int j = 0; j < d; ++j) {
            z[j] = mu / v[j];
            if (p.upper_of(j) < kInf) zu[j] = mu / (p.upper_of(j) - v[j]);
        }
    };

    double kkt = kInf;
    std::vector<double> lam_prev, z_prev, zu_prev;  // implied duals one mu level back
    while (true) {
        // Newton iterations for the current mu. The proximity measure
        // decrement^2 / mu is the affine-invariant Newton decrement of the
        // self-concordant barrier; final accuracy comes from the polish.
        const double proximity = 0.05;
        for (int level_newtons = 0; level_newtons < opt.newton_per_level;
             ++level_newtons) {
            if (newton_used >= opt.max_newton) {
                std::vector<double> best(d);
                for (int j = 0; j < d; ++j) best[j] = v[j] * sp.var_scale[j];
                throw NumericalError("solve_conic: Newton iteration cap exceeded", best);
            }
            // gradient and Hessian pieces
            for (int j = 0; j < d; ++j) {
                grad[j] = 2.0 * p.quad_cost[j] * v[j] + p.lin_cost[j] - mu / v[j];
                diag[j] = 2.0 * p.quad_cost[j] + mu / (v[j] * v[j]);
                const double ub = p.upper_of(j);
                if (ub < kInf) {
                    grad[j] += mu / (ub - v[j]);
                    diag[j] += mu / ((ub - v[j]) * (ub - v[j]));
                }
            }
            std::vector<double> w_a(T), w_b(T);
            for (int t = 0; t < T; ++t) {
                const auto& c = p.cones[t];
                const double r = ce[t].r, s = ce[t].slack;
                Vec& gs = grad_slack[t];
                Vec& u = u_vec[t];
                gs.setZero();
                u.setZero();
                for (const auto& term : c.quad) u[term.var] = term.coef * v[term.var] / r;
                gs = u;
                for (const auto& term : c.lin) gs[term.var] -= term.coef;
                const double lam = mu / (-s);
                for (const auto& term : c.quad) {
                    grad[term.var] += lam * u[term.var];
                    diag[term.var] += lam * term.coef / r;
                }
                for (const auto& term : c.lin) grad[term.var] -= lam * term.coef;
                w_a[t] = mu / (s * s);
                w_b[t] = -lam / r;
            }

            // solve (D + sum_t w_a gs gs^T + w_b u u^T) step = -grad
            const int rank = 2 * T;
            bool solved = false;
            if (rank > 0 && d > 3 * rank) {
                // Woodbury with the low-rank cone terms
                Eigen::MatrixXd V(d, rank);
                Eigen::VectorXd wts(rank);
                for (int t = 0; t < T; ++t) {
                    V.col(2 * t) = grad_slack[t];
                    V.col(2 * t + 1) = u_vec[t];
                    wts[2 * t] = w_a[t];
                    wts[2 * t + 1] = w_b[t];
                }
                Vec dinv_g = -grad.array() / diag.array();
                Eigen::MatrixXd dinv_V = V.array().colwise() / diag.array();
                Eigen::MatrixXd cap = V.transpose() * dinv_V;
                for (int r2 = 0; r2 < rank; ++r2) cap(r2, r2) += 1.0 / wts[r2];
                Eigen::PartialPivLU<Eigen::MatrixXd> lu(cap);
                Vec y = lu.solve(V.transpose() * dinv_g);
                step = dinv_g - dinv_V * y;
                const double descent = grad.dot(step);
                solved = std::isfinite(descent) && descent < 0.0;
            }
            if (!solved) {
                Eigen::MatrixXd H = diag.asDiagonal();
                for (int t = 0; t < T; ++t) {
                    H.noalias() += w_a[t] * grad_slack[t] * grad_slack[t].transpose();
                    H.noalias() += w_b[t] * u_vec[t] * u_vec[t].transpose();
                }
                Eigen::LLT<Eigen::MatrixXd> llt(H);
                if (llt.info() == Eigen::Success) {
                    step = llt.solve(-grad);
                } else {
                    // regularize
                    H.diagonal().array() += 1e-12 * diag.maxCoeff() + 1e-300;
                    step = H.ldlt().solve(-grad);
                }
            }
            ++newton_used;

            const double decrement2 = -grad.dot(step);
            if (!(decrement2 > proximity * mu)) break;  // centered for this mu

            // fraction-to-boundary on the box, then backtracking on slacks
            double tmax = 1.0;
            for (int j = 0; j < d; ++j) {
                if (step[j] < 0.0) tmax = std::min(tmax, -0.99 * v[j] / step[j]);
                const double ub = p.upper_of(j);
                if (ub < kInf && step[j] > 0.0)
                    tmax = std::min(tmax, 0.99 * (ub - v[j]) / step[j]);
            }
            bool ok = false;
            double tstep = tmax;
            bool feasible = false;
            const double f0 = barrier_value(v, mu, feasible);
            std::vector<double> cand(d);
            for (int bt = 0; bt < 60 && !ok; ++bt) {
                for (int j = 0; j < d; ++j) cand[j] = v[j] + tstep * step[j];
                const double f1 = barrier_value(cand, mu, feasible);
                if (feasible && f1 <= f0 - 1e-4 * tstep * decrement2) {
                    ok = true;
                    break;
                }
                tstep *= 0.5;
            }
            if (!ok) {
                if (opt.trace) std::cerr << "  [socp] line search stalled\n";
                break;  // shrink mu
            }
            v = cand;
            refresh();
            if (hit_stop()) {
                early_stop = true;
                break;
            }
        }
        if (early_stop) break;
        if (opt.trace) {
            double worst_slack = -kInf, vmax = 0.0;
            for (int t = 0; t < T; ++t) worst_slack = std::max(worst_slack, ce[t].slack);
            for (int j = 0; j < d; ++j) vmax = std::max(vmax, v[j]);
            std::cerr << "[socp] mu=" << mu << " newton=" << newton_used
                      << " worst_slack=" << worst_slack << " vmax=" << vmax << "\n";
        }
        if (mu <= mu_floor) break;
        implied_duals(lam_prev, z_prev, zu_prev);
        mu *= opt.mu_shrink;
    }

    std::vector<double> lam, z, zu;
    implied_duals(lam, z, zu);
    kkt = kkt_for_duals(lam, z, zu);

    if (early_stop) {
        sol.v.resize(d);
        for (int j = 0; j < d; ++j) sol.v[j] = v[j] * sp.var_scale[j];
        sol.cone_duals.assign(T, 0.0);
        sol.bound_duals.assign(d, 0.0);
        sol.upper_duals.assign(d, 0.0);
        sol.objective = problem.objective(sol.v);
        sol.kkt_residual = kkt;
        sol.newton_iters = newton_used;
        sol.early_stopped = true;
        return sol;
    }

    // Active-set polish: Newton on the KKT equalities (stationarity over
    // non-boundary variables plus active cones at equality). Centering
    // alone leaves a stationarity residual proportional to the proximity
    // parameter; this step removes it when the active set is clean.
    if (kkt > 0.01 * opt.tol) {
        // Activity classification across the last two mu levels: implied
        // multipliers of active constraints converge while inactive ones
        // scale down with mu (factor mu_shrink). The midpoint ratio
        // separates the two regimes without assuming any dual magnitude.
        const double ratio = std::max(2.0 * opt.mu_shrink, 0.45);
        const double sep = std::sqrt(mu);
        std::vector<int> act, big, atub;
        for (int t = 0; t < T; ++t) {
            const bool active = (t < static_cast<int>(lam_prev.size()) && lam_prev[t] > 0.0)
                                    ? lam[t] > ratio * lam_prev[t]
                                    : -ce[t].slack < sep;
            if (active) act.push_back(t);
        }
        for (int j = 0; j < d; ++j) {
            if (p.upper_of(j) < kInf && j < static_cast<int>(zu_prev.size()) &&
                zu_prev[j] > 0.0 && zu[j] > ratio * zu_prev[j]) {
                atub.push_back(j);
                continue;
            }
            const bool interior = (j < static_cast<int>(z_prev.size()) && z_prev[j] > 0.0)
                                      ? z[j] < ratio * z_prev[j]
                                      : v[j] > sep;
            if (interior) big.push_back(j);
        }
        struct PolishPoint {
            std::vector<double> v, lam, z, zu;
            bool lam_sign_bad = false;   // some active multiplier went negative
            bool z_sign_bad = false;     // some boundary dual came out negative
            std::vector<int> bad_cones;  // candidates to drop from the active set
            std::vector<int> bad_vars;   // candidates to move into the interior set
            bool ok = false;
        };

        auto try_polish = [&](const std::vector<int>& act_set,
                              const std::vector<int>& big_set) -> PolishPoint {
            PolishPoint out;
            const int na = static_cast<int>(act_set.size());
            const int nb = static_cast<int>(big_set.size());
            if (na == 0 || nb == 0) return out;
            std::vector<int> bigpos(d, -1);
            for (int r = 0; r < nb; ++r) bigpos[big_set[r]] = r;
            std::vector<double> vbase(d, 0.0);  // boundary vars at 0, box-active at ub
            for (int j : atub) vbase[j] = p.upper_of(j);
            std::vector<double> vfull(d, 0.0);
            Eigen::VectorXd y(nb + na);
            for (int r = 0; r < nb; ++r) y[r] = v[big_set[r]];
            for (int a = 0; a < na; ++a) y[nb + a] = lam[act_set[a]];

            auto residual = [&](const Eigen::VectorXd& yy, Eigen::VectorXd& F) -> bool {
                vfull = vbase;
                for (int r = 0; r < nb; ++r) {
                    if (!(yy[r] >= 0.0)) return false;
                    vfull[big_set[r]] = yy[r];
                }
                F.setZero(nb + na);
                for (int r = 0; r < nb; ++r) {
                    const int j = big_set[r];
                    F[r] = 2.0 * p.quad_cost[j] * vfull[j] + p.lin_cost[j];
                }
                for (int a = 0; a < na; ++a) {
                    const auto& c = p.cones[act_set[a]];
                    const auto e = detail::eval_cone(c, vfull);
                    F[nb + a] = e.slack;
                    for (const auto& term : c.quad)
                        if (bigpos[term.var] >= 0)
                            F[bigpos[term.var]] +=
                                yy[nb + a] * term.coef * vfull[term.var] / e.r;
                    for (const auto& term : c.lin)
                        if (bigpos[term.var] >= 0)
                            F[bigpos[term.var]] -= yy[nb + a] * term.coef;
                }
                return true;
            };

            Eigen::VectorXd F(nb + na), Fnew(nb + na);
            if (!residual(y, F)) return out;
            for (int it = 0; it < 30 && F.norm() > 1e-15 * (1.0 + y.norm()); ++it) {
                for (int r = 0; r < nb; ++r) vfull[big_set[r]] = std::max(y[r], 0.0);
                Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nb + na, nb + na);
                double hess_scale = 0.0;
                for (int r = 0; r < nb; ++r)
                    J(r, r) = 2.0 * p.quad_cost[big_set[r]];
                for (int a = 0; a < na; ++a) {
                    const auto& c = p.cones[act_set[a]];
                    const auto e = detail::eval_cone(c, vfull);
                    const double lam_a = y[nb + a];
                    Eigen::VectorXd u = Eigen::VectorXd::Zero(nb);
                    for (const auto& term : c.quad)
                        if (bigpos[term.var] >= 0)
                            u[bigpos[term.var]] = term.coef * vfull[term.var] / e.r;
                    Eigen::VectorXd gsl = u;
                    for (const auto& term : c.lin)
                        if (bigpos[term.var] >= 0) gsl[bigpos[term.var]] -= term.coef;
                    for (int r = 0; r < nb; ++r) {
                        J(r, nb + a) = gsl[r];
                        J(nb + a, r) = gsl[r];
                    }
                    for (const auto& term : c.quad)
                        if (bigpos[term.var] >= 0)
                            J(bigpos[term.var], bigpos[term.var]) +=
                                lam_a * term.coef / e.r;
                    J.topLeftCorner(nb, nb).noalias() -=
                        (lam_a / e.r) * u * u.transpose();
                    hess_scale = std::max(hess_scale, std::abs(lam_a) / e.r);
                }
                // flat-face programs (linear objective) make the Hessian
                // block singular; tiny damping keeps the step well defined
                for (int r = 0; r < nb; ++r)
                    J(r, r) += 1e-13 * std::max(hess_scale, 1.0);
                Eigen::VectorXd dy = J.colPivHouseholderQr().solve(-F);
                if (!dy.allFinite()) break;
                double tstep = 1.0;
                bool stepped = false;
                for (int bt = 0; bt < 30; ++bt) {
                    Eigen::VectorXd ycand = y + tstep * dy;
                    if (residual(ycand, Fnew) &&
                        Fnew.norm() < (1.0 - 1e-4 * tstep) * F.norm()) {
                        y = ycand;
                        F = Fnew;
                        stepped = true;
                        break;
                    }
                    tstep *= 0.5;
                }
                if (!stepped) break;
            }
            if (!F.allFinite()) return out;

            out.v = vbase;
            out.lam.assign(T, 0.0);
            out.z.assign(d, 0.0);
            out.zu.assign(d, 0.0);
            for (int r = 0; r < nb; ++r) {
                if (y[r] < -1e-12) out.bad_vars.push_back(big_set[r]);
                out.v[big_set[r]] = std::max(y[r], 0.0);
                if (out.v[big_set[r]] > p.upper_of(big_set[r]))
                    out.v[big_set[r]] = p.upper_of(big_set[r]);
            }
            for (int a = 0; a < na; ++a) {
                const double la = y[nb + a];
                if (la < 0.0) {
                    out.lam_sign_bad = true;
                    out.bad_cones.push_back(act_set[a]);
                }
                out.lam[act_set[a]] = std::max(la, 0.0);
            }
            // bound duals of boundary variables from the stationarity residual
            std::vector<double> resid(d, 0.0);
            for (int j = 0; j < d; ++j)
                resid[j] = 2.0 * p.quad_cost[j] * out.v[j] + p.lin_cost[j];
            for (int t = 0; t < T; ++t) {
                if (out.lam[t] == 0.0) continue;
                const auto& c = p.cones[t];
                const auto e = detail::eval_cone(c, out.v);
                for (const auto& term : c.quad)
                    resid[term.var] += out.lam[t] * term.coef * out.v[term.var] / e.r;
                for (const auto& term : c.lin)
                    resid[term.var] -= out.lam[t] * term.coef;
            }
            double zscale = 0.0;
            for (int j = 0; j < d; ++j) zscale = std::max(zscale, std::abs(resid[j]));
            std::vector<bool> is_atub(d, false);
            for (int j : atub) is_atub[j] = true;
            for (int j = 0; j < d; ++j) {
                if (bigpos[j] >= 0) continue;
                if (is_atub[j]) {
                    out.zu[j] = std::max(-resid[j], 0.0);  // box multiplier
                    continue;
                }
                if (resid[j] < -1e-9 * (1.0 + zscale)) {
                    out.z_sign_bad = true;
                    out.bad_vars.push_back(j);
                }
                out.z[j] = std::max(resid[j], 0.0);
            }
            for (int t = 0; t < T; ++t) {
                if (out.lam[t] > 0.0) continue;
                if (p.cones[t].slack(out.v) > 1e-9) {
                    out.ok = false;  // inactive cone violated
                    return out;
                }
            }
            out.ok = !out.lam_sign_bad;
            return out;
        };

        // up to three active-set refinement rounds
        sol.polish_status = 2;
        for (int round = 0; round < 3 && !act.empty() && !big.empty(); ++round) {
            PolishPoint pp = try_polish(act, big);
            if (pp.ok) {
                const std::vector<double> v_saved = v;
                std::vector<detail::ConeEval> ce_saved = ce;
                v = pp.v;
                refresh();
                const double kkt_new = kkt_for_duals(pp.lam, pp.z, pp.zu);
                if (kkt_new < kkt) {
                    kkt = kkt_new;
                    lam = pp.lam;
                    z = pp.z;
                    zu = pp.zu;
                    sol.polish_status = 0;
                } else {
                    sol.polish_status = 5;
                    v = v_saved;
                    ce = ce_saved;
                }
                break;
            }
            sol.polish_status = pp.lam.empty() ? 3 : 4;
            if (pp.bad_cones.empty() && pp.bad_vars.empty()) break;
            // drop negative-multiplier cones; promote misclassified variables
            std::vector<int> act_next;
            for (int t : act)
                if (std::find(pp.bad_cones.begin(), pp.bad_cones.end(), t) ==
                    pp.bad_cones.end())
                    act_next.push_back(t);
            std::vector<int> big_next = big;
            for (int j : pp.bad_vars)
                if (std::find(big_next.begin(), big_next.end(), j) == big_next.end())
                    big_next.push_back(j);
            std::sort(big_next.begin(), big_next.end());
            act = std::move(act_next);
            big = std::move(big_next);
        }
    } else {
        sol.polish_status = 1;
    }

    // unscale
    sol.v.resize(d);
    for (int j = 0; j < d; ++j) sol.v[j] = v[j] * sp.var_scale[j];
    sol.cone_duals.resize(T);
    for (int t = 0; t < T; ++t)
        sol.cone_duals[t] = lam[t] * sp.obj_scale / sp.cone_scale[t];
    sol.bound_duals.resize(d);
    sol.upper_duals.resize(d);
    for (int j = 0; j < d; ++j) {
        sol.bound_duals[j] = z[j] * sp.obj_scale / sp.var_scale[j];
        sol.upper_duals[j] = zu[j] * sp.obj_scale / sp.var_scale[j];
    }
    sol.objective = problem.objective(sol.v);
    sol.kkt_residual = kkt;
    sol.newton_iters = newton_used;
    sol.converged = kkt <= opt.tol;
    return sol;
}

// ------------------------------------------------- plain-text exchange dump
// One program per stream: objective, cones, bounds. Round-trips through
// parse_program for cross-checking against external solvers.

inline void dump_program(std::ostream& os, const ConicProblem& p) {
    os.precision(17);
    os << "conic-program v1\n";
    os << "vars " << p.num_vars << "\n";
    os << "quadcost";
    for (double c : p.quad_cost) os << ' ' << c;
    os << "\nlincost";
    for (double c : p.lin_cost) os << ' ' << c;
    os << "\n";
    for (const auto& c : p.cones) {
        os << "cone offset " << c.offset << " scale " << c.scale << "\n quad";
        for (const auto& t : c.quad) os << ' ' << t.var << ':' << t.coef;
        os << "\n lin";
        for (const auto& t : c.lin) os << ' ' << t.var << ':' << t.coef;
        os << "\n";
    }
    os << "bounds nonneg all\nend\n";
}

inline ConicProblem parse_program(std::istream& is) {
    ConicProblem p;
    std::string line;
    if (!std::getline(is, line) || line != "conic-program v1")
        throw Error("parse_program: bad magic");
    auto parse_terms = [](const std::string& body) {
        std::vector<SocTerm> terms;
        std::stringstream ss(body);
        std::string tok;
        while (ss >> tok) {
            const auto colon = tok.find(':');
            terms.push_back({std::stoi(tok.substr(0, colon)),
                             std::stod(tok.substr(colon + 1))});
        }
        return terms;
    };
    while (std::getline(is, line)) {
        if (line == "end") break;
        std::stringstream ss(line);
        std::string kw;
        ss >> kw;
        if (kw == "vars") {
            ss >> p.num_vars;
        } else if (kw == "quadcost") {
            double c;
            while (ss >> c) p.quad_cost.push_back(c);
        } else if (kw == "lincost") {
            double c;
            while (ss >> c) p.lin_cost.push_back(c);
        } else if (kw == "cone") {
            SocConstraint c;
            std::string tag;
            ss >> tag >> c.offset >> tag >> c.scale;
            std::string quad_line, lin_line;
            std::getline(is, quad_line);
            std::getline(is, lin_line);
            c.quad = parse_terms(quad_line.substr(quad_line.find("quad") + 4));
            c.lin = parse_terms(lin_line.substr(lin_line.find("lin") + 3));
            p.cones.push_back(std::move(c));
        } else if (kw == "bounds") {
            // nonneg all: implicit
        }
    }
    return p;
}

}  // namespace cfmimo
