// SPDX-License-Identifier: Apache-2.0
//
// Test-side oracles, deliberately independent of the library's
// implementation paths: literal transcriptions of the closed-form SINR
// and interference expressions with fully materialized tensors, a
// penalty-based projected-gradient solver for the cone programs, and an
// exhaustive negative differ-group cycle enumerator.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cfmimo/beamform.hpp"
#include "cfmimo/master.hpp"
#include "cfmimo/primal.hpp"
#include "cfmimo/socp.hpp"

namespace oracles {

using cfmimo::Grouping;
using cfmimo::Mat;

// Literal term-by-term transcription of the MRT SINR lower bound with the
// 4-D interference tensor materialized.
inline double naive_mrt_sinr(const Mat& beta, const cfmimo::Tensor3& alpha,
                             double sigma2, const Grouping& x, const Mat& q, int n) {
    const int M = static_cast<int>(beta.rows());
    const int N = static_cast<int>(beta.cols());
    const int G = x.groups();
    double numerator = 0.0;
    for (int m = 0; m < M; ++m) {
        double inner = 0.0;
        for (int g = 0; g < G; ++g)
            if (x.x(g, n)) inner += alpha(g, m, n);
        numerator += q(m, n) * inner;
    }
    numerator *= numerator;
    // full upsilon tensor: ups[g][m][n][i] = beta(m, n) * alpha(g, m, i)
    std::vector<double> ups(static_cast<std::size_t>(G) * M * N * N);
    auto at = [&](int g, int m, int nn, int i) -> double& {
        return ups[((static_cast<std::size_t>(g) * M + m) * N + nn) * N + i];
    };
    for (int g = 0; g < G; ++g)
        for (int m = 0; m < M; ++m)
            for (int nn = 0; nn < N; ++nn)
                for (int i = 0; i < N; ++i) at(g, m, nn, i) = beta(m, nn) * alpha(g, m, i);
    double denom = sigma2;
    for (int g = 0; g < G; ++g) {
        if (!x.x(g, n)) continue;
        for (int i = 0; i < N; ++i) {
            if (!x.x(g, i)) continue;
            for (int m = 0; m < M; ++m) denom += q(m, i) * q(m, i) * at(g, m, n, i);
        }
    }
    return numerator / denom;
}

// Literal quadruple-loop transcription of the mean-interference metric.
inline double naive_mean_interference(const Mat& beta, const cfmimo::Tensor3& alpha,
                                      const Grouping& x, const Mat& q) {
    const int M = static_cast<int>(beta.rows());
    const int N = static_cast<int>(beta.cols());
    double total = 0.0;
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < x.groups(); ++g) {
            if (!x.x(g, n)) continue;
            for (int i = 0; i < N; ++i) {
                if (!x.x(g, i)) continue;
                for (int m = 0; m < M; ++m)
                    total += q(m, i) * q(m, i) * beta(m, n) * alpha(g, m, i);
            }
        }
    return total / N;
}

// Augmented-Lagrangian projected gradient on the cone program: an
// independent first-order route. Inner solves are projected descent with
// backtracking; multiplier updates follow the classic PHR rule, so the
// penalty weight stays moderate and the answer is accurate.
struct PgResult {
    std::vector<double> v;
    double objective = 0.0;
    double max_violation = 0.0;
};

inline PgResult pg_solve(const cfmimo::ConicProblem& p, std::vector<double> v,
                         int outer_rounds = 60, int iters_per_round = 8000) {
    const int d = p.num_vars;
    const int T = static_cast<int>(p.cones.size());
    for (auto& x : v) x = std::max(x, 0.0);
    // diagonal preconditioner from the start point's magnitudes
    double vmax = 0.0;
    for (double x : v) vmax = std::max(vmax, x);
    if (vmax == 0.0) vmax = 1.0;
    std::vector<double> scale_v(d);
    for (int j = 0; j < d; ++j) scale_v[j] = std::max(v[j], 1e-3 * vmax);
    std::vector<double> mult(T, 0.0);
    double rho = 1.0;
    {
        double obj_scale = 0.0, slack_scale = 0.0;
        for (int j = 0; j < d; ++j)
            obj_scale = std::max(obj_scale,
                                 std::abs(p.quad_cost[j]) * v[j] * v[j] +
                                     std::abs(p.lin_cost[j]) * v[j]);
        for (const auto& c : p.cones)
            slack_scale = std::max(slack_scale, std::abs(c.slack(v)));
        if (slack_scale > 0.0)
            rho = std::max(1.0, obj_scale / (slack_scale * slack_scale));
    }
    std::vector<double> grad(d), cand(d);
    auto value = [&](const std::vector<double>& w) {
        double f = p.objective(w);
        for (int t = 0; t < T; ++t) {
            const double s = p.cones[t].slack(w);
            const double shifted = std::max(0.0, mult[t] / rho + s);
            f += 0.5 * rho * (shifted * shifted - (mult[t] / rho) * (mult[t] / rho));
        }
        return f;
    };
    double prev_violation = cfmimo::kInf;
    for (int round = 0; round < outer_rounds; ++round) {
        double step = 1.0;
        for (int it = 0; it < iters_per_round; ++it) {
            for (int j = 0; j < d; ++j)
                grad[j] = 2.0 * p.quad_cost[j] * v[j] + p.lin_cost[j];
            for (int t = 0; t < T; ++t) {
                const auto& c = p.cones[t];
                const double s = c.slack(v);
                const double w = rho * std::max(0.0, mult[t] / rho + s);
                if (w <= 0.0) continue;
                double r = c.offset;
                for (const auto& term : c.quad) r += term.coef * v[term.var] * v[term.var];
                r = std::sqrt(r);
                for (const auto& term : c.quad)
                    grad[term.var] += w * c.scale * term.coef * v[term.var] / r;
                for (const auto& term : c.lin) grad[term.var] -= w * term.coef;
            }
            const double f0 = value(v);
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt) {
                double gnorm2 = 0.0;
                for (int j = 0; j < d; ++j) {
                    cand[j] = std::max(
                        v[j] - step * scale_v[j] * scale_v[j] * grad[j], 0.0);
                    if (!p.upper.empty()) cand[j] = std::min(cand[j], p.upper[j]);
                    const double diff = (v[j] - cand[j]) / scale_v[j];
                    gnorm2 += diff * diff;
                }
                if (gnorm2 == 0.0) break;
                if (value(cand) <= f0 - 1e-4 / std::max(step, 1e-300) * gnorm2) {
                    v = cand;
                    step *= 1.3;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved && step < 1e-18) break;
        }
        double violation = 0.0;
        for (int t = 0; t < T; ++t) {
            const double s = p.cones[t].slack(v);
            mult[t] = std::max(0.0, mult[t] + rho * s);
            violation = std::max(violation, s);
        }
        if (violation > 0.25 * prev_violation) rho *= 4.0;
        prev_violation = std::max(violation, 0.0);
    }
    PgResult r;
    r.objective = p.objective(v);
    for (const auto& c : p.cones)
        r.max_violation = std::max(r.max_violation, c.slack(v));
    r.v = std::move(v);
    return r;
}

// Subgradient method for min over q >= 0 of max_n slack_n: the
// feasibility cross-check for infeasible declarations.
inline double min_max_slack(const std::vector<cfmimo::SocConstraint>& cones, int d,
                            std::vector<double> v, int iters = 60000) {
    double best = cfmimo::kInf;
    double scale = 0.0;
    for (auto& x : v) scale = std::max(scale, x);
    if (scale == 0.0) scale = 1.0;
    std::vector<double> grad(d);
    for (int it = 1; it <= iters; ++it) {
        int worst = 0;
        double s_max = -cfmimo::kInf;
        for (std::size_t t = 0; t < cones.size(); ++t) {
            const double s = cones[t].slack(v);
            if (s > s_max) {
                s_max = s;
                worst = static_cast<int>(t);
            }
        }
        best = std::min(best, s_max);
        std::fill(grad.begin(), grad.end(), 0.0);
        const auto& c = cones[worst];
        double r = c.offset;
        for (const auto& t : c.quad) r += t.coef * v[t.var] * v[t.var];
        r = std::sqrt(r);
        for (const auto& t : c.quad) grad[t.var] += c.scale * t.coef * v[t.var] / r;
        for (const auto& t : c.lin) grad[t.var] -= t.coef;
        double gn = 0.0;
        for (int j = 0; j < d; ++j) gn += grad[j] * grad[j];
        if (gn == 0.0) break;
        const double step = scale / (std::sqrt(gn) * std::sqrt(static_cast<double>(it)));
        for (int j = 0; j < d; ++j) v[j] = std::max(v[j] - step * grad[j], 0.0);
    }
    return best;
}

// Exhaustive enumeration of negative differ-group loops.
inline bool enumerate_negative_loop(const cfmimo::LoopGraph& gr, double eps,
                                    std::vector<int>* found = nullptr) {
    const int V = gr.nodes();
    std::vector<int> stack;
    std::vector<bool> used_group(gr.num_groups, false);
    bool found_any = false;
    std::function<void(int, int, double)> dfs = [&](int start, int at, double len) {
        if (found_any) return;
        const double back = gr.weights(at, start);
        if (stack.size() >= 2 && std::isfinite(back) && len + back < -eps) {
            found_any = true;
            if (found) *found = stack;
            return;
        }
        for (int j = start + 1; j < V; ++j) {
            if (found_any) return;
            const double w = gr.weights(at, j);
            if (!std::isfinite(w)) continue;
            const int g = gr.group_of_node(j);
            if (used_group[g]) continue;
            used_group[g] = true;
            stack.push_back(j);
            dfs(start, j, len + w);
            stack.pop_back();
            used_group[g] = false;
        }
    };
    for (int s = 0; s < V && !found_any; ++s) {
        stack = {s};
        std::fill(used_group.begin(), used_group.end(), false);
        used_group[gr.group_of_node(s)] = true;
        dfs(s, s, 0.0);
    }
    return found_any;
}

// Random differ-group loop graphs for the search tests.
inline cfmimo::LoopGraph random_graph(std::uint64_t seed, int max_nodes = 8,
                                      double shift = 0.0) {
    cfmimo::Rng rng(seed);
    const int V0 = 4 + static_cast<int>(rng.uniform_int(max_nodes - 3));
    const int G = 2 + static_cast<int>(rng.uniform_int(3));
    const int users = std::max(V0 - G, 0);
    cfmimo::LoopGraph t;
    t.num_users = users;
    t.num_groups = G;
    t.node_group.resize(users + G);
    for (int i = 0; i < users; ++i)
        t.node_group[i] = static_cast<int>(rng.uniform_int(G));
    for (int g = 0; g < G; ++g) t.node_group[users + g] = g;
    const int V = users + G;
    t.weights = Mat::Constant(V, V, cfmimo::kInf);
    for (int i = 0; i < V; ++i)
        for (int j = 0; j < V; ++j)
            if (i != j && t.node_group[i] != t.node_group[j])
                t.weights(i, j) = rng.uniform(-1.0, 1.0) + shift;
    return t;
}

}  // namespace oracles
