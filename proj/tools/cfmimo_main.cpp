// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: `run` executes a sweep spec and writes CSV plus
// plot data, `oracle` compares the GBD solver against the exhaustive
// joint search on small instances, `check` runs a fast invariant suite.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "cfmimo/baselines.hpp"
#include "cfmimo/gbd.hpp"
#include "cfmimo/harness.hpp"
#include "cfmimo/master.hpp"

namespace fs = std::filesystem;
using namespace cfmimo;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

fs::path resolve_out_dir(const std::string& dir) {
    fs::path p(dir);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("CFMIMO_OUT_ROOT")) return fs::path(root) / p;
    return p;
}

int cmd_run(const std::string& spec_path, const std::string& seeds_arg,
            const std::string& out_arg, const std::string& algorithms_arg,
            const std::string& beamforming_arg, int jobs_arg, double delta_arg) {
    ExperimentSpec spec = load_spec(spec_path);
    if (!seeds_arg.empty()) {
        spec.seeds.clear();
        for (const auto& s : split_list(seeds_arg))
            spec.seeds.push_back(std::strtoull(s.c_str(), nullptr, 10));
    }
    if (!out_arg.empty()) spec.out_dir = out_arg;
    if (!algorithms_arg.empty()) {
        spec.algorithms.clear();
        for (const auto& s : split_list(algorithms_arg))
            spec.algorithms.push_back(algorithm_from_string(s));
    }
    if (!beamforming_arg.empty()) {
        spec.beamforming.clear();
        for (const auto& s : split_list(beamforming_arg))
            spec.beamforming.push_back(beamforming_from_string(s));
    }
    if (jobs_arg > 0) spec.jobs = jobs_arg;
    if (delta_arg > 0.0) spec.delta = delta_arg;
    spec.validate();

    const fs::path out = resolve_out_dir(spec.out_dir);
    fs::create_directories(out);
    {
        std::ofstream os(out / "spec.resolved.json");
        os << spec_to_json(spec).dump(2) << "\n";
    }

    const std::vector<ResultRow> rows = run_experiment(spec);
    emit_csv((out / "results.csv").string(), rows);
    emit_plotdata(rows, (out / "plotdata").string());

    int failures = 0;
    std::ofstream errlog;
    for (const auto& r : rows) {
        if (r.note.empty()) continue;
        if (!errlog.is_open()) errlog.open(out / "errors.log");
        errlog << to_string(r.algorithm) << ' ' << to_string(r.beamforming)
               << " sweep=" << r.sweep_value << " seed=" << r.seed << ": " << r.note
               << "\n";
        ++failures;
    }
    std::cout << "wrote " << rows.size() << " rows to " << (out / "results.csv")
              << (failures ? " (" + std::to_string(failures) + " failed runs)" : "")
              << "\n";
    return failures == 0 ? 0 : 1;
}

int cmd_oracle(const std::string& spec_path) {
    const ExperimentSpec spec = load_spec(spec_path);
    double combos = 1.0;
    for (int n = 0; n < spec.users; ++n) {
        combos *= spec.groups;
        if (combos > 1e5) {
            std::cerr << "oracle: G^N exceeds the 1e5 guardrail; use a smaller instance\n";
            return 2;
        }
    }
    int agree = 0;
    for (auto seed : spec.seeds) {
        const Scenario sc = generate_scenario(spec.radio, spec.aps, spec.users, seed);
        const QosTargets qos = sample_rates(spec.users, spec.rate_lo_bps,
                                            spec.rate_hi_bps,
                                            derive_seed(seed, 0x9a7e5ULL));
        GbdConfig gc;
        gc.delta = spec.delta;
        gc.max_iterations = spec.max_iterations;
        gc.primal_tol = spec.primal_tol;
        auto [sol, trace] = gpga(sc, qos, spec.radio, spec.groups, gc);
        const JointSolution best =
            brute_force_joint(sc, qos, spec.radio, spec.groups);
        const bool both_infeasible = !sol.feasible && !best.feasible;
        const bool match = both_infeasible ||
                           (sol.feasible && best.feasible &&
                            std::abs(sol.total_power_w - best.total_power_w) <=
                                std::max(spec.delta, 1e-6 * best.total_power_w));
        agree += match;
        std::cout << "seed " << seed << ": gpga=" << sol.total_power_w
                  << " brute=" << best.total_power_w << " iters=" << sol.iterations
                  << (match ? "  agree" : "  DISAGREE") << "\n";
    }
    std::cout << agree << "/" << spec.seeds.size() << " instances agree\n";
    return agree == static_cast<int>(spec.seeds.size()) ? 0 : 1;
}

int cmd_check() {
    int failures = 0;
    auto report = [&](const std::string& name, bool pass) {
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << "\n";
        if (!pass) ++failures;
    };

    report("path loss reference points",
           std::abs(path_loss_db(1.0) - 128.1) < 1e-12 &&
               std::abs(path_loss_db(10.0) - 165.7) < 1e-12 &&
               std::abs(path_loss_db(0.1) - 90.5) < 1e-12);

    RadioConfig cfg;
    report("noise power at 20 MHz",
           std::abs(noise_power_w(cfg) - 7.962143411069971e-14) < 1e-25);

    bool alpha_ok = true;
    {
        const Scenario sc = generate_scenario(cfg, 8, 8, 3);
        const Grouping x = round_robin_grouping(8, 2);
        const ChannelStats cs = estimation_variance(sc, x, cfg);
        for (int g = 0; g < 2 && alpha_ok; ++g)
            for (int m = 0; m < 8 && alpha_ok; ++m)
                for (int n = 0; n < 8; ++n)
                    if (!(cs.alpha(g, m, n) < sc.beta(m, n))) {
                        alpha_ok = false;
                        break;
                    }
    }
    report("estimation variance below channel gain", alpha_ok);

    bool ident_ok = true, loop_ok = true, kkt_ok = true, sinr_ok = true;
    for (int seed = 1; seed <= 5; ++seed) {
        const Scenario sc = generate_scenario(cfg, 8, 8, seed);
        const Grouping x = round_robin_grouping(8, 2);
        const QosTargets qos = sample_rates(8, 1e5, 6e5, seed);
        const ChannelStats cs = estimation_variance(sc, x, cfg);
        const BeamformStats b = mrt_stats(cs, sc);
        const GammaTargets gamma = gamma_targets(qos, cfg, x);
        const PrimalOutcome out = solve_power(b, x, gamma, 1e-8);
        kkt_ok = kkt_ok && out.kkt_residual <= 1e-6;
        if (out.status == PrimalOutcome::Status::Feasible) {
            for (int n = 0; n < 8; ++n)
                if (gamma.gamma[n] > 0.0)
                    sinr_ok = sinr_ok &&
                              sinr(b, x, out.power, n) >= gamma.gamma[n] * (1 - 1e-5);
            auto scp = std::make_shared<const Scenario>(sc);
            const Cut cut = make_cut(out, scp, cfg, qos, b, x);
            double sum = 0.0;
            for (int g = 0; g < 2; ++g) sum += group_weight(cut, x, g);
            ident_ok = ident_ok &&
                       std::abs(sum - cut_value(cut, x)) <=
                           1e-9 * (1.0 + std::abs(sum));
            const LoopGraph gr = build_graph(cut, x);
            std::mt19937_64 rng(seed);
            for (int t = 0; t < 20; ++t) {
                const int i = static_cast<int>(rng() % gr.nodes());
                const int j = static_cast<int>(rng() % gr.nodes());
                if (!std::isfinite(gr.weights(i, j)) ||
                    !std::isfinite(gr.weights(j, i)))
                    continue;
                const Loop lp = make_loop(gr, {i, j});
                const double dl = cut_value(cut, apply_loop(x, lp)) - cut_value(cut, x);
                loop_ok = loop_ok &&
                          std::abs(dl - lp.total_weight) <=
                              1e-9 * (1.0 + std::abs(cut_value(cut, x)));
            }
        }
    }
    report("primal KKT residual within tolerance", kkt_ok);
    report("achieved SINR meets targets", sinr_ok);
    report("group weights sum to the Lagrangian", ident_ok);
    report("loop weights equal the Lagrangian change", loop_ok);

    return failures;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cell-free massive MIMO joint power and grouping optimizer"};
    app.require_subcommand(1);

    std::string spec_path, seeds_arg, out_arg, algorithms_arg, beamforming_arg;
    int jobs_arg = 0;
    double delta_arg = 0.0;

    auto* run = app.add_subcommand("run", "execute a sweep described by a spec file");
    run->add_option("spec", spec_path, "JSON experiment spec")->required();
    run->add_option("--seeds", seeds_arg, "comma-separated seed list override");
    run->add_option("--out", out_arg, "output directory override");
    run->add_option("--algorithms", algorithms_arg, "comma-separated algorithm list");
    run->add_option("--beamforming", beamforming_arg, "comma-separated mode list");
    run->add_option("--jobs", jobs_arg, "worker threads");
    run->add_option("--delta", delta_arg, "GBD stopping gap");

    auto* oracle = app.add_subcommand(
        "oracle", "compare against exhaustive search on a tiny spec");
    oracle->add_option("spec", spec_path, "JSON experiment spec")->required();

    app.add_subcommand("check", "run the built-in invariant suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(spec_path, seeds_arg, out_arg, algorithms_arg,
                           beamforming_arg, jobs_arg, delta_arg);
        if (oracle->parsed()) return cmd_oracle(spec_path);
        return cmd_check();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
