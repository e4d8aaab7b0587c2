// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness: sweep configuration, deterministic execution over a
// (sweep value x seed x algorithm) grid, CSV and plot-data emission.
// Each cell builds its own scenario and QoS draw, so runs are independent
// and the output is a pure function of the spec (modulo wall-clock
// timing, which can be disabled).

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cfmimo/baselines.hpp"
#include "cfmimo/gbd.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

enum class Algorithm { GPGA_EBSA, GPGA_GFSA, BCGA, GALE_S, NON_GROUPING };

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::GPGA_EBSA: return "gpga-ebsa";
        case Algorithm::GPGA_GFSA: return "gpga-gfsa";
        case Algorithm::BCGA: return "bcga";
        case Algorithm::GALE_S: return "gale-s";
        case Algorithm::NON_GROUPING: return "non-grouping";
    }
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "gpga-ebsa") return Algorithm::GPGA_EBSA;
    if (s == "gpga-gfsa") return Algorithm::GPGA_GFSA;
    if (s == "bcga") return Algorithm::BCGA;
    if (s == "gale-s") return Algorithm::GALE_S;
    if (s == "non-grouping") return Algorithm::NON_GROUPING;
    throw InvalidInputError("unknown algorithm: " + s);
}

inline Beamforming beamforming_from_string(const std::string& s) {
    if (s == "mrt") return Beamforming::MRT;
    if (s == "zf") return Beamforming::ZF;
    throw InvalidInputError("unknown beamforming: " + s);
}

enum class SweepAxis { None, Users, Aps, RateRange, Groups, CoherenceLength, Delta };

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::None: return "none";
        case SweepAxis::Users: return "users";
        case SweepAxis::Aps: return "aps";
        case SweepAxis::RateRange: return "rate-range";
        case SweepAxis::Groups: return "groups";
        case SweepAxis::CoherenceLength: return "coherence-length";
        case SweepAxis::Delta: return "delta";
    }
    return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "none") return SweepAxis::None;
    if (s == "users") return SweepAxis::Users;
    if (s == "aps") return SweepAxis::Aps;
    if (s == "rate-range") return SweepAxis::RateRange;
    if (s == "groups") return SweepAxis::Groups;
    if (s == "coherence-length") return SweepAxis::CoherenceLength;
    if (s == "delta") return SweepAxis::Delta;
    throw InvalidInputError("unknown sweep axis: " + s);
}

struct ExperimentSpec {
    int aps = 24;
    int users = 20;
    int groups = 4;
    // Desk-scale defaults keep the paper's operating regime: pilots claim
    // a sizable slice of the coherence interval, which is what makes user
    // grouping pay for itself.
    RadioConfig radio{.coherence_len = 24};
    double rate_lo_bps = 1e5;
    double rate_hi_bps = 2.5e5;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10,
                                     11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
    std::vector<Algorithm> algorithms{Algorithm::GPGA_EBSA, Algorithm::BCGA};
    std::vector<Beamforming> beamforming{Beamforming::MRT};
    double delta = 1e-6;
    int max_iterations = 0;
    double primal_tol = 1e-8;
    int zf_samples = 200;
    int jobs = 1;
    bool measure_time = true;
    SweepAxis sweep_axis = SweepAxis::None;
    std::vector<double> sweep_values{0.0};
    std::string out_dir = "results";

    void validate() const {
        radio.validate();
        if (seeds.empty()) throw InvalidInputError("spec: seeds must be nonempty");
        if (algorithms.empty()) throw InvalidInputError("spec: no algorithms");
        if (beamforming.empty()) throw InvalidInputError("spec: no beamforming modes");
        if (sweep_values.empty()) throw InvalidInputError("spec: no sweep values");
        if (!std::is_sorted(sweep_values.begin(), sweep_values.end()))
            throw InvalidInputError("spec: sweep values must be ascending");
        if (rate_lo_bps < 0.0 || rate_hi_bps < rate_lo_bps)
            throw InvalidInputError("spec: bad rate range");
    }
};

struct ResultRow {
    double sweep_value = 0.0;
    Algorithm algorithm = Algorithm::GPGA_EBSA;
    Beamforming beamforming = Beamforming::MRT;
    std::uint64_t seed = 0;
    double power_dbm = -kInf;
    double interference = 0.0;
    int iterations = 0;
    double gap = 0.0;
    double wall_ms = 0.0;
    bool feasible = false;
    std::string note;  // per-run failure reason, not part of the CSV
};

// ----------------------------------------------------------------- JSON

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    if (j.contains("scenario")) {
        const auto& sc = j.at("scenario");
        s.aps = sc.value("aps", s.aps);
        s.users = sc.value("users", s.users);
        s.groups = sc.value("groups", s.groups);
        s.radio.area_km = sc.value("area_km", s.radio.area_km);
    }
    if (j.contains("radio")) {
        const auto& r = j.at("radio");
        s.radio.bandwidth_hz = r.value("bandwidth_hz", s.radio.bandwidth_hz);
        s.radio.noise_density_dbm_per_hz =
            r.value("noise_density_dbm_per_hz", s.radio.noise_density_dbm_per_hz);
        s.radio.pilot_power_w = r.value("pilot_power_w", s.radio.pilot_power_w);
        s.radio.coherence_len = r.value("coherence_len", s.radio.coherence_len);
        s.radio.smoothing_weight = r.value("smoothing_weight", s.radio.smoothing_weight);
        s.radio.pilot_factor = r.value("pilot_factor", s.radio.pilot_factor);
        s.radio.min_distance_km = r.value("min_distance_km", s.radio.min_distance_km);
    }
    if (j.contains("qos")) {
        s.rate_lo_bps = j.at("qos").value("rate_lo_bps", s.rate_lo_bps);
        s.rate_hi_bps = j.at("qos").value("rate_hi_bps", s.rate_hi_bps);
    }
    if (j.contains("run")) {
        const auto& r = j.at("run");
        if (r.contains("seeds")) {
            s.seeds.clear();
            for (const auto& v : r.at("seeds"))
                s.seeds.push_back(v.get<std::uint64_t>());
        }
        if (r.contains("algorithms")) {
            s.algorithms.clear();
            for (const auto& v : r.at("algorithms"))
                s.algorithms.push_back(algorithm_from_string(v.get<std::string>()));
        }
        if (r.contains("beamforming")) {
            s.beamforming.clear();
            for (const auto& v : r.at("beamforming"))
                s.beamforming.push_back(beamforming_from_string(v.get<std::string>()));
        }
        s.delta = r.value("delta", s.delta);
        s.max_iterations = r.value("max_iterations", s.max_iterations);
        s.primal_tol = r.value("primal_tol", s.primal_tol);
        s.zf_samples = r.value("zf_samples", s.zf_samples);
        s.jobs = r.value("jobs", s.jobs);
        s.measure_time = r.value("measure_time", s.measure_time);
    }
    if (j.contains("sweep")) {
        const auto& sw = j.at("sweep");
        s.sweep_axis = sweep_axis_from_string(sw.value("axis", "none"));
        if (sw.contains("values")) {
            s.sweep_values.clear();
            for (const auto& v : sw.at("values")) s.sweep_values.push_back(v.get<double>());
        }
    }
    if (j.contains("out")) s.out_dir = j.at("out").value("dir", s.out_dir);
    s.validate();
    return s;
}

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
    nlohmann::json j;
    j["scenario"] = {{"aps", s.aps}, {"users", s.users}, {"groups", s.groups},
                     {"area_km", s.radio.area_km}};
    j["radio"] = {{"bandwidth_hz", s.radio.bandwidth_hz},
                  {"noise_density_dbm_per_hz", s.radio.noise_density_dbm_per_hz},
                  {"pilot_power_w", s.radio.pilot_power_w},
                  {"coherence_len", s.radio.coherence_len},
                  {"smoothing_weight", s.radio.smoothing_weight},
                  {"pilot_factor", s.radio.pilot_factor},
                  {"min_distance_km", s.radio.min_distance_km}};
    j["qos"] = {{"rate_lo_bps", s.rate_lo_bps}, {"rate_hi_bps", s.rate_hi_bps}};
    std::vector<std::string> algs, bfs;
    for (auto a : s.algorithms) algs.emplace_back(to_string(a));
    for (auto b : s.beamforming) bfs.emplace_back(to_string(b));
    j["run"] = {{"seeds", s.seeds},          {"algorithms", algs},
                {"beamforming", bfs},        {"delta", s.delta},
                {"max_iterations", s.max_iterations}, {"primal_tol", s.primal_tol},
                {"zf_samples", s.zf_samples}, {"jobs", s.jobs},
                {"measure_time", s.measure_time}};
    j["sweep"] = {{"axis", to_string(s.sweep_axis)}, {"values", s.sweep_values}};
    j["out"] = {{"dir", s.out_dir}};
    return j;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("load_spec: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return spec_from_json(j);
}

// ------------------------------------------------------------- execution

namespace detail {

struct Cell {
    double sweep_value;
    std::uint64_t seed;
    Algorithm algorithm;
    Beamforming beamforming;
};

inline ExperimentSpec apply_sweep(const ExperimentSpec& base, double value) {
    ExperimentSpec s = base;
    switch (base.sweep_axis) {
        case SweepAxis::None: break;
        case SweepAxis::Users: s.users = static_cast<int>(value); break;
        case SweepAxis::Aps: s.aps = static_cast<int>(value); break;
        case SweepAxis::RateRange: s.rate_hi_bps = value; break;
        case SweepAxis::Groups: s.groups = static_cast<int>(value); break;
        case SweepAxis::CoherenceLength:
            s.radio.coherence_len = static_cast<int>(value);
            break;
        case SweepAxis::Delta: s.delta = value; break;
    }
    return s;
}

inline ResultRow run_cell(const ExperimentSpec& base, const Cell& cell) {
    ResultRow row;
    row.sweep_value = cell.sweep_value;
    row.algorithm = cell.algorithm;
    row.beamforming = cell.beamforming;
    row.seed = cell.seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const ExperimentSpec s = apply_sweep(base, cell.sweep_value);
        const Scenario sc = generate_scenario(s.radio, s.aps, s.users, cell.seed);
        const QosTargets qos = sample_rates(s.users, s.rate_lo_bps, s.rate_hi_bps,
                                            derive_seed(cell.seed, 0x9a7e5ULL));
        const std::uint64_t zf_seed = derive_seed(cell.seed, 0x2fULL);

        JointSolution sol;
        double interference = 0.0;
        if (cell.algorithm == Algorithm::GPGA_EBSA ||
            cell.algorithm == Algorithm::GPGA_GFSA) {
            GbdConfig gc;
            gc.delta = s.delta;
            gc.max_iterations = s.max_iterations;
            gc.mode = cell.beamforming;
            gc.search = cell.algorithm == Algorithm::GPGA_EBSA ? LoopSearch::EBSA
                                                               : LoopSearch::GFSA;
            gc.primal_tol = s.primal_tol;
            gc.zf_samples = s.zf_samples;
            gc.zf_seed = zf_seed;
            auto [jsol, trace] = gpga(sc, qos, s.radio, s.groups, gc);
            sol = jsol;
            if (sol.feasible) {
                const ChannelStats cs = estimation_variance(sc, sol.grouping, s.radio);
                const BeamformStats b =
                    cell.beamforming == Beamforming::MRT
                        ? mrt_stats(cs, sc)
                        : zf_stats(sc, sol.grouping, cs, s.radio, s.zf_samples, zf_seed);
                interference = mean_interference(b, sol.grouping, sol.power);
            }
        } else if (cell.algorithm == Algorithm::NON_GROUPING) {
            auto [jsol, rep] = no_grouping_solution(sc, qos, s.radio, cell.beamforming,
                                                    s.primal_tol, s.zf_samples, zf_seed);
            sol = jsol;
            interference = rep.mean_interference;
        } else {
            const Grouping x =
                cell.algorithm == Algorithm::BCGA
                    ? random_grouping(s.users, s.groups, derive_seed(cell.seed, 0xbcULL))
                    : gale_shapley_grouping(sc, qos, s.radio, s.groups);
            auto [jsol, rep] = fixed_grouping_solution(sc, qos, s.radio, x,
                                                       cell.beamforming, s.primal_tol,
                                                       s.zf_samples, zf_seed);
            sol = jsol;
            interference = rep.mean_interference;
        }
        row.feasible = sol.feasible;
        row.power_dbm = sol.feasible ? watts_to_dbm(sol.total_power_w) : kInf;
        row.interference = interference;
        row.iterations = sol.iterations;
        row.gap = std::isfinite(sol.gap) ? sol.gap : 0.0;
    } catch (const std::exception& e) {
        row.feasible = false;
        row.power_dbm = kInf;
        row.note = e.what();
    }
    if (base.measure_time)
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    return row;
}

}  // namespace detail

// Deterministic sweep: the grid order is fixed and each cell is
// independent, so the worker count never changes the output rows.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<detail::Cell> cells;
    for (double value : spec.sweep_values)
        for (auto alg : spec.algorithms)
            for (auto bf : spec.beamforming)
                for (auto seed : spec.seeds) cells.push_back({value, seed, alg, bf});

    std::vector<ResultRow> rows(cells.size());
    const int jobs = std::max(1, spec.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            rows[i] = detail::run_cell(spec, cells[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    rows[i] = detail::run_cell(spec, cells[i]);
                }
            });
        for (auto& t : pool) t.join();
    }
    return rows;
}

// ------------------------------------------------------------------ output

inline void emit_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw InvalidInputError("emit_csv: no rows");
    os << "sweep,algorithm,beamforming,seed,power_dbm,interference,iterations,gap,"
          "wall_ms,feasible\n";
    os.precision(17);
    for (const auto& r : rows)
        os << r.sweep_value << ',' << to_string(r.algorithm) << ','
           << to_string(r.beamforming) << ',' << r.seed << ',' << r.power_dbm << ','
           << r.interference << ',' << r.iterations << ',' << r.gap << ','
           << r.wall_ms << ',' << (r.feasible ? 1 : 0) << "\n";
}

inline void emit_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream os(path);
    if (!os) throw Error("emit_csv: cannot open " + path);
    emit_csv(os, rows);
}

inline std::vector<ResultRow> parse_csv(std::istream& is) {
    std::vector<ResultRow> rows;
    std::string line;
    if (!std::getline(is, line)) throw Error("parse_csv: empty stream");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        ResultRow r;
        std::getline(ss, cell, ',');
        r.sweep_value = std::stod(cell);
        std::getline(ss, cell, ',');
        r.algorithm = algorithm_from_string(cell);
        std::getline(ss, cell, ',');
        r.beamforming = beamforming_from_string(cell);
        std::getline(ss, cell, ',');
        r.seed = std::strtoull(cell.c_str(), nullptr, 10);
        std::getline(ss, cell, ',');
        r.power_dbm = std::stod(cell);
        std::getline(ss, cell, ',');
        r.interference = std::stod(cell);
        std::getline(ss, cell, ',');
        r.iterations = std::stoi(cell);
        std::getline(ss, cell, ',');
        r.gap = std::stod(cell);
        std::getline(ss, cell, ',');
        r.wall_ms = std::stod(cell);
        std::getline(ss, cell, ',');
        r.feasible = cell == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ResultRow> parse_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("parse_csv: cannot open " + path);
    return parse_csv(is);
}

namespace detail {

inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double idx = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - lo;
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

// One series file per (algorithm, beamforming): "x median p25 p75" of the
// feasible rows' power at each sweep value.
inline void emit_plotdata(const std::vector<ResultRow>& rows, const std::string& dir) {
    if (rows.empty()) throw InvalidInputError("emit_plotdata: no rows");
    std::filesystem::create_directories(dir);
    std::map<std::pair<std::string, std::string>,
             std::map<double, std::vector<double>>>
        series;
    for (const auto& r : rows) {
        if (!r.feasible) continue;
        series[{to_string(r.algorithm), to_string(r.beamforming)}][r.sweep_value]
            .push_back(r.power_dbm);
    }
    for (const auto& [key, points] : series) {
        const std::string path = dir + "/" + key.first + "_" + key.second + ".dat";
        std::ofstream os(path);
        if (!os) throw Error("emit_plotdata: cannot open " + path);
        os << "# x median p25 p75\n";
        os.precision(17);
        for (const auto& [x, vals] : points)
            os << x << ' ' << detail::quantile(vals, 0.5) << ' '
               << detail::quantile(vals, 0.25) << ' ' << detail::quantile(vals, 0.75)
               << "\n";
    }
}

}  // namespace cfmimo
