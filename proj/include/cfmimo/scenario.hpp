// SPDX-License-Identifier: Apache-2.0
//
// Deployment generation: random AP/user placement over a square area,
// log-distance path loss, noise power and QoS rate targets.

#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/common.hpp"
#include "cfmimo/rng.hpp"

namespace cfmimo {

using Mat = Eigen::MatrixXd;

struct Point2D {
    double x_km = 0.0;
    double y_km = 0.0;
};

struct RadioConfig {
    double bandwidth_hz = 20e6;
    double noise_density_dbm_per_hz = -174.0;
    double pilot_power_w = 0.2;          // rho_r
    int coherence_len = 200;             // tau_c, samples per coherence interval
    double area_km = 3.0;                // square side
    double smoothing_weight = 0.9;       // w for ZF eta exponential smoothing
    double min_distance_km = 0.01;       // path-loss clamp, 10 m default
    double pilot_factor = 1.0;           // tau_g = pilot_factor * U_g

    void validate() const {
        if (!(bandwidth_hz > 0.0))
            throw InvalidInputError("RadioConfig: bandwidth must be positive");
        if (!(pilot_power_w > 0.0))
            throw InvalidInputError("RadioConfig: pilot power must be positive");
        if (coherence_len < 1)
            throw InvalidInputError("RadioConfig: coherence_len must be >= 1");
        if (!(area_km > 0.0))
            throw InvalidInputError("RadioConfig: area must be positive");
        if (smoothing_weight < 0.0 || smoothing_weight > 1.0)
            throw InvalidInputError("RadioConfig: smoothing weight not in [0,1]");
        if (!(min_distance_km > 0.0))
            throw InvalidInputError("RadioConfig: minimum distance must be positive");
        if (!(pilot_factor > 0.0))
            throw InvalidInputError("RadioConfig: pilot factor must be positive");
    }
};

// sigma^2 = dbm-to-watts(noise density) * bandwidth
inline double noise_power_w(const RadioConfig& config) {
    config.validate();
    return dbm_to_watts(config.noise_density_dbm_per_hz) * config.bandwidth_hz;
}

// 128.1 + 37.6 log10(d [km]); d clamped below min_distance_km.
inline double path_loss_db(double distance_km, double min_distance_km = 0.01) {
    const double d = std::max(distance_km, min_distance_km);
    if (!(d > 0.0))
        throw InvalidInputError("path_loss_db: nonpositive distance");
    return 128.1 + 37.6 * std::log10(d);
}

// Linear-scale large-scale gain beta = 10^(-loss/10).
inline double path_gain(double distance_km, double min_distance_km = 0.01) {
    return db_to_linear(-path_loss_db(distance_km, min_distance_km));
}

struct Scenario {
    std::vector<Point2D> ap_positions;
    std::vector<Point2D> user_positions;
    Mat beta;  // M x N, linear scale, all entries > 0
    std::uint64_t seed = 0;

    int aps() const { return static_cast<int>(ap_positions.size()); }
    int users() const { return static_cast<int>(user_positions.size()); }
};

inline double distance_km(const Point2D& a, const Point2D& b) {
    const double dx = a.x_km - b.x_km;
    const double dy = a.y_km - b.y_km;
    return std::sqrt(dx * dx + dy * dy);
}

// Uniform i.i.d. placement over the square; pure function of (config, m, n, seed).
inline Scenario generate_scenario(const RadioConfig& config, int m, int n,
                                  std::uint64_t seed) {
    config.validate();
    if (m < 1 || n < 1)
        throw InvalidInputError("generate_scenario: need at least one AP and one user");

    Scenario sc;
    sc.seed = seed;
    Rng rng(derive_seed(seed, 0x5ce7a51dULL));
    sc.ap_positions.resize(m);
    for (auto& p : sc.ap_positions) {
        p.x_km = rng.uniform(0.0, config.area_km);
        p.y_km = rng.uniform(0.0, config.area_km);
    }
    sc.user_positions.resize(n);
    for (auto& p : sc.user_positions) {
        p.x_km = rng.uniform(0.0, config.area_km);
        p.y_km = rng.uniform(0.0, config.area_km);
    }
    sc.beta.resize(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            sc.beta(i, j) = path_gain(
                distance_km(sc.ap_positions[i], sc.user_positions[j]),
                config.min_distance_km);
    return sc;
}

struct QosTargets {
    std::vector<double> target_rate_bps;  // R_n^target >= 0

    void validate() const {
        for (double r : target_rate_bps)
            if (!(r >= 0.0) || !std::isfinite(r))
                throw InvalidInputError("QosTargets: rates must be finite and >= 0");
    }
};

inline QosTargets sample_rates(int n, double lo_bps, double hi_bps, std::uint64_t seed) {
    if (lo_bps < 0.0 || hi_bps < lo_bps)
        throw InvalidInputError("sample_rates: invalid range");
    QosTargets q;
    q.target_rate_bps.resize(n);
    Rng rng(derive_seed(seed, 0x9a7e5ULL));
    for (auto& r : q.target_rate_bps) r = rng.uniform(lo_bps, hi_bps);
    return q;
}

// ------------------------------------------------------------- replay CSV
// Header row, then M rows of N beta values; seed and the generating config
// are recorded in '#' comment lines ahead of the header.

inline void write_scenario_csv(std::ostream& os, const Scenario& sc,
                               const RadioConfig& config) {
    os << "# seed=" << sc.seed << "\n";
    os << "# aps=" << sc.aps() << " users=" << sc.users()
       << " area_km=" << config.area_km << " bandwidth_hz=" << config.bandwidth_hz
       << " noise_density_dbm_per_hz=" << config.noise_density_dbm_per_hz
       << " pilot_power_w=" << config.pilot_power_w
       << " coherence_len=" << config.coherence_len << "\n";
    os << std::setprecision(17);
    for (int j = 0; j < sc.users(); ++j) os << (j ? "," : "") << "user" << j;
    os << "\n";
    for (int i = 0; i < sc.aps(); ++i) {
        for (int j = 0; j < sc.users(); ++j) os << (j ? "," : "") << sc.beta(i, j);
        os << "\n";
    }
}

inline void write_scenario_csv(const std::string& path, const Scenario& sc,
                               const RadioConfig& config) {
    std::ofstream os(path);
    if (!os) throw Error("write_scenario_csv: cannot open " + path);
    write_scenario_csv(os, sc, config);
}

// Reads back the beta matrix and seed (positions are not stored).
inline Scenario read_scenario_csv(std::istream& is) {
    Scenario sc;
    std::vector<std::vector<double>> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("seed=");
            if (pos != std::string::npos)
                sc.seed = std::strtoull(line.c_str() + pos + 5, nullptr, 10);
            continue;
        }
        if (!header_seen) {  // column-name row
            header_seen = true;
            continue;
        }
        rows.emplace_back();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) rows.back().push_back(std::stod(cell));
    }
    if (rows.empty()) throw Error("read_scenario_csv: no data rows");
    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(rows[0].size());
    sc.beta.resize(m, n);
    for (int i = 0; i < m; ++i) {
        if (static_cast<int>(rows[i].size()) != n)
            throw Error("read_scenario_csv: ragged rows");
        for (int j = 0; j < n; ++j) sc.beta(i, j) = rows[i][j];
    }
    sc.ap_positions.resize(m);
    sc.user_positions.resize(n);
    return sc;
}

inline Scenario read_scenario_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("read_scenario_csv: cannot open " + path);
    return read_scenario_csv(is);
}

}  // namespace cfmimo
