// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: joint power allocation and user grouping for downlink
// cell-free massive MIMO. Shared error types, unit conversions and
// a minimal rank-3 tensor used by the channel/beamforming statistics.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument or violated precondition.
struct InvalidInputError : Error {
    explicit InvalidInputError(const std::string& msg) : Error(msg) {}
};

// Solver failed to converge; carries the best iterate reached so far.
struct NumericalError : Error {
    NumericalError(const std::string& msg, std::vector<double> iterate)
        : Error(msg), best_iterate(std::move(iterate)) {}
    std::vector<double> best_iterate;
};

// Zero-forcing needs at least as many APs as users per group.
struct InfeasiblePrecoderError : Error {
    explicit InfeasiblePrecoderError(const std::string& msg) : Error(msg) {}
};

// Pilot sequence does not fit into the coherence interval.
struct FrameOverflowError : Error {
    explicit FrameOverflowError(const std::string& msg) : Error(msg) {}
};

// A loop is applied to a grouping it was not built against.
struct StaleLoopError : Error {
    explicit StaleLoopError(const std::string& msg) : Error(msg) {}
};

// ------------------------------------------------------- unit conversions
// dB / dBm appear only at I/O boundaries; everything internal is linear.

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

// ------------------------------------------------------------- Tensor3
// Dense row-major (d0, d1, d2) tensor of doubles. Used for the per-group
// estimation variances alpha(g, m, n) and derived coefficient tensors.

class Tensor3 {
  public:
    Tensor3() = default;
    Tensor3(int d0, int d1, int d2, double fill = 0.0)
        : d0_(d0), d1_(d1), d2_(d2),
          data_(static_cast<std::size_t>(d0) * d1 * d2, fill) {
        if (d0 < 0 || d1 < 0 || d2 < 0)
            throw InvalidInputError("Tensor3: negative dimension");
    }

    double operator()(int i, int j, int k) const {
        return data_[idx(i, j, k)];
    }
    double& operator()(int i, int j, int k) { return data_[idx(i, j, k)]; }

    int dim0() const { return d0_; }
    int dim1() const { return d1_; }
    int dim2() const { return d2_; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

  private:
    std::size_t idx(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * d1_ + j) * d2_ + k;
    }
    int d0_ = 0, d1_ = 0, d2_ = 0;
    std::vector<double> data_;
};

}  // namespace cfmimo
