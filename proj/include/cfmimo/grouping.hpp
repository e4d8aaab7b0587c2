// SPDX-License-Identifier: Apache-2.0
//
// User grouping: one-hot assignment of users to orthogonal time slots.
// The binary matrix x is stored as the per-user group index, which makes
// the one-hot column invariant structural.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "cfmimo/common.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

class Grouping {
  public:
    Grouping() = default;
    Grouping(int num_groups, std::vector<int> group_of)
        : num_groups_(num_groups), group_of_(std::move(group_of)) {
        if (num_groups_ < 1)
            throw InvalidInputError("Grouping: need at least one group");
        for (int g : group_of_)
            if (g < 0 || g >= num_groups_)
                throw InvalidInputError("Grouping: group index out of range");
        rebuild();
    }

    int groups() const { return num_groups_; }
    int users() const { return static_cast<int>(group_of_.size()); }

    int group_of(int n) const { return group_of_[n]; }
    bool x(int g, int n) const { return group_of_[n] == g; }

    int size(int g) const { return static_cast<int>(members_[g].size()); }
    const std::vector<int>& members(int g) const { return members_[g]; }

    std::vector<int> sizes() const {
        std::vector<int> s(num_groups_);
        for (int g = 0; g < num_groups_; ++g) s[g] = size(g);
        return s;
    }

    const std::vector<int>& assignment() const { return group_of_; }

    Grouping with_move(int user, int to_group) const {
        std::vector<int> a = group_of_;
        a[user] = to_group;
        return Grouping(num_groups_, std::move(a));
    }

    bool operator==(const Grouping& o) const {
        return num_groups_ == o.num_groups_ && group_of_ == o.group_of_;
    }

    // stable 64-bit digest for trace rows and revisit detection
    std::uint64_t hash() const {
        std::uint64_t s = 0x8f1bbcdcbfa53e0bULL ^ static_cast<std::uint64_t>(num_groups_);
        for (int g : group_of_) {
            s ^= static_cast<std::uint64_t>(g) + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
            splitmix64(s);
        }
        std::uint64_t t = s;
        return splitmix64(t);
    }

    std::string key() const {
        std::string k;
        k.reserve(group_of_.size() * 3);
        for (int g : group_of_) {
            k += std::to_string(g);
            k += ',';
        }
        return k;
    }

  private:
    void rebuild() {
        members_.assign(num_groups_, {});
        for (int n = 0; n < users(); ++n) members_[group_of_[n]].push_back(n);
    }

    int num_groups_ = 0;
    std::vector<int> group_of_;
    std::vector<std::vector<int>> members_;
};

// Round-robin initialization, g = mod(n, G) + 1 with 1-indexed users.
inline Grouping round_robin_grouping(int n, int g) {
    if (n < 1 || g < 1) throw InvalidInputError("round_robin_grouping: n, g >= 1");
    std::vector<int> a(n);
    for (int user = 1; user <= n; ++user) a[user - 1] = user % g;  // 0-indexed group
    return Grouping(g, std::move(a));
}

// Uniform random assignment (BCGA baseline); deterministic per seed.
inline Grouping random_grouping(int n, int g, std::uint64_t seed) {
    if (n < 1 || g < 1) throw InvalidInputError("random_grouping: n, g >= 1");
    Rng rng(derive_seed(seed, 0xbc6aULL));
    std::vector<int> a(n);
    for (auto& gi : a) gi = static_cast<int>(rng.uniform_int(g));
    return Grouping(g, std::move(a));
}

// Within-group rank kappa_n: users of each group ordered by descending
// aggregate channel gain sum_m beta_mn (ties by user index).
inline std::vector<int> within_group_rank(const Scenario& sc, const Grouping& x) {
    std::vector<double> gain(x.users(), 0.0);
    for (int n = 0; n < x.users(); ++n) gain[n] = sc.beta.col(n).sum();
    std::vector<int> kappa(x.users(), -1);
    for (int g = 0; g < x.groups(); ++g) {
        std::vector<int> m = x.members(g);
        std::sort(m.begin(), m.end(), [&](int a, int b) {
            if (gain[a] != gain[b]) return gain[a] > gain[b];
            return a < b;
        });
        for (int r = 0; r < static_cast<int>(m.size()); ++r) kappa[m[r]] = r;
    }
    return kappa;
}

}  // namespace cfmimo
