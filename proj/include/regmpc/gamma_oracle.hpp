#pragma once

// Offline atlas of active sets found by solving the QP on a state grid, grouped
// by stage subset. Only used as a comparison baseline: the union of polytopes
// in one group is where a single input law is known to be optimal.

#include "regmpc/common_law.hpp"

#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace regmpc {

struct ActiveSetAtlas {
    int q_stage = 0;
    Eigen::Index m = 0;
    std::map<ActiveSet, HalfspacePolytope> entries;
    std::map<ActiveSet, std::vector<ActiveSet>> groups;  // stage subset -> members
    std::size_t grid_points = 0;
    std::size_t feasible_points = 0;
    std::size_t rank_deficient = 0;  // distinct sets skipped for lack of full row rank

    [[nodiscard]] bool reusable_group(const ActiveSet& Atilde) const {
        return Atilde.size() == static_cast<std::size_t>(m);
    }
};

// Adds A (when full row rank) to the atlas. Returns false if skipped.
inline bool atlas_insert(ActiveSetAtlas& atlas, const CondensedQp& qp, const ActiveSet& A) {
    if (atlas.entries.count(A))
        return true;
    if (!has_full_row_rank(qp, A)) {
        ++atlas.rank_deficient;
        return false;
    }
    atlas.entries.emplace(A, polytope_from_active_set(qp, A));
    auto& members = atlas.groups[stage_subset(A, qp.q_stage)];
    members.insert(std::lower_bound(members.begin(), members.end(), A), A);
    return true;
}

inline ActiveSetAtlas enumerate_by_grid(const CondensedQp& qp, const HalfspacePolytope& box, int pts_per_dim,
                                        unsigned threads = 1) {
    if (pts_per_dim < 2)
        throw DimensionError("enumerate_by_grid: need at least 2 points per dimension");
    const auto [lo, hi] = bounding_box(box);
    const Eigen::Index n = qp.n;
    double total = std::pow(static_cast<double>(pts_per_dim), static_cast<double>(n));
    if (total > 1e7)
        throw DimensionError("enumerate_by_grid: grid exceeds 1e7 points");
    const auto npts = static_cast<std::size_t>(total);

    std::set<ActiveSet> found;
    std::size_t feasible = 0;
    std::mutex mu;
    threads = std::max(1u, threads);
    auto worker = [&](unsigned tid) {
        std::set<ActiveSet> local;
        std::size_t local_feasible = 0;
        Vector x(n);
        for (std::size_t k = tid; k < npts; k += threads) {
            std::size_t rem = k;
            for (Eigen::Index d = 0; d < n; ++d) {
                const auto idx = static_cast<double>(rem % static_cast<std::size_t>(pts_per_dim));
                rem /= static_cast<std::size_t>(pts_per_dim);
                x(d) = lo(d) + (hi(d) - lo(d)) * idx / (pts_per_dim - 1);
            }
            if (!polytope_contains(box, x))
                continue;
            const QpResult r = solve_qp(qp, x);
            if (!r.optimal())
                continue;
            ++local_feasible;
            local.insert(r.working_set);
        }
        std::lock_guard lock(mu);
        found.merge(local);
        feasible += local_feasible;
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker, t);
        for (auto& t : pool)
            t.join();
    }

    ActiveSetAtlas atlas;
    atlas.q_stage = qp.q_stage;
    atlas.m = qp.m;
    atlas.grid_points = npts;
    atlas.feasible_points = feasible;
    for (const auto& A : found)
        atlas_insert(atlas, qp, A);
    return atlas;
}

[[nodiscard]] inline const std::vector<ActiveSet>& gamma_members(const ActiveSetAtlas& atlas, const ActiveSet& A) {
    static const std::vector<ActiveSet> none;
    auto it = atlas.groups.find(stage_subset(A, atlas.q_stage));
    return it == atlas.groups.end() ? none : it->second;
}

// Polytopes of every atlas member sharing the stage subset of A.
[[nodiscard]] inline std::vector<HalfspacePolytope> gamma_of(const ActiveSetAtlas& atlas, const ActiveSet& A) {
    std::vector<HalfspacePolytope> out;
    for (const auto& member : gamma_members(atlas, A))
        out.push_back(atlas.entries.at(member));
    return out;
}

inline nlohmann::json atlas_json(const ActiveSetAtlas& atlas, bool with_polytopes = true) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [key, members] : atlas.groups) {
        nlohmann::json g;
        g["stage_subset"] = key.indices();
        g["reusable"] = atlas.reusable_group(key);
        nlohmann::json sets = nlohmann::json::array();
        for (const auto& A : members) {
            nlohmann::json e;
            e["active_set"] = A.indices();
            if (with_polytopes)
                e["polytope"] = polytope_json(atlas.entries.at(A));
            sets.push_back(std::move(e));
        }
        g["members"] = std::move(sets);
        groups.push_back(std::move(g));
    }
    return {{"q_stage", atlas.q_stage},
            {"grid_points", atlas.grid_points},
            {"feasible_points", atlas.feasible_points},
            {"active_sets", atlas.entries.size()},
            {"rank_deficient_skipped", atlas.rank_deficient},
            {"groups", std::move(groups)}};
}

}  // namespace regmpc
