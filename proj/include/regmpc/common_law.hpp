#pragma once

// Feedback laws shared by several active sets.
//
// The rows 1..q_stage of G only involve u(0). When the active rows among them
// (the stage subset) number exactly m and G_A has full row rank, they pin
// u(0) = (G11_s)^-1 (E1_s x + w1_s) on every polytope whose active set shares
// that stage subset. Online, the candidates are the sets sandwiched between
// the stage subset and the active set returned by the QP.

#include "regmpc/regional_core.hpp"

#include <optional>

namespace regmpc {

inline constexpr int kDefaultFamilyCap = 16;

[[nodiscard]] inline ActiveSet stage_subset(const ActiveSet& A, int q_stage) {
    std::vector<int> out;
    for (int i : A.indices()) {
        if (i > q_stage)
            break;
        out.push_back(i);
    }
    return ActiveSet(std::move(out));
}

[[nodiscard]] inline bool criterion_applies(const CondensedQp& qp, const ActiveSet& A) {
    if (stage_subset(A, qp.q_stage).size() != static_cast<std::size_t>(qp.m))
        return false;
    return has_full_row_rank(qp, A);
}

inline FeedbackLaw simplified_feedback(const CondensedQp& qp, const ActiveSet& Atilde) {
    if (Atilde.size() != static_cast<std::size_t>(qp.m))
        throw Singular("simplified_feedback: stage subset must have exactly m=" + std::to_string(qp.m) + " rows");
    if (Atilde.max_index() > qp.q_stage)
        throw IndexOutOfRange("simplified_feedback: index beyond the first stage");
    const auto rows = Atilde.rows();
    const Matrix G11 = rows_of(Matrix(qp.G11()), rows);
    Eigen::FullPivLU<Matrix> lu(G11);
    lu.setThreshold(kRankTol);
    if (!lu.isInvertible())
        throw Singular("simplified_feedback: G11 restricted to " + Atilde.to_string() + " is singular");
    return {lu.solve(rows_of(Matrix(qp.E1()), rows)), lu.solve(rows_of(Vector(qp.w1()), rows))};
}

// All sets between the stage subset of A and A, in descending binary order.
[[nodiscard]] inline std::vector<ActiveSet> candidate_family(const ActiveSet& A, int q_stage,
                                                             int cap = kDefaultFamilyCap) {
    const ActiveSet base = stage_subset(A, q_stage);
    std::vector<int> free;
    for (int i : A.indices()) {
        if (i > q_stage)
            free.push_back(i);
    }
    if (static_cast<int>(free.size()) > cap)
        throw FamilyTooLarge("candidate_family: " + std::to_string(free.size()) + " free indices exceed cap " +
                             std::to_string(cap));
    const std::uint64_t count = std::uint64_t{1} << free.size();
    std::vector<ActiveSet> out;
    out.reserve(count);
    // Bit j of the mask selects free[j]; free is ascending, so a descending
    // mask sweep is a descending sweep of the binary value.
    for (std::uint64_t mask = count; mask-- > 0;) {
        std::vector<int> idx = base.indices();
        for (std::size_t j = 0; j < free.size(); ++j) {
            if (mask & (std::uint64_t{1} << j))
                idx.push_back(free[j]);
        }
        out.emplace_back(std::move(idx));
    }
    return out;
}

struct Candidate {
    ActiveSet set;
    HalfspacePolytope region;
};

struct ReuseRegion {
    ActiveSet Atilde;
    FeedbackLaw law;
    std::vector<Candidate> candidates;  // descending binary order
    ActiveSet origin_set;
};

struct ReuseOptions {
    bool prune_empty = true;
    std::size_t max_candidates = 0;  // keep only the first l sets; 0 keeps all
    int family_cap = kDefaultFamilyCap;
};

inline ReuseRegion build_reuse_region(const CondensedQp& qp, const ActiveSet& A, const ReuseOptions& opt = {}) {
    if (!criterion_applies(qp, A))
        throw Singular("build_reuse_region: criterion does not hold for A=" + A.to_string());
    ReuseRegion rr;
    rr.origin_set = A;
    rr.Atilde = stage_subset(A, qp.q_stage);
    rr.law = simplified_feedback(qp, rr.Atilde);
    auto family = candidate_family(A, qp.q_stage, opt.family_cap);
    if (opt.max_candidates > 0 && family.size() > opt.max_candidates)
        family.resize(opt.max_candidates);
    for (auto& cand : family) {
        // Subsets of a full-row-rank set keep full row rank; the check only
        // guards against numerical borderline cases.
        if (!has_full_row_rank(qp, cand))
            continue;
        HalfspacePolytope region = polytope_from_active_set(qp, cand);
        if (opt.prune_empty && polytope_is_empty(region))
            continue;
        rr.candidates.push_back({std::move(cand), std::move(region)});
    }
    return rr;
}

// Index of the first candidate containing x, if any.
[[nodiscard]] inline std::optional<std::size_t> reuse_hit(const ReuseRegion& rr, const Vector& x) {
    for (std::size_t k = 0; k < rr.candidates.size(); ++k) {
        if (polytope_contains(rr.candidates[k].region, x))
            return k;
    }
    return std::nullopt;
}

[[nodiscard]] inline std::optional<Vector> reuse_query(const ReuseRegion& rr, const Vector& x) {
    if (!reuse_hit(rr, x))
        return std::nullopt;
    return rr.law(x);
}

}  // namespace regmpc
