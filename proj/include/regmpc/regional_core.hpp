#pragma once

// The affine control law attached to an active set and the polytope of
// states on which that law is the QP optimizer.
//
// For an active set A with full-row-rank G_A and W = (G_A H^-1 G_A')^-1:
//   Kbar = H^-1 G_A' W S_A - H^-1 F',      bbar = H^-1 G_A' W w_A
//   Pi(A) = { x | W S_A x <= -W w_A,
//                 (G_I H^-1 G_A' W S_A - S_I) x <= w_I - G_I H^-1 G_A' W w_A }
// The first block is nonnegativity of the multipliers, the second keeps the
// inactive rows satisfied.

#include "regmpc/qp_solver.hpp"

namespace regmpc {

inline constexpr double kRankTol = 1e-9;

// Full affine law U = Kbar x + bbar over the horizon.
struct ControlLaw {
    Matrix Kbar;
    Vector bbar;

    [[nodiscard]] Vector operator()(const Vector& x) const { return Kbar * x + bbar; }
};

// Input law u(0) = K x + b.
struct FeedbackLaw {
    Matrix K;
    Vector b;

    [[nodiscard]] Vector operator()(const Vector& x) const { return K * x + b; }
};

struct RegionalLaw {
    ControlLaw law;
    FeedbackLaw head;
    HalfspacePolytope region;
    ActiveSet source;
};

[[nodiscard]] inline Matrix rows_of(const Matrix& M, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), M.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
        out.row(static_cast<Eigen::Index>(k)) = M.row(rows[k]);
    return out;
}

[[nodiscard]] inline Vector rows_of(const Vector& v, const std::vector<Eigen::Index>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k)
        out(static_cast<Eigen::Index>(k)) = v(rows[k]);
    return out;
}

[[nodiscard]] inline bool has_full_row_rank(const Matrix& M, double tol = kRankTol) {
    if (M.rows() == 0)
        return true;
    if (M.rows() > M.cols())
        return false;
    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    qr.setThreshold(tol);
    return qr.rank() == M.rows();
}

[[nodiscard]] inline bool has_full_row_rank(const CondensedQp& qp, const ActiveSet& A) {
    if (A.max_index() > qp.q)
        throw IndexOutOfRange("active set index " + std::to_string(A.max_index()) + " exceeds q=" +
                              std::to_string(qp.q));
    return has_full_row_rank(rows_of(qp.G, A.rows()));
}

namespace detail {

// Quantities shared by the law and the polytope of one active set.
struct ActiveSetFactor {
    std::vector<Eigen::Index> act;
    Matrix HinvGAt;  // H^-1 G_A'   (nv x |A|)
    Matrix WSA;      // W S_A       (|A| x n)
    Vector WwA;      // W w_A

    ActiveSetFactor(const CondensedQp& qp, const ActiveSet& A) : act(A.rows()) {
        if (A.max_index() > qp.q)
            throw IndexOutOfRange("active set index " + std::to_string(A.max_index()) + " exceeds q=" +
                                  std::to_string(qp.q));
        const Matrix GA = rows_of(qp.G, act);
        if (!has_full_row_rank(GA))
            throw RankDeficient("G_A is rank deficient for A=" + A.to_string());
        HinvGAt = rows_of(qp.GHinv, act).transpose();
        if (act.empty()) {
            WSA = Matrix::Zero(0, qp.n);
            WwA = Vector::Zero(0);
            return;
        }
        const Matrix M = GA * HinvGAt;
        Eigen::LDLT<Matrix> ldlt(M);
        WSA = ldlt.solve(rows_of(qp.S, act));
        WwA = ldlt.solve(rows_of(qp.w, act));
    }
};

}  // namespace detail

inline ControlLaw control_law_from_active_set(const CondensedQp& qp, const ActiveSet& A) {
    const detail::ActiveSetFactor f(qp, A);
    ControlLaw law;
    law.Kbar = f.HinvGAt * f.WSA - qp.HinvFt;
    law.bbar = f.HinvGAt * f.WwA;
    return law;
}

namespace detail {

inline HalfspacePolytope polytope_from_factor(const CondensedQp& qp, const ActiveSet& A, const ActiveSetFactor& f) {
    const auto inact = A.complement_rows(qp.q);
    const auto na = static_cast<Eigen::Index>(f.act.size());
    const auto ni = static_cast<Eigen::Index>(inact.size());
    Matrix T(na + ni, qp.n);
    Vector d(na + ni);
    T.topRows(na) = f.WSA;
    d.head(na) = -f.WwA;
    const Matrix GI = rows_of(qp.G, inact);
    const Matrix PI = GI * f.HinvGAt;  // G_I H^-1 G_A'
    T.bottomRows(ni) = PI * f.WSA - rows_of(qp.S, inact);
    d.tail(ni) = rows_of(qp.w, inact) - PI * f.WwA;
    return normalized(HalfspacePolytope(std::move(T), std::move(d)));
}

}  // namespace detail

inline HalfspacePolytope polytope_from_active_set(const CondensedQp& qp, const ActiveSet& A) {
    const detail::ActiveSetFactor f(qp, A);
    return detail::polytope_from_factor(qp, A, f);
}

inline FeedbackLaw feedback_head(const ControlLaw& law, Eigen::Index m) {
    if (m > law.Kbar.rows())
        throw DimensionError("feedback_head: m exceeds law size");
    return {law.Kbar.topRows(m), law.bbar.head(m)};
}

inline RegionalLaw regional_law(const CondensedQp& qp, const ActiveSet& A) {
    const detail::ActiveSetFactor f(qp, A);
    RegionalLaw out;
    out.law.Kbar = f.HinvGAt * f.WSA - qp.HinvFt;
    out.law.bbar = f.HinvGAt * f.WwA;
    out.head = feedback_head(out.law, qp.m);
    out.region = detail::polytope_from_factor(qp, A, f);
    out.source = A;
    return out;
}

}  // namespace regmpc
