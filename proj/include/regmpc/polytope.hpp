#pragma once

#include "regmpc/types.hpp"

#include <cmath>

namespace regmpc {

inline constexpr double kContainTol = 1e-9;

// {z | C z <= c}
struct HalfspacePolytope {
    Matrix C;
    Vector c;

    HalfspacePolytope() = default;
    HalfspacePolytope(Matrix C_, Vector c_) : C(std::move(C_)), c(std::move(c_)) {
        if (C.rows() != c.size())
            throw DimensionError("polytope: C has " + std::to_string(C.rows()) + " rows, c has " +
                                 std::to_string(c.size()));
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return C.cols(); }
    [[nodiscard]] Eigen::Index rows() const noexcept { return C.rows(); }

    // Axis-aligned box, upper bound row before lower bound row per coordinate.
    static HalfspacePolytope box(const Vector& lo, const Vector& hi) {
        const Eigen::Index d = lo.size();
        Matrix C = Matrix::Zero(2 * d, d);
        Vector c(2 * d);
        for (Eigen::Index i = 0; i < d; ++i) {
            C(2 * i, i) = 1.0;
            c(2 * i) = hi(i);
            C(2 * i + 1, i) = -1.0;
            c(2 * i + 1) = -lo(i);
        }
        return {std::move(C), std::move(c)};
    }

    static HalfspacePolytope symmetric_box(const Vector& bound) { return box(-bound, bound); }

    friend bool operator==(const HalfspacePolytope& a, const HalfspacePolytope& b) {
        return a.C.rows() == b.C.rows() && a.C.cols() == b.C.cols() && a.C == b.C && a.c == b.c;
    }
};

[[nodiscard]] inline bool polytope_contains(const HalfspacePolytope& poly, const Vector& z, double tol = kContainTol) {
    if (poly.dim() != z.size())
        throw DimensionError("polytope_contains: dimension mismatch");
    for (Eigen::Index i = 0; i < poly.rows(); ++i) {
        if (poly.C.row(i).dot(z) > poly.c(i) + tol)
            return false;
    }
    return true;
}

// Scales each row to unit Euclidean norm. Rows with (numerically) zero normal
// are dropped when trivially satisfied; an unsatisfiable zero row is kept as
// the canonical empty row 0 <= -1.
[[nodiscard]] inline HalfspacePolytope normalized(const HalfspacePolytope& poly, double zero_tol = 1e-12) {
    std::vector<Eigen::Index> keep;
    bool infeasible_zero_row = false;
    Vector norms = poly.C.rowwise().norm();
    const double scale = std::max(1.0, norms.size() ? norms.maxCoeff() : 0.0);
    for (Eigen::Index i = 0; i < poly.rows(); ++i) {
        if (norms(i) > zero_tol * scale)
            keep.push_back(i);
        else if (poly.c(i) < -zero_tol * scale)
            infeasible_zero_row = true;
    }
    const auto r = static_cast<Eigen::Index>(keep.size()) + (infeasible_zero_row ? 1 : 0);
    Matrix C = Matrix::Zero(r, poly.dim());
    Vector c(r);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(keep.size()); ++k) {
        const Eigen::Index i = keep[k];
        C.row(k) = poly.C.row(i) / norms(i);
        c(k) = poly.c(i) / norms(i);
    }
    if (infeasible_zero_row)
        c(r - 1) = -1.0;
    return {std::move(C), std::move(c)};
}

}  // namespace regmpc
