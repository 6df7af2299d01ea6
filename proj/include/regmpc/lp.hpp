#pragma once

// Dense LP utilities for small-dimensional polytopes.
//
// All problems are posed as  max c'v  s.t.  M v <= h,  v free,  and solved
// through the dual standard form  min h'y  s.t.  M'y = c, y >= 0, which has
// only dim(v) equality rows. Two-phase tableau simplex with Bland's rule.

#include "regmpc/polytope.hpp"

#include <limits>
#include <optional>

namespace regmpc {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double value = 0.0;
    Vector point;  // primal maximizer (only when Optimal)
};

namespace detail {

class DualSimplex {
public:
    DualSimplex(const Matrix& M, const Vector& h, const Vector& c)
        : n_(M.cols()), r_(M.rows()), h_(h), sign_(n_) {
        tab_ = Matrix::Zero(n_, r_ + n_ + 1);
        for (Eigen::Index i = 0; i < n_; ++i) {
            sign_(i) = c(i) < 0 ? -1.0 : 1.0;
            tab_.row(i).head(r_) = sign_(i) * M.col(i).transpose();
            tab_(i, r_ + i) = 1.0;
            tab_(i, r_ + n_) = sign_(i) * c(i);
        }
        basis_.resize(n_);
        for (Eigen::Index i = 0; i < n_; ++i)
            basis_[i] = r_ + i;
        scale_ = std::max(1.0, tab_.leftCols(r_).cwiseAbs().maxCoeff());
        max_iter_ = 50 * (r_ + n_) + 100;
    }

    // Returns false when the dual is infeasible.
    bool phase1() {
        obj_ = Vector::Zero(r_ + n_ + 1);
        for (Eigen::Index i = 0; i < n_; ++i) {
            obj_.head(r_) -= tab_.row(i).head(r_).transpose();
            obj_(r_ + n_) -= tab_(i, r_ + n_);
        }
        if (!iterate(r_ + n_))
            throw MaxIterations("lp: phase 1 unbounded");  // cannot happen
        const double infeas = -obj_(r_ + n_);
        if (infeas > 1e-9 * std::max(1.0, tab_.col(r_ + n_).cwiseAbs().maxCoeff()))
            return false;
        // Drive artificials out of the basis where possible.
        for (Eigen::Index i = 0; i < n_; ++i) {
            if (basis_[i] < r_)
                continue;
            for (Eigen::Index j = 0; j < r_; ++j) {
                if (std::abs(tab_(i, j)) > 1e-9 * scale_) {
                    pivot(i, j);
                    break;
                }
            }
        }
        return true;
    }

    // Returns false when the dual is unbounded (primal infeasible).
    bool phase2() {
        obj_ = Vector::Zero(r_ + n_ + 1);
        obj_.head(r_) = h_;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double cb = basis_[i] < r_ ? h_(basis_[i]) : 0.0;
            if (cb != 0.0)
                obj_ -= cb * tab_.row(i).transpose();
        }
        return iterate(r_);
    }

    [[nodiscard]] double value() const { return -obj_(r_ + n_); }

    // Simplex multipliers of the dual = primal maximizer.
    [[nodiscard]] Vector primal_point(const Matrix& M) const {
        Matrix Bm = Matrix::Zero(n_, n_);
        Vector hb = Vector::Zero(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const Eigen::Index j = basis_[i];
            if (j < r_) {
                for (Eigen::Index k = 0; k < n_; ++k)
                    Bm(k, i) = sign_(k) * M(j, k);
                hb(i) = h_(j);
            } else {
                Bm(j - r_, i) = 1.0;
            }
        }
        Vector pi = Bm.transpose().fullPivLu().solve(hb);
        return sign_.cwiseProduct(pi);
    }

private:
    void pivot(Eigen::Index row, Eigen::Index col) {
        tab_.row(row) /= tab_(row, col);
        for (Eigen::Index i = 0; i < n_; ++i) {
            if (i != row && tab_(i, col) != 0.0)
                tab_.row(i) -= tab_(i, col) * tab_.row(row);
        }
        if (obj_(col) != 0.0)
            obj_ -= obj_(col) * tab_.row(row).transpose();
        basis_[row] = col;
        // Basic values are nonnegative; rounding may push degenerate ones below 0.
        for (Eigen::Index i = 0; i < n_; ++i)
            tab_(i, r_ + n_) = std::max(0.0, tab_(i, r_ + n_));
    }

    // Bland's rule over the first `ncols` columns. False on unboundedness.
    bool iterate(Eigen::Index ncols) {
        const double dtol = 1e-11 * scale_;
        for (int it = 0; it < max_iter_; ++it) {
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < ncols; ++j) {
                if (obj_(j) < -dtol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0)
                return true;
            Eigen::Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n_; ++i) {
                const double a = tab_(i, enter);
                if (a <= 1e-12 * scale_)
                    continue;
                const double ratio = std::max(0.0, tab_(i, r_ + n_)) / a;
                if (leave < 0) {
                    best = ratio;
                    leave = i;
                    continue;
                }
                const double tie = 1e-13 * (1.0 + best);
                if (ratio < best - tie || (ratio <= best + tie && basis_[i] < basis_[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave < 0)
                return false;
            pivot(leave, enter);
        }
        throw MaxIterations("lp: simplex iteration limit");
    }

    Eigen::Index n_, r_;
    Vector h_;
    Vector sign_;
    Matrix tab_;
    Vector obj_;
    std::vector<Eigen::Index> basis_;
    double scale_ = 1.0;
    int max_iter_ = 0;
};

// max -t  s.t.  C z - t <= c,  t >= -1.  Returns the optimal t.
inline double phase1_margin(const Matrix& C, const Vector& c) {
    const Eigen::Index r = C.rows(), d = C.cols();
    Matrix M = Matrix::Zero(r + 1, d + 1);
    M.topLeftCorner(r, d) = C;
    M.col(d).head(r).setConstant(-1.0);
    M(r, d) = -1.0;
    Vector h(r + 1);
    h << c, 1.0;
    Vector obj = Vector::Zero(d + 1);
    obj(d) = -1.0;
    DualSimplex lp(M, h, obj);
    if (!lp.phase1() || !lp.phase2())
        throw MaxIterations("lp: phase-1 problem reported infeasible");
    return -lp.value();
}

}  // namespace detail

[[nodiscard]] inline bool polytope_is_empty(const HalfspacePolytope& poly, double tol = kContainTol) {
    const HalfspacePolytope p = normalized(poly);
    if (p.rows() == 0)
        return false;
    return detail::phase1_margin(p.C, p.c) > tol;
}

// max c'v s.t. M v <= h.
[[nodiscard]] inline LpResult lp_maximize(const Matrix& M, const Vector& h, const Vector& c) {
    if (M.rows() != h.size() || M.cols() != c.size())
        throw DimensionError("lp_maximize: dimension mismatch");
    LpResult res;
    if (M.rows() == 0) {
        res.status = c.isZero() ? LpStatus::Optimal : LpStatus::Unbounded;
        res.point = Vector::Zero(c.size());
        return res;
    }
    detail::DualSimplex lp(M, h, c);
    if (!lp.phase1()) {
        res.status = polytope_is_empty(HalfspacePolytope(M, h)) ? LpStatus::Infeasible : LpStatus::Unbounded;
        return res;
    }
    if (!lp.phase2()) {
        res.status = LpStatus::Infeasible;
        return res;
    }
    res.status = LpStatus::Optimal;
    res.value = lp.value();
    res.point = lp.primal_point(M);
    return res;
}

[[nodiscard]] inline LpResult polytope_maximize(const HalfspacePolytope& poly, const Vector& direction) {
    return lp_maximize(poly.C, poly.c, direction);
}

struct ChebyshevBall {
    Vector center;
    double radius = 0.0;
};

// Largest inscribed ball, radius capped at `radius_cap` for unbounded sets.
// Empty optional when the polytope is empty.
[[nodiscard]] inline std::optional<ChebyshevBall> chebyshev_center(const HalfspacePolytope& poly,
                                                                   double radius_cap = 1e3) {
    const Eigen::Index r = poly.rows(), d = poly.dim();
    Matrix M = Matrix::Zero(r + 1, d + 1);
    M.topLeftCorner(r, d) = poly.C;
    M.col(d).head(r) = poly.C.rowwise().norm();
    M(r, d) = 1.0;
    Vector h(r + 1);
    h << poly.c, radius_cap;
    Vector obj = Vector::Zero(d + 1);
    obj(d) = 1.0;
    const LpResult res = lp_maximize(M, h, obj);
    if (res.status != LpStatus::Optimal || res.value < -kContainTol)
        return std::nullopt;
    return ChebyshevBall{res.point.head(d), std::max(0.0, res.value)};
}

// Row `row` is redundant when its maximum over the remaining rows does not
// exceed its bound (+tol). Ties count as redundant.
[[nodiscard]] inline bool row_is_redundant(const HalfspacePolytope& poly, Eigen::Index row, double tol = kContainTol) {
    const Eigen::Index r = poly.rows();
    Matrix M(r - 1, poly.dim());
    Vector h(r - 1);
    for (Eigen::Index i = 0, k = 0; i < r; ++i) {
        if (i == row)
            continue;
        M.row(k) = poly.C.row(i);
        h(k++) = poly.c(i);
    }
    const LpResult res = lp_maximize(M, h, poly.C.row(row).transpose());
    switch (res.status) {
        case LpStatus::Optimal: return res.value <= poly.c(row) + tol;
        case LpStatus::Unbounded: return false;
        case LpStatus::Infeasible: return true;
    }
    return false;
}

// Drops redundant rows one at a time, scanning from the first row.
[[nodiscard]] inline HalfspacePolytope remove_redundant(const HalfspacePolytope& poly, double tol = kContainTol) {
    HalfspacePolytope cur = poly;
    Eigen::Index i = 0;
    while (i < cur.rows()) {
        if (cur.rows() > 1 && row_is_redundant(cur, i, tol)) {
            Matrix C(cur.rows() - 1, cur.dim());
            Vector c(cur.rows() - 1);
            C << cur.C.topRows(i), cur.C.bottomRows(cur.rows() - i - 1);
            c << cur.c.head(i), cur.c.tail(cur.rows() - i - 1);
            cur = HalfspacePolytope(std::move(C), std::move(c));
        } else {
            ++i;
        }
    }
    return cur;
}

// True when every point of `inner` satisfies every row of `outer`.
[[nodiscard]] inline bool polytope_subset(const HalfspacePolytope& inner, const HalfspacePolytope& outer,
                                          double tol = kContainTol) {
    for (Eigen::Index i = 0; i < outer.rows(); ++i) {
        const LpResult res = polytope_maximize(inner, outer.C.row(i).transpose());
        if (res.status == LpStatus::Infeasible)
            return true;
        if (res.status == LpStatus::Unbounded || res.value > outer.c(i) + tol)
            return false;
    }
    return true;
}

// Per-coordinate bounds; throws Unbounded / EmptySet.
inline std::pair<Vector, Vector> bounding_box(const HalfspacePolytope& poly) {
    const Eigen::Index d = poly.dim();
    Vector lo(d), hi(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        Vector e = Vector::Zero(d);
        e(i) = 1.0;
        for (int s : {1, -1}) {
            const LpResult res = polytope_maximize(poly, s * e);
            if (res.status == LpStatus::Infeasible)
                throw EmptySet("bounding_box: empty polytope");
            if (res.status == LpStatus::Unbounded)
                throw Unbounded("bounding_box: polytope is unbounded");
            (s > 0 ? hi(i) : lo(i)) = s * res.value;
        }
    }
    return {lo, hi};
}

[[nodiscard]] inline bool polytope_is_bounded(const HalfspacePolytope& poly) {
    try {
        (void)bounding_box(poly);
        return true;
    } catch (const Unbounded&) {
        return false;
    }
}

// Counter-clockwise vertex list of a bounded, nonempty 2-D polytope.
inline std::vector<Eigen::Vector2d> vertices_2d(const HalfspacePolytope& poly, double tol = 1e-8) {
    if (poly.dim() != 2)
        throw DimensionError("vertices_2d: polytope must be 2-dimensional");
    if (polytope_is_empty(poly))
        throw EmptySet("vertices_2d: empty polytope");
    if (!polytope_is_bounded(poly))
        throw Unbounded("vertices_2d: unbounded polytope");
    const HalfspacePolytope p = normalized(poly);
    std::vector<Eigen::Vector2d> pts;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < p.rows(); ++j) {
            Eigen::Matrix2d Mij;
            Mij << p.C.row(i), p.C.row(j);
            if (std::abs(Mij.determinant()) < 1e-12)
                continue;
            const Eigen::Vector2d v = Mij.partialPivLu().solve(Eigen::Vector2d(p.c(i), p.c(j)));
            if (!polytope_contains(p, v, tol))
                continue;
            const bool dup = std::any_of(pts.begin(), pts.end(), [&](const Eigen::Vector2d& w) {
                return (w - v).norm() <= tol * (1.0 + v.norm());
            });
            if (!dup)
                pts.push_back(v);
        }
    }
    if (pts.empty())
        return pts;
    Eigen::Vector2d mid = Eigen::Vector2d::Zero();
    for (const auto& v : pts)
        mid += v;
    mid /= static_cast<double>(pts.size());
    std::sort(pts.begin(), pts.end(), [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return std::atan2(a.y() - mid.y(), a.x() - mid.x()) < std::atan2(b.y() - mid.y(), b.x() - mid.x());
    });
    // Start from the lowest-leftmost vertex for a stable presentation.
    auto first = std::min_element(pts.begin(), pts.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return a.y() < b.y() - 1e-12 || (std::abs(a.y() - b.y()) <= 1e-12 && a.x() < b.x());
    });
    std::rotate(pts.begin(), first, pts.end());
    return pts;
}

}  // namespace regmpc
