#pragma once

#include "regmpc/condense.hpp"

namespace regmpc {

enum class QpStatus { Optimal, Infeasible };

struct QpResult {
    QpStatus status = QpStatus::Infeasible;
    Vector U_star;
    ActiveSet active;       // rows tight at U_star (residual test)
    Vector multipliers;     // length q, zero off the working set
    ActiveSet working_set;  // linearly independent rows carrying the multipliers
    int iterations = 0;

    [[nodiscard]] bool optimal() const noexcept { return status == QpStatus::Optimal; }
    [[nodiscard]] Vector first_input(Eigen::Index m) const { return U_star.head(m); }
};

struct QpOptions {
    double violation_tol = 1e-10;  // on row-normalized violations when adding constraints
    double active_rel_tol = 1e-8;  // |residual| <= tol * (1 + |rhs_i|)
    int max_iterations = 0;        // 0: 10 q + 50
};

namespace detail {

// Dual active-set method of Goldfarb & Idnani for
//   min 1/2 U'HU + g'U  s.t.  G U <= b.
// Starts at the unconstrained minimizer and adds the most violated row
// (ties: lowest index) until primal feasible.
inline QpResult goldfarb_idnani(const Eigen::LLT<Matrix>& H_llt, const Matrix& Hinv, const Vector& g,
                                const Matrix& G, const Vector& b, const QpOptions& opt) {
    const Eigen::Index nv = Hinv.rows();
    const Eigen::Index q = G.rows();
    const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(10 * q + 50);
    const Vector norms = G.rowwise().norm();
    const double norm_scale = std::max(1.0, norms.size() ? norms.maxCoeff() : 0.0);

    QpResult res;
    res.multipliers = Vector::Zero(q);
    Vector U = -H_llt.solve(g);
    std::vector<Eigen::Index> W;
    std::vector<double> lam;

    auto working_matrices = [&](Matrix& J, Eigen::LDLT<Matrix>& Mw) {
        Matrix Nw(nv, static_cast<Eigen::Index>(W.size()));
        for (std::size_t k = 0; k < W.size(); ++k)
            Nw.col(static_cast<Eigen::Index>(k)) = G.row(W[k]).transpose();
        J = Hinv * Nw;
        Mw.compute(Nw.transpose() * J);
    };

    // Rows with a zero normal can only be satisfied by their right-hand side.
    for (Eigen::Index i = 0; i < q; ++i) {
        if (norms(i) <= 1e-14 * norm_scale && b(i) < -opt.violation_tol * (1.0 + std::abs(b(i))))
            return res;
    }

    int it = 0;
    while (true) {
        Eigen::Index p = -1;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < q; ++i) {
            if (norms(i) <= 1e-14 * norm_scale)
                continue;
            const double v = (G.row(i).dot(U) - b(i)) / norms(i);
            if (v <= opt.violation_tol * (1.0 + std::abs(b(i)) / norms(i)) || v <= worst)
                continue;
            if (std::find(W.begin(), W.end(), i) != W.end())
                continue;
            worst = v;
            p = i;
        }
        if (p < 0)
            break;

        double lam_p = 0.0;
        const Vector a = G.row(p).transpose();
        const double aHa = a.dot(Hinv * a);
        while (true) {
            if (++it > max_iter)
                throw MaxIterations("solve_qp: iteration limit reached");
            Vector z, r;
            if (W.empty()) {
                z = Hinv * a;
            } else {
                Matrix J;
                Eigen::LDLT<Matrix> Mw;
                working_matrices(J, Mw);
                r = Mw.solve(J.transpose() * a);
                z = Hinv * a - J * r;
            }
            double t1 = std::numeric_limits<double>::infinity();
            Eigen::Index drop = -1;
            for (Eigen::Index j = 0; j < r.size(); ++j) {
                if (r(j) > 1e-12) {
                    const double ratio = lam[static_cast<std::size_t>(j)] / r(j);
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = j;
                    }
                }
            }
            const double za = a.dot(z);
            const double t2 = za > 1e-10 * aHa ? (a.dot(U) - b(p)) / za : std::numeric_limits<double>::infinity();
            if (!std::isfinite(t1) && !std::isfinite(t2)) {
                res.iterations = it;
                return res;  // infeasible
            }
            const double t = std::min(t1, t2);
            if (std::isfinite(t2))
                U -= t * z;
            for (Eigen::Index j = 0; j < r.size(); ++j)
                lam[static_cast<std::size_t>(j)] -= t * r(j);
            lam_p += t;
            if (t2 <= t1) {
                W.push_back(p);
                lam.push_back(lam_p);
                break;
            }
            W.erase(W.begin() + drop);
            lam.erase(lam.begin() + drop);
        }
    }

    // Re-solve the equality-constrained problem on the final working set.
    if (!W.empty()) {
        Matrix J;
        Eigen::LDLT<Matrix> Mw;
        working_matrices(J, Mw);
        Vector bW(static_cast<Eigen::Index>(W.size()));
        for (std::size_t k = 0; k < W.size(); ++k)
            bW(static_cast<Eigen::Index>(k)) = b(W[k]);
        const Vector lamW = -Mw.solve(bW + J.transpose() * g);
        if (lamW.minCoeff() >= -1e-10) {
            Vector Nl = Vector::Zero(nv);
            for (std::size_t k = 0; k < W.size(); ++k)
                Nl += lamW(static_cast<Eigen::Index>(k)) * G.row(W[k]).transpose();
            U = -H_llt.solve(g + Nl);
            for (std::size_t k = 0; k < W.size(); ++k)
                lam[k] = std::max(0.0, lamW(static_cast<Eigen::Index>(k)));
        }
    }

    res.status = QpStatus::Optimal;
    res.U_star = U;
    res.iterations = it;
    std::vector<int> widx;
    for (std::size_t k = 0; k < W.size(); ++k) {
        res.multipliers(W[k]) = lam[k];
        widx.push_back(static_cast<int>(W[k]) + 1);
    }
    res.working_set = ActiveSet(std::move(widx));
    std::vector<int> act;
    const Vector resid = b - G * U;
    for (Eigen::Index i = 0; i < q; ++i) {
        if (std::abs(resid(i)) <= opt.active_rel_tol * (1.0 + std::abs(b(i))))
            act.push_back(static_cast<int>(i) + 1);
    }
    res.active = ActiveSet(std::move(act));
    return res;
}

}  // namespace detail

[[nodiscard]] inline QpResult solve_qp(const CondensedQp& qp, const Vector& x, const QpOptions& opt = {}) {
    if (x.size() != qp.n)
        throw DimensionError("solve_qp: state has wrong dimension");
    const Vector g = qp.F.transpose() * x;
    return detail::goldfarb_idnani(qp.H_llt, qp.Hinv, g, qp.G, qp.rhs(x), opt);
}

struct KktResiduals {
    double stationarity = 0.0;    // ||H U + F'x + G'lambda||_inf
    double primal = 0.0;          // max(G U - w - E x), clipped at 0
    double complementarity = 0.0; // max |lambda_i (G_i U - w_i - E_i x)|
    double min_multiplier = 0.0;
};

[[nodiscard]] inline KktResiduals kkt_residuals(const CondensedQp& qp, const Vector& x, const QpResult& r) {
    KktResiduals k;
    const Vector slack = qp.G * r.U_star - qp.rhs(x);
    k.stationarity = (qp.H * r.U_star + qp.F.transpose() * x + qp.G.transpose() * r.multipliers).cwiseAbs().maxCoeff();
    k.primal = std::max(0.0, slack.maxCoeff());
    k.complementarity = r.multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff();
    k.min_multiplier = r.multipliers.size() ? r.multipliers.minCoeff() : 0.0;
    return k;
}

}  // namespace regmpc
