#pragma once

#include "regmpc/model_config.hpp"

namespace regmpc {

// Closed loop x+ = (A + B K) x under u = K x.
struct LqrSolution {
    Matrix P;
    Matrix K;
    int iterations = 0;
};

[[nodiscard]] inline double spectral_radius(const Matrix& M) {
    Eigen::ComplexEigenSolver<Matrix> es(M, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

[[nodiscard]] inline Matrix lqr_gain(const Matrix& A, const Matrix& B, const Matrix& R, const Matrix& P) {
    const Matrix BtP = B.transpose() * P;
    return -(R + BtP * B).ldlt().solve(BtP * A);
}

[[nodiscard]] inline Matrix dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                          const Matrix& P) {
    const Matrix AtP = A.transpose() * P;
    const Matrix next = AtP * A - AtP * B * (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A) + Q;
    return P - next;
}

// Riccati recursion from P0 = Q until the relative change drops below `tol`.
inline LqrSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                              double tol = 1e-12, int max_iter = 10000) {
    Matrix P = 0.5 * (Q + Q.transpose());
    for (int it = 1; it <= max_iter; ++it) {
        const Matrix AtP = A.transpose() * P;
        Matrix next = AtP * A - AtP * B * (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A) + Q;
        next = (0.5 * (next + next.transpose())).eval();
        const double change = (next - P).norm();
        P = std::move(next);
        if (change <= tol * std::max(1.0, P.norm()))
            return {P, lqr_gain(A, B, R, P), it};
    }
    throw NoConvergence("solve_dare: no convergence within " + std::to_string(max_iter) + " iterations");
}

inline LqrSolution solve_dare(const OcpSpec& spec) { return solve_dare(spec.sys.A, spec.sys.B, spec.Q, spec.R); }

struct TerminalSetInfo {
    HalfspacePolytope set;
    int k_star = 0;  // last prediction step whose rows were needed
};

// Maximal constraint-admissible invariant set of x+ = (A + B K) x subject to
// x in X and K x in U (Gilbert & Tan). Rows are built for k = 0, 1, ... until
// every row of step k*+1 is redundant over the rows collected so far; the
// result is then stripped of redundant rows.
inline TerminalSetInfo gilbert_tan(const Matrix& A, const Matrix& B, const Matrix& K, const HalfspacePolytope& X,
                                   const HalfspacePolytope& U, int max_k = 500, double tol = kContainTol) {
    const Eigen::Index n = A.rows();
    const Matrix Acl = A + B * K;
    Matrix Hc(X.rows() + U.rows(), n);
    Hc << X.C, U.C * K;
    Vector h(X.rows() + U.rows());
    h << X.c, U.c;

    HalfspacePolytope acc = normalized(HalfspacePolytope(Hc, h));
    Matrix step_rows = Hc;  // Hc * Acl^k
    for (int k = 0; k < max_k; ++k) {
        step_rows = step_rows * Acl;
        const HalfspacePolytope next = normalized(HalfspacePolytope(step_rows, h));
        std::vector<Eigen::Index> needed;
        for (Eigen::Index i = 0; i < next.rows(); ++i) {
            const LpResult res = polytope_maximize(acc, next.C.row(i).transpose());
            if (res.status == LpStatus::Infeasible)
                throw EmptySet("gilbert_tan: constraint set is empty");
            if (res.status == LpStatus::Unbounded || res.value > next.c(i) + tol)
                needed.push_back(i);
        }
        if (needed.empty())
            return {remove_redundant(acc, tol), k};
        Matrix C(acc.rows() + static_cast<Eigen::Index>(needed.size()), n);
        Vector c(C.rows());
        C.topRows(acc.rows()) = acc.C;
        c.head(acc.rows()) = acc.c;
        for (std::size_t j = 0; j < needed.size(); ++j) {
            C.row(acc.rows() + static_cast<Eigen::Index>(j)) = next.C.row(needed[j]);
            c(acc.rows() + static_cast<Eigen::Index>(j)) = next.c(needed[j]);
        }
        acc = HalfspacePolytope(std::move(C), std::move(c));
    }
    throw NoTermination("gilbert_tan: no finite determination within " + std::to_string(max_k) + " steps");
}

inline TerminalSetInfo gilbert_tan_terminal_set(const OcpSpec& spec, const LqrSolution& lqr) {
    if (spectral_radius(spec.sys.A + spec.sys.B * lqr.K) >= 1.0)
        throw AssumptionError("gilbert_tan: LQR closed loop is not asymptotically stable");
    return gilbert_tan(spec.sys.A, spec.sys.B, lqr.K, spec.Xset, spec.Uset);
}

// P and T as used by the condensed problem: taken from the config when given,
// computed otherwise.
struct TerminalIngredients {
    LqrSolution lqr;
    HalfspacePolytope Tset;
    int k_star = -1;  // -1 when T came from the config
};

inline TerminalIngredients terminal_ingredients(const OcpSpec& spec) {
    TerminalIngredients out;
    out.lqr = solve_dare(spec);
    if (spec.P) {
        out.lqr.P = *spec.P;
        out.lqr.K = lqr_gain(spec.sys.A, spec.sys.B, spec.R, *spec.P);
    }
    if (spec.Tset) {
        out.Tset = *spec.Tset;
    } else {
        auto gt = gilbert_tan_terminal_set(spec, out.lqr);
        out.Tset = std::move(gt.set);
        out.k_star = gt.k_star;
    }
    return out;
}

}  // namespace regmpc
