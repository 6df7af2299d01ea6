#pragma once

#include "regmpc/lqr_terminal.hpp"

namespace regmpc {

// min 1/2 U'HU + x'FU + 1/2 x'Yx  s.t.  G U <= w + E x,   U = (u(0),...,u(N-1)).
//
// Constraint rows are ordered stage by stage:
//   [u(0) in U, x(1) in X], [u(1) in U, x(2) in X], ..., [u(N-1) in U, x(N) in T], [x(0) in X]
// so that the first q_stage = q_U + q_X rows only involve u(0).
struct CondensedQp {
    Eigen::Index n = 0, m = 0;
    int N = 0;
    int q = 0, q_U = 0, q_X = 0, q_T = 0, q_stage = 0;

    Matrix H, F, Y;
    Matrix G;
    Vector w;
    Matrix E;
    Matrix S;  // E + G H^-1 F'

    Matrix Phi;       // (nN x n): rows of stacked A^k, k = 1..N
    Matrix Gamma;     // (nN x mN): input-to-state map

    Eigen::LLT<Matrix> H_llt;
    Matrix Hinv;
    Matrix HinvFt;  // H^-1 F'   (mN x n)
    Matrix GHinv;   // G H^-1    (q x mN)

    [[nodiscard]] Eigen::Index num_vars() const noexcept { return m * N; }

    // G^11, E^1, w^1: the rows that only involve u(0).
    [[nodiscard]] auto G11() const { return G.topLeftCorner(q_stage, m); }
    [[nodiscard]] auto E1() const { return E.topRows(q_stage); }
    [[nodiscard]] auto w1() const { return w.head(q_stage); }

    // Right-hand side w + E x.
    [[nodiscard]] Vector rhs(const Vector& x) const { return w + E * x; }

    // States x(1..N) predicted for (x, U), stacked.
    [[nodiscard]] Vector predict(const Vector& x, const Vector& U) const { return Phi * x + Gamma * U; }
};

inline CondensedQp build_condensed_qp(const OcpSpec& spec, const Matrix& P, const HalfspacePolytope& tset) {
    const Matrix& A = spec.sys.A;
    const Matrix& B = spec.sys.B;
    const Eigen::Index n = A.rows(), m = B.cols();
    const int N = spec.N;
    if (N < 1)
        throw DimensionError("build_condensed_qp: horizon must be positive");
    if (P.rows() != n || P.cols() != n || tset.dim() != n || spec.Xset.dim() != n || spec.Uset.dim() != m)
        throw DimensionError("build_condensed_qp: inconsistent dimensions");
    if (tset.rows() == 0)
        throw DimensionError("build_condensed_qp: terminal set has no rows");

    CondensedQp qp;
    qp.n = n;
    qp.m = m;
    qp.N = N;
    qp.q_U = spec.q_U();
    qp.q_X = spec.q_X();
    qp.q_T = static_cast<int>(tset.rows());
    qp.q_stage = qp.q_U + qp.q_X;
    qp.q = N * qp.q_U + (N - 1) * qp.q_X + qp.q_T + qp.q_X;

    const Eigen::Index nv = m * N;
    qp.Phi = Matrix::Zero(n * N, n);
    qp.Gamma = Matrix::Zero(n * N, nv);
    Matrix Ak = Matrix::Identity(n, n);
    for (int k = 0; k < N; ++k) {
        // x(k+1) = A^(k+1) x0 + sum_{j<=k} A^(k-j) B u(j)
        for (int j = 0; j <= k; ++j) {
            if (j == 0)
                qp.Gamma.block(k * n, k * m, n, m) = B;
            else
                qp.Gamma.block(k * n, (k - j) * m, n, m) = A * qp.Gamma.block((k - 1) * n, (k - j) * m, n, m);
        }
        Ak = A * Ak;
        qp.Phi.block(k * n, 0, n, n) = Ak;
    }

    Matrix Qbar = Matrix::Zero(n * N, n * N);
    for (int k = 0; k < N - 1; ++k)
        Qbar.block(k * n, k * n, n, n) = spec.Q;
    Qbar.block((N - 1) * n, (N - 1) * n, n, n) = P;
    Matrix Rbar = Matrix::Zero(nv, nv);
    for (int k = 0; k < N; ++k)
        Rbar.block(k * m, k * m, m, m) = spec.R;

    const Matrix QG = Qbar * qp.Gamma;
    qp.H = 2.0 * (qp.Gamma.transpose() * QG + Rbar);
    qp.H = (0.5 * (qp.H + qp.H.transpose())).eval();
    qp.F = 2.0 * qp.Phi.transpose() * QG;
    qp.Y = 2.0 * (spec.Q + qp.Phi.transpose() * Qbar * qp.Phi);
    qp.Y = (0.5 * (qp.Y + qp.Y.transpose())).eval();

    qp.G = Matrix::Zero(qp.q, nv);
    qp.w = Vector::Zero(qp.q);
    qp.E = Matrix::Zero(qp.q, n);
    Eigen::Index row = 0;
    for (int k = 0; k < N; ++k) {
        qp.G.block(row, k * m, qp.q_U, m) = spec.Uset.C;
        qp.w.segment(row, qp.q_U) = spec.Uset.c;
        row += qp.q_U;
        const HalfspacePolytope& set = (k == N - 1) ? tset : spec.Xset;
        const Eigen::Index r = set.rows();
        qp.G.middleRows(row, r) = set.C * qp.Gamma.middleRows(k * n, n);
        qp.w.segment(row, r) = set.c;
        qp.E.middleRows(row, r) = -set.C * qp.Phi.middleRows(k * n, n);
        row += r;
    }
    qp.w.segment(row, qp.q_X) = spec.Xset.c;
    qp.E.middleRows(row, qp.q_X) = -spec.Xset.C;

    qp.H_llt.compute(qp.H);
    if (qp.H_llt.info() != Eigen::Success)
        throw AssumptionError("build_condensed_qp: H is not positive definite");
    qp.Hinv = qp.H_llt.solve(Matrix::Identity(nv, nv));
    qp.Hinv = (0.5 * (qp.Hinv + qp.Hinv.transpose())).eval();
    qp.HinvFt = qp.H_llt.solve(qp.F.transpose());
    qp.GHinv = qp.H_llt.solve(qp.G.transpose()).transpose();
    qp.S = qp.E + qp.G * qp.HinvFt;
    return qp;
}

inline CondensedQp build_condensed_qp(const OcpSpec& spec, const LqrSolution& lqr, const HalfspacePolytope& tset) {
    return build_condensed_qp(spec, lqr.P, tset);
}

[[nodiscard]] inline double eval_cost(const CondensedQp& qp, const Vector& x, const Vector& U) {
    if (x.size() != qp.n || U.size() != qp.num_vars())
        throw DimensionError("eval_cost: dimension mismatch");
    return 0.5 * U.dot(qp.H * U) + x.dot(qp.F * U) + 0.5 * x.dot(qp.Y * x);
}

inline nlohmann::json condensed_qp_json(const CondensedQp& qp) {
    return {{"n", qp.n},          {"m", qp.m},          {"N", qp.N},          {"q", qp.q},
            {"q_U", qp.q_U},      {"q_X", qp.q_X},      {"q_T", qp.q_T},      {"q_stage", qp.q_stage},
            {"H", matrix_json(qp.H)}, {"F", matrix_json(qp.F)}, {"Y", matrix_json(qp.Y)},
            {"G", matrix_json(qp.G)}, {"w", vector_json(qp.w)}, {"E", matrix_json(qp.E)},
            {"S", matrix_json(qp.S)}};
}

// Everything the online layer needs for one problem instance.
struct Problem {
    OcpSpec spec;
    TerminalIngredients terminal;
    CondensedQp qp;
};

inline Problem make_problem(OcpSpec spec) {
    Problem p;
    p.terminal = terminal_ingredients(spec);
    p.qp = build_condensed_qp(spec, p.terminal.lqr.P, p.terminal.Tset);
    p.spec = std::move(spec);
    return p;
}

}  // namespace regmpc
