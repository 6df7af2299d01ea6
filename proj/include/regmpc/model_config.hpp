#pragma once

#include "regmpc/lp.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <complex>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace regmpc {

struct LtiSystem {
    Matrix A;  // n x n
    Matrix B;  // n x m

    [[nodiscard]] Eigen::Index n() const noexcept { return A.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return B.cols(); }
};

struct OcpSpec {
    std::string name;
    LtiSystem sys;
    Matrix Q;
    Matrix R;
    int N = 1;
    HalfspacePolytope Xset;
    HalfspacePolytope Uset;
    std::optional<HalfspacePolytope> Tset;
    std::optional<Matrix> P;

    [[nodiscard]] Eigen::Index n() const noexcept { return sys.n(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return sys.m(); }
    [[nodiscard]] int q_X() const noexcept { return static_cast<int>(Xset.rows()); }
    [[nodiscard]] int q_U() const noexcept { return static_cast<int>(Uset.rows()); }
};

namespace detail {

inline constexpr double kEigTol = 1e-9;

inline double min_sym_eigenvalue(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// PBH rank test: rank [A - lambda I ; other] == n for every |lambda| >= 1.
// `stack_below` selects [A - lambda I; other] (detectability) vs [A - lambda I, other].
inline bool pbh_ok(const Matrix& A, const Matrix& other, bool stack_below) {
    const Eigen::Index n = A.rows();
    Eigen::ComplexEigenSolver<Matrix> es(A, false);
    using CMatrix = Eigen::MatrixXcd;
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::complex<double> lambda = es.eigenvalues()(k);
        if (std::abs(lambda) < 1.0 - kEigTol)
            continue;
        CMatrix shifted = A.cast<std::complex<double>>() - lambda * CMatrix::Identity(n, n);
        CMatrix M;
        if (stack_below) {
            M.resize(n + other.rows(), n);
            M << shifted, other.cast<std::complex<double>>();
        } else {
            M.resize(n, n + other.cols());
            M << shifted, other.cast<std::complex<double>>();
        }
        Eigen::JacobiSVD<CMatrix> svd(M);
        const auto& sv = svd.singularValues();
        const double scale = std::max(1.0, sv.size() ? sv(0) : 0.0);
        Eigen::Index rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            rank += sv(i) > kEigTol * scale ? 1 : 0;
        if (rank < n)
            return false;
    }
    return true;
}

inline Matrix sym_sqrt(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
    Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix parse_matrix(const nlohmann::json& j, const std::string& key) {
    if (j.is_number())
        return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty())
        throw ParseError("'" + key + "' must be a number or a non-empty array of rows");
    if (j.front().is_number()) {
        // A flat array is a single row.
        Matrix M(1, static_cast<Eigen::Index>(j.size()));
        for (std::size_t c = 0; c < j.size(); ++c) {
            if (!j[c].is_number())
                throw ParseError("'" + key + "' mixes numbers and rows");
            M(0, static_cast<Eigen::Index>(c)) = j[c].get<double>();
        }
        return M;
    }
    const std::size_t rows = j.size();
    const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
    Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array())
            throw ParseError("'" + key + "' row " + std::to_string(r) + " is not an array");
        if (j[r].size() != cols)
            throw DimensionError("'" + key + "' is ragged: row " + std::to_string(r) + " has " +
                                 std::to_string(j[r].size()) + " entries, expected " + std::to_string(cols));
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number())
                throw ParseError("'" + key + "' has a non-numeric entry");
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
        }
    }
    return M;
}

inline Vector parse_vector(const nlohmann::json& j, const std::string& key) {
    if (j.is_number())
        return Vector::Constant(1, j.get<double>());
    if (!j.is_array())
        throw ParseError("'" + key + "' must be an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw ParseError("'" + key + "' has a non-numeric entry");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline HalfspacePolytope parse_polytope(const nlohmann::json& j, const std::string& key, Eigen::Index dim) {
    if (!j.is_object() || !j.contains("C") || !j.contains("c"))
        throw ParseError("'" + key + "' must be an object with 'C' and 'c'");
    Matrix C = parse_matrix(j.at("C"), key + ".C");
    Vector c = parse_vector(j.at("c"), key + ".c");
    // A single-row C written as a flat array for a 1-D set is a column.
    if (dim == 1 && C.rows() == 1 && C.cols() > 1 && c.size() == C.cols())
        C.transposeInPlace();
    if (C.cols() != dim)
        throw DimensionError("'" + key + ".C' has " + std::to_string(C.cols()) + " columns, expected " +
                             std::to_string(dim));
    if (C.rows() != c.size())
        throw DimensionError("'" + key + "': C has " + std::to_string(C.rows()) + " rows but c has " +
                             std::to_string(c.size()) + " entries");
    return {std::move(C), std::move(c)};
}

inline nlohmann::json matrix_json(const Matrix& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c)
            row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json vector_json(const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        arr.push_back(v(i));
    return arr;
}

inline nlohmann::json polytope_json(const HalfspacePolytope& p) {
    return {{"C", matrix_json(p.C)}, {"c", vector_json(p.c)}};
}

}  // namespace detail

using detail::matrix_json;
using detail::polytope_json;
using detail::vector_json;

// Violations of the problem assumptions, as readable strings. Empty when the
// problem is well posed.
[[nodiscard]] inline std::vector<std::string> validate_ocp(const OcpSpec& spec) {
    std::vector<std::string> out;
    const Eigen::Index n = spec.sys.A.rows();
    const Eigen::Index m = spec.sys.B.cols();
    if (spec.sys.A.cols() != n || n == 0)
        out.emplace_back("A is not square");
    if (spec.sys.B.rows() != n || m == 0)
        out.emplace_back("B has wrong dimensions");
    if (spec.Q.rows() != n || spec.Q.cols() != n)
        out.emplace_back("Q has wrong dimensions");
    if (spec.R.rows() != m || spec.R.cols() != m)
        out.emplace_back("R has wrong dimensions");
    if (spec.N < 1)
        out.emplace_back("horizon N must be positive");
    if (spec.Xset.dim() != n)
        out.emplace_back("X has wrong dimension");
    if (spec.Uset.dim() != m)
        out.emplace_back("U has wrong dimension");
    if (spec.Tset && spec.Tset->dim() != n)
        out.emplace_back("T has wrong dimension");
    if (spec.P && (spec.P->rows() != n || spec.P->cols() != n))
        out.emplace_back("P has wrong dimensions");
    if (!out.empty())
        return out;

    if ((spec.Q - spec.Q.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, spec.Q.cwiseAbs().maxCoeff()))
        out.emplace_back("Q not symmetric");
    else if (detail::min_sym_eigenvalue(spec.Q) < -1e-9)
        out.emplace_back("Q not positive semidefinite");
    if ((spec.R - spec.R.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, spec.R.cwiseAbs().maxCoeff()))
        out.emplace_back("R not symmetric");
    else if (detail::min_sym_eigenvalue(spec.R) <= 1e-12)
        out.emplace_back("R not positive definite");
    if (spec.P && detail::min_sym_eigenvalue(*spec.P) <= 1e-12)
        out.emplace_back("P not positive definite");

    if (!detail::pbh_ok(spec.sys.A, spec.sys.B, false))
        out.emplace_back("not stabilizable");
    if (!detail::pbh_ok(spec.sys.A, detail::sym_sqrt(spec.Q), true))
        out.emplace_back("not detectable");

    auto check_set = [&](const HalfspacePolytope& set, const std::string& label) {
        if ((set.c.array() <= 0.0).any())
            out.emplace_back("origin not interior of " + label);
        if (!polytope_is_bounded(set))
            out.emplace_back(label + " unbounded");
    };
    check_set(spec.Xset, "X");
    check_set(spec.Uset, "U");
    if (spec.Tset) {
        check_set(*spec.Tset, "T");
        if (!polytope_subset(*spec.Tset, spec.Xset))
            out.emplace_back("T not contained in X");
    }
    return out;
}

[[nodiscard]] inline nlohmann::json ocp_to_json(const OcpSpec& spec) {
    nlohmann::json j;
    if (!spec.name.empty())
        j["name"] = spec.name;
    j["A"] = matrix_json(spec.sys.A);
    j["B"] = matrix_json(spec.sys.B);
    j["Q"] = matrix_json(spec.Q);
    j["R"] = matrix_json(spec.R);
    j["N"] = spec.N;
    j["X"] = polytope_json(spec.Xset);
    j["U"] = polytope_json(spec.Uset);
    if (spec.Tset)
        j["T"] = polytope_json(*spec.Tset);
    if (spec.P)
        j["P"] = matrix_json(*spec.P);
    return j;
}

// Parses without the assumption checks.
[[nodiscard]] inline OcpSpec ocp_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ParseError("config root must be an object");
    for (const char* key : {"A", "B", "Q", "R", "N", "X", "U"}) {
        if (!j.contains(key))
            throw ParseError(std::string("missing key '") + key + "'");
    }
    OcpSpec spec;
    spec.name = j.value("name", std::string{});
    spec.sys.A = detail::parse_matrix(j.at("A"), "A");
    spec.sys.B = detail::parse_matrix(j.at("B"), "B");
    const Eigen::Index n = spec.sys.A.rows();
    if (spec.sys.A.cols() != n)
        throw DimensionError("A must be square, got " + std::to_string(n) + "x" + std::to_string(spec.sys.A.cols()));
    if (spec.sys.B.rows() == 1 && n > 1 && spec.sys.B.cols() == n)
        spec.sys.B.transposeInPlace();  // flat B for a single input
    if (spec.sys.B.rows() != n)
        throw DimensionError("B must have " + std::to_string(n) + " rows");
    const Eigen::Index m = spec.sys.B.cols();
    spec.Q = detail::parse_matrix(j.at("Q"), "Q");
    spec.R = detail::parse_matrix(j.at("R"), "R");
    if (spec.Q.rows() != n || spec.Q.cols() != n)
        throw DimensionError("Q must be " + std::to_string(n) + "x" + std::to_string(n));
    if (spec.R.rows() != m || spec.R.cols() != m)
        throw DimensionError("R must be " + std::to_string(m) + "x" + std::to_string(m));
    if (!j.at("N").is_number_integer())
        throw ParseError("'N' must be an integer");
    spec.N = j.at("N").get<int>();
    spec.Xset = detail::parse_polytope(j.at("X"), "X", n);
    spec.Uset = detail::parse_polytope(j.at("U"), "U", m);
    if (j.contains("T"))
        spec.Tset = detail::parse_polytope(j.at("T"), "T", n);
    if (j.contains("P")) {
        spec.P = detail::parse_matrix(j.at("P"), "P");
        if (spec.P->rows() != n || spec.P->cols() != n)
            throw DimensionError("P must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    return spec;
}

// Throws AssumptionError listing every violation.
inline void require_valid(const OcpSpec& spec) {
    const auto violations = validate_ocp(spec);
    if (violations.empty())
        return;
    std::string msg = "invalid problem:";
    for (const auto& v : violations)
        msg += " " + v + ";";
    throw AssumptionError(msg);
}

[[nodiscard]] inline OcpSpec load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config '" + path.string() + "': " + e.what());
    }
    OcpSpec spec = ocp_from_json(j);
    require_valid(spec);
    return spec;
}

inline void save_config(const OcpSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot write '" + path.string() + "'");
    out << ocp_to_json(spec).dump(2) << "\n";
}

}  // namespace regmpc
