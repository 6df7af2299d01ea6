#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace regmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ============================================================================
// Errors
// ============================================================================

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define REGMPC_ERROR(Name)               \
    struct Name : Error {                \
        using Error::Error;              \
    }

REGMPC_ERROR(ParseError);
REGMPC_ERROR(DimensionError);
REGMPC_ERROR(AssumptionError);
REGMPC_ERROR(NoConvergence);
REGMPC_ERROR(NoTermination);
REGMPC_ERROR(InfeasibleError);
REGMPC_ERROR(MaxIterations);
REGMPC_ERROR(RankDeficient);
REGMPC_ERROR(Singular);
REGMPC_ERROR(FamilyTooLarge);
REGMPC_ERROR(IndexOutOfRange);
REGMPC_ERROR(Unbounded);
REGMPC_ERROR(EmptySet);
REGMPC_ERROR(ProtocolError);

#undef REGMPC_ERROR

// ============================================================================
// ActiveSet
// ============================================================================
// Indices are 1-based constraint numbers, kept strictly increasing.

class ActiveSet {
public:
    ActiveSet() = default;
    ActiveSet(std::initializer_list<int> idx) : ActiveSet(std::vector<int>(idx)) {}
    explicit ActiveSet(std::vector<int> idx) : indices_(std::move(idx)) {
        std::sort(indices_.begin(), indices_.end());
        indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
        if (!indices_.empty() && indices_.front() < 1)
            throw IndexOutOfRange("active set indices are 1-based");
    }

    [[nodiscard]] const std::vector<int>& indices() const noexcept { return indices_; }
    [[nodiscard]] std::size_t size() const noexcept { return indices_.size(); }
    [[nodiscard]] bool empty() const noexcept { return indices_.empty(); }
    [[nodiscard]] int max_index() const noexcept { return indices_.empty() ? 0 : indices_.back(); }

    [[nodiscard]] bool contains(int i) const {
        return std::binary_search(indices_.begin(), indices_.end(), i);
    }
    [[nodiscard]] bool is_subset_of(const ActiveSet& other) const {
        return std::includes(other.indices_.begin(), other.indices_.end(), indices_.begin(), indices_.end());
    }

    // 0-based row indices for Eigen slicing.
    [[nodiscard]] std::vector<Eigen::Index> rows() const {
        std::vector<Eigen::Index> r;
        r.reserve(indices_.size());
        for (int i : indices_)
            r.push_back(i - 1);
        return r;
    }

    // Complement within {1..q}, as 0-based rows.
    [[nodiscard]] std::vector<Eigen::Index> complement_rows(int q) const {
        std::vector<Eigen::Index> r;
        r.reserve(static_cast<std::size_t>(q) - std::min<std::size_t>(indices_.size(), q));
        auto it = indices_.begin();
        for (int i = 1; i <= q; ++i) {
            if (it != indices_.end() && *it == i) {
                ++it;
                continue;
            }
            r.push_back(i - 1);
        }
        return r;
    }

    std::string to_string() const {
        std::string s = "{";
        for (std::size_t k = 0; k < indices_.size(); ++k) {
            if (k)
                s += ",";
            s += std::to_string(indices_[k]);
        }
        return s + "}";
    }

    friend bool operator==(const ActiveSet&, const ActiveSet&) = default;

    // Orders by the binary number sum_{i in A} 2^(i-1): the set owning the
    // highest index not shared with the other is larger.
    friend bool binary_less(const ActiveSet& a, const ActiveSet& b) {
        auto ia = a.indices_.rbegin();
        auto ib = b.indices_.rbegin();
        for (; ia != a.indices_.rend() && ib != b.indices_.rend(); ++ia, ++ib) {
            if (*ia != *ib)
                return *ia < *ib;
        }
        return ia == a.indices_.rend() && ib != b.indices_.rend();
    }

    // Lexicographic on the index lists; only used as a map key order.
    friend bool operator<(const ActiveSet& a, const ActiveSet& b) { return a.indices_ < b.indices_; }

private:
    std::vector<int> indices_;
};

struct BinaryDescending {
    bool operator()(const ActiveSet& a, const ActiveSet& b) const { return binary_less(b, a); }
};

}  // namespace regmpc
