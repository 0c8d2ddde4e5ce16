#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfac {

/// Set of multi-indices l = (l_1,...,l_d) with 1 <= l_1+...+l_d <= L.
///
/// The constant index (0,...,0) is excluded, so the cardinality is
/// C(d+L, d) - 1. Ordering is graded: ascending total degree, and within a
/// degree the leading coordinate decreases first, e.g. for d=2, L=2:
/// (1,0), (0,1), (2,0), (1,1), (0,2). The ordering is part of the moment
/// vector layout and must never change.
class MultiIndexSet {
public:
    MultiIndexSet(int dimension, int order)
        : dimension_(dimension), order_(order) {
        if (dimension < 1 || order < 1)
            throw std::invalid_argument("MultiIndexSet: dimension and order must be >= 1");
        std::vector<int> current(static_cast<std::size_t>(dimension), 0);
        for (int degree = 1; degree <= order; ++degree)
            emit(current, 0, degree);
    }

    int dimension() const { return dimension_; }
    int order() const { return order_; }

    /// Number of indices, L_d = C(d+L, d) - 1.
    int size() const { return static_cast<int>(flat_.size()) / dimension_; }

    /// The k-th multi-index as a span of d exponents.
    std::span<const int> at(int k) const {
        return {flat_.data() + static_cast<std::size_t>(k) * dimension_,
                static_cast<std::size_t>(dimension_)};
    }

    std::span<const int> operator[](int k) const { return at(k); }

private:
    void emit(std::vector<int>& current, int coord, int remaining) {
        if (coord == dimension_ - 1) {
            current[static_cast<std::size_t>(coord)] = remaining;
            flat_.insert(flat_.end(), current.begin(), current.end());
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            current[static_cast<std::size_t>(coord)] = e;
            emit(current, coord + 1, remaining - e);
        }
        current[static_cast<std::size_t>(coord)] = 0;
    }

    int dimension_;
    int order_;
    std::vector<int> flat_;
};

/// C(n, k) in exact integer arithmetic; used for cardinality checks.
inline std::int64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    std::int64_t r = 1;
    for (int i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return r;
}

}  // namespace mfac
