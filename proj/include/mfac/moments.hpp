#pragma once

#include <Eigen/Dense>

#include "mfac/multi_index.hpp"

namespace mfac {

namespace detail {

/// Powers x^0..x^max_deg by repeated multiplication (exact at x=0, 0^0 = 1).
inline void power_table(const Eigen::Ref<const Eigen::VectorXd>& xi, int max_deg,
                        Eigen::MatrixXd& powers) {
    const int d = static_cast<int>(xi.size());
    powers.resize(max_deg + 1, d);
    powers.row(0).setOnes();
    for (int deg = 1; deg <= max_deg; ++deg)
        for (int i = 0; i < d; ++i)
            powers(deg, i) = powers(deg - 1, i) * xi[i];
}

}  // namespace detail

/// Monomial xi^l = prod_i xi_i^{l_i} with 0^0 = 1.
inline double monomial(const Eigen::Ref<const Eigen::VectorXd>& xi, std::span<const int> l) {
    double value = 1.0;
    for (int i = 0; i < static_cast<int>(l.size()); ++i) {
        double p = 1.0;
        for (int rep = 0; rep < l[static_cast<std::size_t>(i)]; ++rep) p *= xi[i];
        value *= p;
    }
    return value;
}

/// Plain empirical moments of a particle slice (columns are particles):
/// entry for l is (1/M) sum_j prod_i particles(i,j)^{l_i}. No bias correction.
inline Eigen::VectorXd empirical_moments(const Eigen::Ref<const Eigen::MatrixXd>& particles,
                                         const MultiIndexSet& idx) {
    const int d = idx.dimension();
    const int m = static_cast<int>(particles.cols());
    if (particles.rows() != d)
        throw std::invalid_argument("empirical_moments: particle dimension mismatch");
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(idx.size());
    Eigen::MatrixXd powers;
    for (int j = 0; j < m; ++j) {
        detail::power_table(particles.col(j), idx.order(), powers);
        for (int k = 0; k < idx.size(); ++k) {
            auto l = idx.at(k);
            double value = 1.0;
            for (int i = 0; i < d; ++i)
                if (l[static_cast<std::size_t>(i)] > 0) value *= powers(l[static_cast<std::size_t>(i)], i);
            sums[k] += value;
        }
    }
    return sums / static_cast<double>(m);
}

/// First derivatives of the monomial map: [D1]_{l,i} = l_i xi_i^{l_i-1} prod_{k!=i} xi_k^{l_k},
/// with the convention 0 * xi^{-1} = 0 when l_i = 0. Shape L_d x d.
inline Eigen::MatrixXd d1_tensor(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                 const MultiIndexSet& idx) {
    const int d = idx.dimension();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(idx.size(), d);
    Eigen::MatrixXd powers;
    detail::power_table(xi, idx.order(), powers);
    for (int k = 0; k < idx.size(); ++k) {
        auto l = idx.at(k);
        for (int i = 0; i < d; ++i) {
            const int li = l[static_cast<std::size_t>(i)];
            if (li == 0) continue;
            double value = li * powers(li - 1, i);
            for (int c = 0; c < d; ++c)
                if (c != i && l[static_cast<std::size_t>(c)] > 0)
                    value *= powers(l[static_cast<std::size_t>(c)], c);
            out(k, i) = value;
        }
    }
    return out;
}

/// Second derivatives of the monomial map, packed L_d x (d*d) with column i*d+j:
///   diagonal      l_i (l_i - 1) xi_i^{l_i-2} prod_{k!=i} xi_k^{l_k}
///   off-diagonal  l_i l_j xi_i^{l_i-1} xi_j^{l_j-1} prod_{k!=i,j} xi_k^{l_k}
/// with l_i (l_i - 1) xi^{l_i-2} = 0 for l_i in {0, 1}. Symmetric in (i, j).
inline Eigen::MatrixXd d2_tensor(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                 const MultiIndexSet& idx) {
    const int d = idx.dimension();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(idx.size(), d * d);
    Eigen::MatrixXd powers;
    detail::power_table(xi, idx.order(), powers);
    for (int k = 0; k < idx.size(); ++k) {
        auto l = idx.at(k);
        for (int i = 0; i < d; ++i) {
            const int li = l[static_cast<std::size_t>(i)];
            if (li >= 2) {
                double value = static_cast<double>(li) * (li - 1) * powers(li - 2, i);
                for (int c = 0; c < d; ++c)
                    if (c != i && l[static_cast<std::size_t>(c)] > 0)
                        value *= powers(l[static_cast<std::size_t>(c)], c);
                out(k, i * d + i) = value;
            }
            for (int j = i + 1; j < d; ++j) {
                const int lj = l[static_cast<std::size_t>(j)];
                if (li == 0 || lj == 0) continue;
                double value = static_cast<double>(li) * lj * powers(li - 1, i) * powers(lj - 1, j);
                for (int c = 0; c < d; ++c)
                    if (c != i && c != j && l[static_cast<std::size_t>(c)] > 0)
                        value *= powers(l[static_cast<std::size_t>(c)], c);
                out(k, i * d + j) = value;
                out(k, j * d + i) = value;
            }
        }
    }
    return out;
}

/// Fused y^T D1(xi) without materializing the tensor: out[i] = sum_l y_l [D1]_{l,i}.
/// powers is caller-owned scratch. Equal to d1_tensor(xi,idx)^T y.
inline void d1_weighted(const Eigen::Ref<const Eigen::VectorXd>& xi, const MultiIndexSet& idx,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        Eigen::Ref<Eigen::VectorXd> out, Eigen::MatrixXd& powers) {
    const int d = idx.dimension();
    detail::power_table(xi, idx.order(), powers);
    out.setZero();
    for (int k = 0; k < idx.size(); ++k) {
        auto l = idx.at(k);
        for (int i = 0; i < d; ++i) {
            const int li = l[static_cast<std::size_t>(i)];
            if (li == 0) continue;
            double value = li * powers(li - 1, i);
            for (int c = 0; c < d; ++c)
                if (c != i && l[static_cast<std::size_t>(c)] > 0)
                    value *= powers(l[static_cast<std::size_t>(c)], c);
            out[i] += y[k] * value;
        }
    }
}

/// Fused y^T D2(xi), packed as in d2_tensor: out[i*d+j] = sum_l y_l [D2]_{l,i,j}.
inline void d2_weighted(const Eigen::Ref<const Eigen::VectorXd>& xi, const MultiIndexSet& idx,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        Eigen::Ref<Eigen::VectorXd> out, Eigen::MatrixXd& powers) {
    const int d = idx.dimension();
    detail::power_table(xi, idx.order(), powers);
    out.setZero();
    for (int k = 0; k < idx.size(); ++k) {
        auto l = idx.at(k);
        for (int i = 0; i < d; ++i) {
            const int li = l[static_cast<std::size_t>(i)];
            if (li >= 2) {
                double value = static_cast<double>(li) * (li - 1) * powers(li - 2, i);
                for (int c = 0; c < d; ++c)
                    if (c != i && l[static_cast<std::size_t>(c)] > 0)
                        value *= powers(l[static_cast<std::size_t>(c)], c);
                out[i * d + i] += y[k] * value;
            }
            for (int j = i + 1; j < d; ++j) {
                const int lj = l[static_cast<std::size_t>(j)];
                if (li == 0 || lj == 0) continue;
                double value = static_cast<double>(li) * lj * powers(li - 1, i) * powers(lj - 1, j);
                for (int c = 0; c < d; ++c)
                    if (c != i && c != j && l[static_cast<std::size_t>(c)] > 0)
                        value *= powers(l[static_cast<std::size_t>(c)], c);
                out[i * d + j] += y[k] * value;
                out[j * d + i] += y[k] * value;
            }
        }
    }
}

}  // namespace mfac
