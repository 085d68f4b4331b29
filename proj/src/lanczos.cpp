#include "lanczos.hpp"

#include "dvis/error.hpp"
#include "dvis/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dvis::detail {

namespace {

void orthogonalize(const Eigen::MatrixXd& basis, Eigen::Index cols, Eigen::VectorXd& w) {
    // Classical Gram-Schmidt applied twice.
    for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd h = basis.leftCols(cols).transpose() * w;
        w.noalias() -= basis.leftCols(cols) * h;
    }
}

} // namespace

LanczosResult lanczos_largest_magnitude(const SparseMatrix& s, const KeepRule& keep, std::size_t max_dim,
                                        double tol, std::uint64_t seed) {
    const Eigen::Index n = s.rows();
    const Eigen::Index m_max = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(max_dim));
    Rng rng(seed);

    Eigen::MatrixXd basis(n, m_max);
    std::vector<double> alpha, beta;
    alpha.reserve(static_cast<std::size_t>(m_max));
    beta.reserve(static_cast<std::size_t>(m_max));

    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    v.normalize();
    basis.col(0) = v;

    Eigen::VectorXd w(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    std::vector<Eigen::Index> order;
    std::optional<std::size_t> decided;
    Eigen::Index dim = 0;

    for (Eigen::Index j = 0; j < m_max; ++j) {
        w.noalias() = s * basis.col(j);
        const double a = basis.col(j).dot(w);
        alpha.push_back(a);
        w -= a * basis.col(j);
        if (j > 0) w -= beta[static_cast<std::size_t>(j - 1)] * basis.col(j - 1);
        orthogonalize(basis, j + 1, w);
        double b = w.norm();
        dim = j + 1;

        if (j + 1 < m_max && b < 1e-12) {
            // Invariant subspace: continue from a fresh direction.
            for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.normal();
            orthogonalize(basis, j + 1, w);
            w.normalize();
            b = 0.0;
            basis.col(j + 1) = w;
        } else if (j + 1 < m_max) {
            basis.col(j + 1) = w / b;
        }
        beta.push_back(b);

        const bool last = (j + 1 == m_max);
        if (!last && (dim < 20 || dim % 10 != 0)) continue;

        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(dim, dim);
        for (Eigen::Index q = 0; q < dim; ++q) {
            t(q, q) = alpha[static_cast<std::size_t>(q)];
            if (q + 1 < dim) t(q, q + 1) = t(q + 1, q) = beta[static_cast<std::size_t>(q)];
        }
        tri.compute(t);
        const Eigen::VectorXd& theta = tri.eigenvalues();
        order.resize(static_cast<std::size_t>(dim));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
            if (std::abs(theta[x]) != std::abs(theta[y])) return std::abs(theta[x]) > std::abs(theta[y]);
            return theta[x] > theta[y];
        });

        std::vector<double> prefix;
        // With a full basis (dim == n) every Ritz pair is exact.
        const double residual_scale = (dim == n) ? 0.0 : b;
        for (Eigen::Index q : order) {
            const double residual = std::abs(residual_scale * tri.eigenvectors()(dim - 1, q));
            if (residual > tol) break;
            prefix.push_back(theta[q]);
        }
        decided = keep(prefix);
        if (!decided && dim == n) decided = prefix.size();
        if (decided || last) {
            LanczosResult result;
            result.min_ritz = theta.minCoeff();
            std::size_t count = decided ? *decided : prefix.size();
            result.converged = decided.has_value();
            count = std::min(count, prefix.size());
            if (count == 0) throw_numerical("Lanczos did not converge any eigenpair");
            result.values.resize(static_cast<Eigen::Index>(count));
            result.vectors.resize(n, static_cast<Eigen::Index>(count));
            for (std::size_t q = 0; q < count; ++q) {
                const Eigen::Index idx = order[q];
                result.values[static_cast<Eigen::Index>(q)] = theta[idx];
                result.vectors.col(static_cast<Eigen::Index>(q)) =
                    basis.leftCols(dim) * tri.eigenvectors().col(idx);
                result.vectors.col(static_cast<Eigen::Index>(q)).normalize();
            }
            return result;
        }
    }
    throw_numerical("Lanczos iteration ended without a result");
}

} // namespace dvis::detail
