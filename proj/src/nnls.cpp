#include "dvis/nnls.hpp"

#include "dvis/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dvis {

NnlsSolver::NnlsSolver(const Eigen::MatrixXd& design, double kkt_tol) : kkt_tol_(kkt_tol) {
    const Eigen::Index m = design.cols();
    if (m == 0) throw_validation("NNLS design has no columns");
    if (design.rows() < m) throw_numerical("NNLS design has more unknowns than equations");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
    q_ = qr.householderQ() * Eigen::MatrixXd::Identity(design.rows(), m);
    r_ = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();

    const double scale = r_.diagonal().cwiseAbs().maxCoeff();
    const double floor = scale * static_cast<double>(design.rows()) * std::numeric_limits<double>::epsilon();
    for (Eigen::Index k = 0; k < m; ++k) {
        if (!(std::abs(r_(k, k)) > floor)) throw_numerical("endmember matrix is rank-deficient");
    }
}

Eigen::VectorXd NnlsSolver::solve(const Eigen::VectorXd& target) const {
    const Eigen::Index m = r_.cols();
    const Eigen::VectorXd b = q_.transpose() * target;
    const double tol = kkt_tol_ * std::max(1.0, r_.norm() * b.norm());

    Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
    std::vector<char> passive(static_cast<std::size_t>(m), 0);

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index k = 0; k < m; ++k) {
            if (passive[static_cast<std::size_t>(k)]) cols.push_back(k);
        }
        Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = r_.col(cols[c]);
        const Eigen::VectorXd sol = sub.householderQr().solve(b);
        z.setZero(m);
        for (std::size_t c = 0; c < cols.size(); ++c) z[cols[c]] = sol[static_cast<Eigen::Index>(c)];
    };

    const int max_iter = 30 * static_cast<int>(m) + 30;
    int iter = 0;
    std::vector<char> blocked(static_cast<std::size_t>(m), 0);
    Eigen::VectorXd z(m);
    for (;;) {
        const Eigen::VectorXd w = r_.transpose() * (b - r_ * x);
        Eigen::Index pick = -1;
        for (Eigen::Index k = 0; k < m; ++k) {
            if (passive[static_cast<std::size_t>(k)] || blocked[static_cast<std::size_t>(k)]) continue;
            if (w[k] > tol && (pick < 0 || w[k] > w[pick])) pick = k;
        }
        if (pick < 0) break;
        passive[static_cast<std::size_t>(pick)] = 1;

        bool entering = true;
        for (;;) {
            if (++iter > max_iter) throw_numerical("NNLS did not converge");
            solve_passive(z);
            if (entering && z[pick] <= 0.0) {
                // Rounding made the entering variable infeasible; try the next candidate.
                passive[static_cast<std::size_t>(pick)] = 0;
                blocked[static_cast<std::size_t>(pick)] = 1;
                break;
            }
            entering = false;
            bool feasible = true;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (passive[static_cast<std::size_t>(k)] && z[k] <= 0.0) feasible = false;
            }
            if (feasible) {
                x = z;
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            Eigen::Index leaving = -1;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (!passive[static_cast<std::size_t>(k)] || z[k] > 0.0) continue;
                const double a = x[k] / (x[k] - z[k]);
                if (a < alpha) {
                    alpha = a;
                    leaving = k;
                }
            }
            x += alpha * (z - x);
            x[leaving] = 0.0;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (passive[static_cast<std::size_t>(k)] && x[k] <= 0.0) {
                    passive[static_cast<std::size_t>(k)] = 0;
                    x[k] = 0.0;
                }
            }
        }
        if (passive[static_cast<std::size_t>(pick)]) std::fill(blocked.begin(), blocked.end(), 0);
    }
    return x;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& design, const Eigen::VectorXd& target, double kkt_tol) {
    return NnlsSolver(design, kkt_tol).solve(target);
}

} // namespace dvis
