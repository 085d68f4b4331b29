#pragma once

#include <Eigen/Dense>

namespace dvis {

/// Lawson-Hanson active-set solver for min ||E a - x|| subject to a >= 0,
/// with the design E factored once and reused across right-hand sides.
///
/// The problem is reduced through a thin QR factorisation E = QR to the
/// m x m system ||R a - Q^T x||, which has the same gradient as the original
/// and keeps the conditioning of E rather than of E^T E.
class NnlsSolver {
public:
    // Throws a numerical error when E has dependent columns.
    explicit NnlsSolver(const Eigen::MatrixXd& design, double kkt_tol = 1e-10);

    Eigen::VectorXd solve(const Eigen::VectorXd& target) const;

    Eigen::Index unknowns() const { return r_.cols(); }

private:
    Eigen::MatrixXd q_;
    Eigen::MatrixXd r_;
    double kkt_tol_;
};

/// One-shot convenience wrapper.
Eigen::VectorXd nnls(const Eigen::MatrixXd& design, const Eigen::VectorXd& target, double kkt_tol = 1e-10);

} // namespace dvis
