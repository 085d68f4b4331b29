#pragma once

#include "dvis/graph.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

namespace dvis::detail {

struct LanczosResult {
    Vector values;             // sorted by |value| descending
    Eigen::MatrixXd vectors;   // unit Euclidean norm columns
    double min_ritz = 0.0;     // most negative Ritz value seen at exit
    bool converged = true;
};

/// Decides, from the leading run of converged Ritz values (sorted by magnitude),
/// how many eigenpairs to keep; nullopt asks for more iterations.
using KeepRule = std::function<std::optional<std::size_t>(std::span<const double>)>;

/// Lanczos with full reorthogonalisation on a symmetric sparse matrix,
/// extending the Krylov space until `keep` is satisfied or `max_dim` is hit.
LanczosResult lanczos_largest_magnitude(const SparseMatrix& s, const KeepRule& keep, std::size_t max_dim,
                                        double tol, std::uint64_t seed);

} // namespace dvis::detail
