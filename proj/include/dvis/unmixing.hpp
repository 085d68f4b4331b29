#pragma once

#include "dvis/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace dvis {

struct HysimeResult {
    std::size_t m = 0;
    // Per-pixel noise estimate from per-band multiple regression, n x D.
    RowMatrix noise;
    // Mean-squared-error objective for subspace dimension k = 1..D at index k - 1.
    Vector cost;
    // Bands with zero sample variance; their presence triggers the ridge.
    std::vector<std::size_t> flagged_bands;
    bool ridge_applied = false;
};

/// Signal-subspace identification by minimum error. Requires more pixels than bands.
HysimeResult hysime(const RowMatrix& pixels);

enum class SnrSource { Builtin, Hysime };

struct VcaResult {
    RowMatrix endmembers;          // m x D, exact copies of pixel rows
    std::vector<Index> indices;    // pixel index of each endmember
    double snr_db = 0.0;
    bool projective = true;        // false when the low-SNR PCA projection was used
};

/// Vertex component analysis. When `noise` (a HySime noise estimate, n x D) is
/// given, the SNR that selects the projection comes from it; otherwise from
/// the built-in estimator.
VcaResult vca(const RowMatrix& pixels, std::size_t m, std::uint64_t seed, const RowMatrix* noise = nullptr);

/// Nonnegative abundances, one row per pixel, one column per endmember.
RowMatrix abundances(const RowMatrix& pixels, const RowMatrix& endmembers, double kkt_tol = 1e-10);

struct PurityResult {
    Vector eta;
    // Rows whose abundance sum is below 1e-12; their purity is 0.
    std::vector<Index> zero_rows;
};

/// eta_i = max_j A_ij / sum_j A_ij.
PurityResult purity(const RowMatrix& abundances);

struct UnmixingModel {
    std::size_t m = 0;
    RowMatrix endmembers;
    RowMatrix abundances;
    Vector purity;
    std::vector<Index> endmember_indices;
    std::vector<Index> zero_abundance_rows;
    double snr_db = 0.0;
};

struct UnmixOptions {
    std::uint64_t seed = 0;
    SnrSource snr_source = SnrSource::Hysime;
    // Skips HySime when set.
    std::optional<std::size_t> fixed_m;
};

/// HySime, then VCA, then NNLS abundances and purity.
UnmixingModel unmix(const RowMatrix& pixels, const UnmixOptions& options);

} // namespace dvis
