#pragma once

#include "dvis/hsi.hpp"
#include "dvis/io.hpp"
#include "dvis/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace dvis {

/// Mixed-pixel scene with known materials and cluster membership.
///
/// Cluster c draws abundances from a Dirichlet whose total concentration is
/// `concentration`, with the share `dominance` placed on material c mod m and
/// the rest spread evenly over the others.
struct SyntheticSceneSpec {
    std::size_t n = 1000;
    std::size_t bands = 50;
    std::size_t materials = 2;
    // Empty means `materials` clusters of near-equal size.
    std::vector<std::size_t> cluster_sizes;
    double concentration = 20.0;
    double dominance = 0.85;
    double snr_db = 30.0;
    bool noiseless = false;
    // Plant one pure pixel per material at a random position.
    bool plant_pure = true;
    // Grid width; 0 picks the largest divisor of n not above sqrt(n).
    std::size_t cols = 0;
    std::uint64_t seed = 0;
};

/// Throws a validation error naming the offending field.
void validate(const SyntheticSceneSpec& spec);

struct SyntheticScene {
    HsiCube cube;
    LabelGrid truth;                 // cluster id 1..C per pixel
    RowMatrix endmembers;            // materials x bands, unit norm, nonnegative
    RowMatrix abundances;            // n x materials, rows sum to 1
    std::vector<Index> planted;      // pixel index of the pure pixel of each material, or -1
    double empirical_snr_db = 0.0;   // +inf when noiseless

    RowMatrix clean;                 // noise-free pixels, n x bands
};

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec);

} // namespace dvis
