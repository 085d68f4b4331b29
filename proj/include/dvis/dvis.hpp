#pragma once

#include "dvis/graph.hpp"
#include "dvis/hsi.hpp"
#include "dvis/knn.hpp"
#include "dvis/unmixing.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dvis {

/// Defaults are the Madingley ash-dieback settings (N = 150, sigma0 = 3.89e-4, t = 2^5, K = 2).
struct ClusterParams {
    std::size_t clusters = 2;
    std::size_t neighbors = 150;
    double sigma0 = 3.89e-4;
    unsigned time = 32;
    std::uint64_t seed = 0;
};

/// Throws a validation error naming the first out-of-range field.
void validate(const ClusterParams& params, std::size_t pixel_count);

struct ClusterOptions {
    SnrSource snr_source = SnrSource::Hysime;
    std::optional<std::size_t> fixed_m;
    // Pixels handed to unmixing (same rows, e.g. un-normalised); the clustering pixels when null.
    const RowMatrix* unmixing_input = nullptr;
    // Neighbour count for the density sum; the graph's N when unset.
    std::optional<std::size_t> density_neighbors;
    // diffusion_time defaults to params.time when left unset.
    GraphOptions graph;
};

/// Optional persistence for the two expensive stages, keyed by content hash.
class StageCache {
public:
    virtual ~StageCache() = default;
    virtual std::optional<UnmixingModel> load_unmixing(std::uint64_t key, const RowMatrix& pixels) = 0;
    virtual void store_unmixing(std::uint64_t key, const UnmixingModel& model) = 0;
    virtual std::optional<Spectrum> load_spectrum(std::uint64_t key) = 0;
    virtual void store_spectrum(std::uint64_t key, const Spectrum& spectrum) = 0;
};

struct ClusterState {
    Vector density;
    Vector purity;
    Vector zeta;
    Vector dt;
    std::vector<Index> dt_parent;   // -1 for the global zeta maximiser
    std::vector<Index> order;       // non-increasing zeta, ties by ascending index
    std::vector<Index> modes;       // modes[k] carries label k + 1
    std::vector<int> labels;        // 1..K
    UnmixingModel unmixing;
    std::shared_ptr<const PixelGraph> graph;
    std::vector<std::string> warnings;
    // Wall-clock seconds per stage, in execution order.
    std::vector<std::pair<std::string, double>> timings;
};

/// p(x) = sum over the N nearest neighbours of exp(-|x - y|^2 / sigma0^2).
Vector density(const Neighbors& neighbors, double sigma0);
/// Uses only the first `count` neighbours of each row (count <= neighbors.k).
Vector density(const Neighbors& neighbors, std::size_t count, double sigma0);
Vector density(const PixelSet& pixels, std::size_t n_neighbors, double sigma0);

/// Harmonic mean of max-normalised density and purity.
Vector zeta(const Vector& density, const Vector& purity);

/// Visit order: non-increasing zeta, ties by ascending index. "Higher zeta"
/// everywhere means earlier in this order.
std::vector<Index> zeta_order(const Vector& zeta);

/// Diffusion distances within this relative gap count as equal, so that exact
/// ties between structurally twin nodes go to the lowest index despite rounding.
inline constexpr double distance_tie_tolerance = 1e-10;

struct DtResult {
    Vector dt;
    std::vector<Index> parent;
};

/// Diffusion distance to the nearest point of higher zeta (the maximum
/// distance for the global maximiser).
DtResult dt_values(const PixelGraph& graph, const Vector& zeta, unsigned t);

/// Same, on precomputed diffusion coordinates and visit order.
DtResult dt_values(const RowMatrix& coords, std::span<const Index> order);

/// The K largest zeta * d_t, ties by lowest index, in descending score order.
std::vector<Index> select_modes(const Vector& zeta, const Vector& dt, std::size_t k);

struct Propagation {
    std::vector<int> labels;
    std::vector<std::string> warnings;
};

/// Labels modes 1..K and assigns every other point, in visit order, the label
/// of its diffusion-nearest already-labelled point of higher zeta.
Propagation propagate_labels(const PixelGraph& graph, const Vector& zeta, std::span<const Index> modes, unsigned t);

/// Same with the higher-zeta nearest neighbours already known (from dt_values).
Propagation propagate_labels(const RowMatrix& coords, std::span<const Index> order, std::span<const Index> parent,
                             std::span<const Index> modes);

/// Full pipeline on (already normalised) pixels.
ClusterState cluster(const PixelSet& pixels, const ClusterParams& params, const ClusterOptions& options = {},
                     StageCache* cache = nullptr);

} // namespace dvis
