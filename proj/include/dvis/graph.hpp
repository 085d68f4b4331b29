#pragma once

#include "dvis/hsi.hpp"
#include "dvis/knn.hpp"
#include "dvis/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dvis {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct GraphOptions {
    // When set, eigenpairs are truncated for this diffusion time: the kept set
    // is the smallest leading run such that the next |lambda|^t falls below
    // truncation_tol * |lambda_2|^t. When unset, every computed pair is kept.
    std::optional<unsigned> diffusion_time;
    double truncation_tol = 1e-8;
    // Upper bound on kept pairs whenever truncation is active or the sparse
    // solver runs.
    std::size_t max_eigenpairs = 100;
    // Node counts up to this use a dense symmetric eigensolver (full spectrum).
    std::size_t dense_limit = 500;
    // Ritz residual tolerance for the sparse solver.
    double lanczos_tol = 1e-10;
};

/// Right eigenvectors of P = D^-1 W, sorted by |lambda| descending.
/// Columns are orthonormal under the pi-weighted inner product; the first is
/// the constant vector with eigenvalue 1.
struct Spectrum {
    Vector eigenvalues;
    Eigen::MatrixXd eigenvectors;

    std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

struct Edge {
    Index a = 0;
    Index b = 0;
    double distance = 0.0;
};

/// Symmetric binary KNN graph with its Markov quantities. Built once, then
/// only read.
struct PixelGraph {
    SparseMatrix adjacency;
    Vector degrees;
    Vector stationary;
    Spectrum spectrum;
    std::vector<Edge> bridges;       // edges added to connect components
    std::vector<std::string> warnings;

    std::size_t size() const { return static_cast<std::size_t>(adjacency.rows()); }
    std::size_t edge_count() const { return static_cast<std::size_t>(adjacency.nonZeros()) / 2; }
};

/// Builds the N-nearest-neighbour graph of the pixels, symmetrised by
/// max(W, W^T) and bridged into one component when needed.
PixelGraph knn_graph(const PixelSet& pixels, std::size_t n_neighbors, const GraphOptions& options = {});

/// Same, from precomputed neighbours. `cached` skips the eigensolve when it
/// matches the graph size.
PixelGraph graph_from_neighbors(const RowMatrix& spectra, const Neighbors& neighbors,
                                const GraphOptions& options = {}, const Spectrum* cached = nullptr);

/// Graph from an explicit symmetric 0/1 adjacency; must be connected.
PixelGraph graph_from_adjacency(SparseMatrix adjacency, const GraphOptions& options = {});

/// Number of connected components and a component id per node.
std::vector<Index> connected_components(const SparseMatrix& adjacency, std::size_t& count);

/// pi_i = d_i / sum(d), checked against pi P = pi.
Vector stationary_distribution(const PixelGraph& graph);

/// Transition matrix P = D^-1 W.
SparseMatrix transition_matrix(const PixelGraph& graph);

Spectrum compute_spectrum(const SparseMatrix& adjacency, const Vector& degrees, const GraphOptions& options,
                          std::vector<std::string>& warnings);

/// Rows are diffusion coordinates lambda_k^t psi_k(i); Euclidean distance between
/// rows is the diffusion distance at time t.
RowMatrix diffusion_coordinates(const PixelGraph& graph, unsigned t);

/// Distance between two rows of a diffusion-coordinate matrix.
double embedded_distance(const RowMatrix& coords, Index i, Index j);

double diffusion_distance(const PixelGraph& graph, Index i, Index j, unsigned t);

/// Pairwise diffusion distances over `subset` (all nodes when empty). Refuses
/// outputs larger than max_nodes x max_nodes.
Eigen::MatrixXd diffusion_distance_matrix(const PixelGraph& graph, unsigned t, std::span<const Index> subset = {},
                                          std::size_t max_nodes = 8192);

std::string format_edge_list(const PixelGraph& graph);
SparseMatrix parse_edge_list(const std::string& csv, std::size_t n);

/// Versioned binary eigenpair cache. Load returns nullopt when the file is
/// missing, from another version, or keyed differently.
void save_spectrum(const std::filesystem::path& path, const Spectrum& spectrum, std::uint64_t key);
std::optional<Spectrum> load_spectrum(const std::filesystem::path& path, std::uint64_t key);

} // namespace dvis
