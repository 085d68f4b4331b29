#pragma once

#include "dvis/types.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dvis {

/// Exact k nearest neighbours of every row, self excluded.
/// Row i lists neighbours by ascending (squared distance, index).
struct Neighbors {
    std::size_t k = 0;
    std::vector<Index> index;          // n * k
    std::vector<double> sq_distance;   // n * k

    std::size_t size() const { return k == 0 ? 0 : index.size() / k; }
    std::span<const Index> indices_of(std::size_t i) const { return {index.data() + i * k, k}; }
    std::span<const double> sq_distances_of(std::size_t i) const { return {sq_distance.data() + i * k, k}; }
};

/// Squared Euclidean distance summed band by band in index order. Every
/// distance used for neighbour ranking goes through this function.
double squared_distance(const RowMatrix& x, Index i, Index j);

/// Candidates are screened with a blocked Gram product, then re-ranked with
/// squared_distance; the screening slack covers the Gram rounding error, so the
/// result equals an exhaustive sort with ties broken by ascending index.
Neighbors knn_search(const RowMatrix& x, std::size_t k);

} // namespace dvis
