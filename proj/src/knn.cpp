#include "dvis/knn.hpp"

#include "dvis/error.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <utility>

namespace dvis {

double squared_distance(const RowMatrix& x, Index i, Index j) {
    const double* a = x.row(i).data();
    const double* b = x.row(j).data();
    double s = 0.0;
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

Neighbors knn_search(const RowMatrix& x, std::size_t k) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (k == 0) throw_validation("neighbour count must be positive");
    if (k >= n) {
        throw_validation("neighbour count " + std::to_string(k) + " must be below the pixel count " + std::to_string(n));
    }

    Neighbors out;
    out.k = k;
    out.index.resize(n * k);
    out.sq_distance.resize(n * k);

    const Vector norms = x.rowwise().squaredNorm();
    const double max_norm = norms.maxCoeff();
    const double eps = std::numeric_limits<double>::epsilon();
    const double slack_scale = 16.0 * static_cast<double>(x.cols() + 4) * eps;

    // ~32 MB of Gram entries per block.
    const std::size_t block = std::max<std::size_t>(1, std::min<std::size_t>(n, (std::size_t{1} << 22) / n));
    const Eigen::MatrixXd xt = x.transpose();

    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t rows = std::min(block, n - start);
        const Eigen::MatrixXd gram = x.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(rows)) * xt;

#pragma omp parallel
        {
            std::vector<double> approx(n);
            std::vector<double> sorted(n);
            std::vector<std::pair<double, Index>> cand;
#pragma omp for schedule(static)
            for (long r = 0; r < static_cast<long>(rows); ++r) {
                const std::size_t i = start + static_cast<std::size_t>(r);
                for (std::size_t j = 0; j < n; ++j) {
                    approx[j] = norms[static_cast<Eigen::Index>(i)] + norms[static_cast<Eigen::Index>(j)] -
                                2.0 * gram(r, static_cast<Eigen::Index>(j));
                }
                approx[i] = std::numeric_limits<double>::infinity();

                std::copy(approx.begin(), approx.end(), sorted.begin());
                std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k - 1), sorted.end());
                const double slack = slack_scale * (norms[static_cast<Eigen::Index>(i)] + max_norm);
                const double threshold = sorted[k - 1] + 2.0 * slack;

                cand.clear();
                for (std::size_t j = 0; j < n; ++j) {
                    if (j != i && approx[j] <= threshold) {
                        cand.emplace_back(squared_distance(x, static_cast<Index>(i), static_cast<Index>(j)),
                                          static_cast<Index>(j));
                    }
                }
                std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k), cand.end());
                for (std::size_t q = 0; q < k; ++q) {
                    out.index[i * k + q] = cand[q].second;
                    out.sq_distance[i * k + q] = cand[q].first;
                }
            }
        }
    }
    return out;
}

} // namespace dvis
