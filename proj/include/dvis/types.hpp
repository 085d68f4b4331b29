#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>

namespace dvis {

// Pixel spectra are stored one per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Index = std::int64_t;

} // namespace dvis
