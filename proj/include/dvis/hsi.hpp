#pragma once

#include "dvis/types.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace dvis {

/// Reflectance cube in (row, col, band) order, i.e. band-interleaved-by-pixel in memory.
class HsiCube {
public:
    HsiCube() = default;
    HsiCube(std::size_t rows, std::size_t cols, std::size_t bands);
    HsiCube(std::size_t rows, std::size_t cols, std::size_t bands, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t bands() const { return bands_; }
    std::size_t pixel_count() const { return rows_ * cols_; }

    double& at(std::size_t r, std::size_t c, std::size_t b) { return data_[(r * cols_ + c) * bands_ + b]; }
    double at(std::size_t r, std::size_t c, std::size_t b) const { return data_[(r * cols_ + c) * bands_ + b]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    // Strictly increasing when present.
    const std::optional<std::vector<double>>& wavelengths_nm() const { return wavelengths_; }
    void set_wavelengths_nm(std::vector<double> wl);

    std::optional<double> resolution_m;

    /// Throws a data error naming the first non-finite sample.
    void check_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t bands_ = 0;
    std::vector<double> data_;
    std::optional<std::vector<double>> wavelengths_;
};

class PixelMask {
public:
    PixelMask() = default;
    PixelMask(std::size_t rows, std::size_t cols, bool value = false);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    bool kept(std::size_t r, std::size_t c) const { return keep_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool value) { keep_[r * cols_ + c] = value ? 1 : 0; }

    std::size_t count() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<unsigned char> keep_;
};

struct PixelOrigin {
    std::size_t row = 0;
    std::size_t col = 0;

    friend bool operator==(const PixelOrigin&, const PixelOrigin&) = default;
};

/// Pixels pulled out of a cube: one spectrum per row plus where it came from.
struct PixelSet {
    RowMatrix spectra;
    std::vector<PixelOrigin> origin;
    // Source grid, used to reassemble label rasters.
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;

    std::size_t size() const { return static_cast<std::size_t>(spectra.rows()); }
    std::size_t bands() const { return static_cast<std::size_t>(spectra.cols()); }
};

/// Wraps a bare matrix as a PixelSet laid out on a 1 x n grid.
PixelSet make_pixel_set(RowMatrix spectra);

/// Scales every pixel to unit Euclidean norm. A zero row is a data error naming its origin.
PixelSet normalize_spectra(const PixelSet& pixels);

/// Keys cubic convolution kernel, a = -0.5.
double keys_kernel(double x);

/// Resamples every band onto a grid `factor` times coarser using the Keys kernel
/// with edge replication. Output pixel (R, C) samples source coordinate
/// ((R + 0.5) * factor - 0.5, (C + 0.5) * factor - 0.5).
HsiCube bicubic_downsample(const HsiCube& cube, std::size_t factor);

/// Kept pixels in row-major order.
PixelSet extract_pixels(const HsiCube& cube, const PixelMask& mask);

} // namespace dvis
