#include "dvis/hsi.hpp"

#include "dvis/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dvis {

HsiCube::HsiCube(std::size_t rows, std::size_t cols, std::size_t bands)
    : HsiCube(rows, cols, bands, std::vector<double>(rows * cols * bands, 0.0)) {}

HsiCube::HsiCube(std::size_t rows, std::size_t cols, std::size_t bands, std::vector<double> data)
    : rows_(rows), cols_(cols), bands_(bands), data_(std::move(data)) {
    if (rows == 0 || cols == 0 || bands == 0) throw_validation("cube dimensions must be positive");
    if (data_.size() != rows * cols * bands) {
        throw_data("cube data length " + std::to_string(data_.size()) + " does not match " + std::to_string(rows) +
                   "x" + std::to_string(cols) + "x" + std::to_string(bands));
    }
}

void HsiCube::set_wavelengths_nm(std::vector<double> wl) {
    if (wl.size() != bands_) {
        throw_data("wavelength list has " + std::to_string(wl.size()) + " entries for " + std::to_string(bands_) +
                   " bands");
    }
    for (std::size_t i = 1; i < wl.size(); ++i) {
        if (!(wl[i] > wl[i - 1])) throw_data("wavelengths must be strictly increasing");
    }
    wavelengths_ = std::move(wl);
}

void HsiCube::check_finite() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            const std::size_t pixel = i / bands_;
            throw_data("non-finite reflectance at row " + std::to_string(pixel / cols_) + ", col " +
                       std::to_string(pixel % cols_) + ", band " + std::to_string(i % bands_));
        }
    }
}

PixelMask::PixelMask(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), keep_(rows * cols, value ? 1 : 0) {}

std::size_t PixelMask::count() const {
    return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), 1));
}

PixelSet make_pixel_set(RowMatrix spectra) {
    PixelSet set;
    const auto n = static_cast<std::size_t>(spectra.rows());
    set.spectra = std::move(spectra);
    set.origin.resize(n);
    for (std::size_t i = 0; i < n; ++i) set.origin[i] = {0, i};
    set.grid_rows = 1;
    set.grid_cols = n;
    return set;
}

PixelSet normalize_spectra(const PixelSet& pixels) {
    PixelSet out = pixels;
    for (Eigen::Index i = 0; i < out.spectra.rows(); ++i) {
        const double norm = out.spectra.row(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            const auto& o = pixels.origin[static_cast<std::size_t>(i)];
            throw_data("degenerate pixel (" + std::to_string(o.row) + ", " + std::to_string(o.col) +
                       ") has zero norm");
        }
        out.spectra.row(i) /= norm;
    }
    return out;
}

double keys_kernel(double x) {
    constexpr double a = -0.5;
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
    return 0.0;
}

namespace {

struct Taps {
    std::size_t index[4];
    double weight[4];
};

// Four source taps around one output coordinate, clamped to the grid.
std::vector<Taps> make_taps(std::size_t out_len, std::size_t in_len, std::size_t factor) {
    std::vector<Taps> taps(out_len);
    const auto last = static_cast<long>(in_len) - 1;
    for (std::size_t o = 0; o < out_len; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(factor) - 0.5;
        const double base = std::floor(src);
        const double frac = src - base;
        for (int k = 0; k < 4; ++k) {
            const long idx = static_cast<long>(base) - 1 + k;
            taps[o].index[k] = static_cast<std::size_t>(std::clamp(idx, 0L, last));
            taps[o].weight[k] = keys_kernel(frac - static_cast<double>(k - 1));
        }
    }
    return taps;
}

} // namespace

HsiCube bicubic_downsample(const HsiCube& cube, std::size_t factor) {
    if (factor == 0) throw_validation("downsample factor must be at least 1");
    if (factor == 1) return cube;
    if (cube.rows() < 4 || cube.cols() < 4) {
        throw_validation("cube of " + std::to_string(cube.rows()) + "x" + std::to_string(cube.cols()) +
                         " is too small for the 4x4 bicubic support");
    }

    const std::size_t out_rows = (cube.rows() + factor - 1) / factor;
    const std::size_t out_cols = (cube.cols() + factor - 1) / factor;
    const std::size_t bands = cube.bands();
    const auto row_taps = make_taps(out_rows, cube.rows(), factor);
    const auto col_taps = make_taps(out_cols, cube.cols(), factor);

    // Separable: columns first into an (rows x out_cols x bands) buffer, then rows.
    std::vector<double> tmp(cube.rows() * out_cols * bands, 0.0);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < static_cast<long>(cube.rows()); ++r) {
        for (std::size_t oc = 0; oc < out_cols; ++oc) {
            double* dst = &tmp[(static_cast<std::size_t>(r) * out_cols + oc) * bands];
            for (int k = 0; k < 4; ++k) {
                const double w = col_taps[oc].weight[k];
                const std::size_t c = col_taps[oc].index[k];
                for (std::size_t b = 0; b < bands; ++b) dst[b] += w * cube.at(static_cast<std::size_t>(r), c, b);
            }
        }
    }

    HsiCube out(out_rows, out_cols, bands);
#pragma omp parallel for schedule(static)
    for (long orow = 0; orow < static_cast<long>(out_rows); ++orow) {
        const Taps& rt = row_taps[static_cast<std::size_t>(orow)];
        for (std::size_t oc = 0; oc < out_cols; ++oc) {
            for (int k = 0; k < 4; ++k) {
                const double w = rt.weight[k];
                const double* src = &tmp[(rt.index[k] * out_cols + oc) * bands];
                for (std::size_t b = 0; b < bands; ++b) out.at(static_cast<std::size_t>(orow), oc, b) += w * src[b];
            }
        }
    }

    if (cube.wavelengths_nm()) out.set_wavelengths_nm(*cube.wavelengths_nm());
    if (cube.resolution_m) out.resolution_m = *cube.resolution_m * static_cast<double>(factor);
    return out;
}

PixelSet extract_pixels(const HsiCube& cube, const PixelMask& mask) {
    if (mask.rows() != cube.rows() || mask.cols() != cube.cols()) {
        throw_validation("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         " but cube is " + std::to_string(cube.rows()) + "x" + std::to_string(cube.cols()));
    }
    const std::size_t n = mask.count();
    if (n == 0) throw_data("mask keeps no pixels");

    PixelSet set;
    set.spectra.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cube.bands()));
    set.origin.reserve(n);
    set.grid_rows = cube.rows();
    set.grid_cols = cube.cols();
    Eigen::Index i = 0;
    for (std::size_t r = 0; r < cube.rows(); ++r) {
        for (std::size_t c = 0; c < cube.cols(); ++c) {
            if (!mask.kept(r, c)) continue;
            for (std::size_t b = 0; b < cube.bands(); ++b) set.spectra(i, static_cast<Eigen::Index>(b)) = cube.at(r, c, b);
            set.origin.push_back({r, c});
            ++i;
        }
    }
    return set;
}

} // namespace dvis
