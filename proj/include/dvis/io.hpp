#pragma once

#include "dvis/hsi.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace dvis {

struct GridEntry {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;
};

/// Integer labels on a raster grid; 0 marks "no label".
struct LabelGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> label;

    LabelGrid() = default;
    LabelGrid(std::size_t r, std::size_t c) : rows(r), cols(c), label(r * c, 0) {}

    int& at(std::size_t r, std::size_t c) { return label[r * cols + c]; }
    int at(std::size_t r, std::size_t c) const { return label[r * cols + c]; }

    friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

/// Reads `row,col,value` lines. A non-numeric first line is taken as a header;
/// blank lines and lines starting with '#' are skipped.
std::vector<GridEntry> read_grid_csv(const std::filesystem::path& path);

/// Mask from a CSV: listed pixels with nonzero value are kept, everything else dropped.
PixelMask mask_from_entries(const std::vector<GridEntry>& entries, std::size_t rows, std::size_t cols);

/// Label grid from a CSV. When rows/cols are 0 they are inferred from the largest coordinate.
LabelGrid labels_from_entries(const std::vector<GridEntry>& entries, std::size_t rows = 0, std::size_t cols = 0);

/// `row,col,label` for every nonzero cell, row-major.
std::string format_label_csv(const LabelGrid& grid);

/// Binary PGM (P5) with maxval = max(1, max label); 0 renders unlabeled cells.
std::string format_label_pgm(const LabelGrid& grid);

/// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

} // namespace dvis
