#include "dvis/io.hpp"

#include "dvis/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dvis {

namespace fs = std::filesystem;

namespace {

bool parse_line(const std::string& line, GridEntry& entry) {
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',')) return false;
    try {
        std::size_t used = 0;
        const long long r = std::stoll(a, &used);
        const long long col = std::stoll(b);
        const double v = std::stod(c);
        if (r < 0 || col < 0) return false;
        entry = {static_cast<std::size_t>(r), static_cast<std::size_t>(col), v};
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace

std::vector<GridEntry> read_grid_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open " + path.string());
    std::vector<GridEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        GridEntry e;
        if (!parse_line(line, e)) {
            if (entries.empty() && line_no == 1) continue;
            throw_data(path.string() + ":" + std::to_string(line_no) + ": expected 'row,col,value', got '" + line + "'");
        }
        entries.push_back(e);
    }
    return entries;
}

PixelMask mask_from_entries(const std::vector<GridEntry>& entries, std::size_t rows, std::size_t cols) {
    PixelMask mask(rows, cols, false);
    for (const auto& e : entries) {
        if (e.row >= rows || e.col >= cols) {
            throw_data("mask entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) + ") outside " +
                       std::to_string(rows) + "x" + std::to_string(cols) + " grid");
        }
        mask.set(e.row, e.col, e.value != 0.0);
    }
    return mask;
}

LabelGrid labels_from_entries(const std::vector<GridEntry>& entries, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        for (const auto& e : entries) {
            rows = std::max(rows, e.row + 1);
            cols = std::max(cols, e.col + 1);
        }
    }
    LabelGrid grid(rows, cols);
    for (const auto& e : entries) {
        if (e.row >= rows || e.col >= cols) {
            throw_data("label entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) + ") outside " +
                       std::to_string(rows) + "x" + std::to_string(cols) + " grid");
        }
        if (e.value < 0.0 || e.value != std::floor(e.value)) {
            throw_data("label at (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                       ") is not a nonnegative integer");
        }
        grid.at(e.row, e.col) = static_cast<int>(e.value);
    }
    return grid;
}

std::string format_label_csv(const LabelGrid& grid) {
    std::ostringstream out;
    out << "row,col,label\n";
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            if (const int v = grid.at(r, c); v != 0) out << r << ',' << c << ',' << v << '\n';
        }
    }
    return out.str();
}

std::string format_label_pgm(const LabelGrid& grid) {
    int maxval = 1;
    for (int v : grid.label) maxval = std::max(maxval, v);
    if (maxval > 255) throw_validation("label " + std::to_string(maxval) + " does not fit an 8-bit raster");
    std::ostringstream out;
    out << "P5\n" << grid.cols << ' ' << grid.rows << '\n' << maxval << '\n';
    for (int v : grid.label) out.put(static_cast<char>(static_cast<unsigned char>(std::max(v, 0))));
    return out.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_data("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw_data("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw_data("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace dvis
