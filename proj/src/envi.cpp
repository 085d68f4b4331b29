#include "dvis/envi.hpp"

#include "dvis/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dvis {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

// key = value pairs; values in braces may span lines.
std::map<std::string, std::string> parse_header(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open ENVI header " + path.string());
    std::string first;
    std::getline(in, first);
    if (trim(first) != "ENVI") throw_data(path.string() + " is not an ENVI header (missing 'ENVI' magic)");

    std::map<std::string, std::string> fields;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos) {
                std::string more;
                if (!std::getline(in, more)) throw_data("unterminated brace value for '" + key + "' in " + path.string());
                value += " " + trim(more);
            }
            value = trim(value.substr(1, value.find('}') - 1));
        }
        fields[key] = value;
    }
    return fields;
}

std::size_t require_size(const std::map<std::string, std::string>& fields, const std::string& key,
                         const fs::path& path) {
    auto it = fields.find(key);
    if (it == fields.end()) throw_data("ENVI header " + path.string() + " is missing '" + key + "'");
    try {
        std::size_t used = 0;
        const long long v = std::stoll(it->second, &used);
        if (used != it->second.size() || v < 0) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw_data("ENVI header field '" + key + "' is not a nonnegative integer: '" + it->second + "'");
    }
}

fs::path find_binary(const fs::path& header) {
    std::vector<fs::path> candidates;
    if (header.extension() == ".hdr" || header.extension() == ".HDR") {
        fs::path stem = header;
        stem.replace_extension();
        candidates.push_back(stem);
        for (const char* ext : {".img", ".dat", ".bin", ".raw"}) {
            fs::path p = stem;
            p += ext;
            candidates.push_back(p);
        }
    } else {
        fs::path p = header;
        p += ".img";
        candidates.push_back(p);
    }
    for (const auto& c : candidates) {
        if (fs::is_regular_file(c)) return c;
    }
    throw_data("no binary file found next to ENVI header " + header.string());
}

template <typename T>
T read_sample(const unsigned char* p, bool swap) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, p, sizeof(T));
    if (swap) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

template <typename T>
void write_sample(unsigned char* p, T v, bool swap) {
    std::memcpy(p, &v, sizeof(T));
    if (swap) std::reverse(p, p + sizeof(T));
}

std::size_t sample_size(EnviDataType t) {
    switch (t) {
    case EnviDataType::UInt16:
        return 2;
    case EnviDataType::Float32:
        return 4;
    case EnviDataType::Float64:
        return 8;
    }
    return 0;
}

// Offset in samples of (row, col, band) for a given interleave.
std::size_t file_offset(Interleave il, std::size_t r, std::size_t c, std::size_t b, std::size_t rows,
                        std::size_t cols, std::size_t bands) {
    switch (il) {
    case Interleave::BSQ:
        return (b * rows + r) * cols + c;
    case Interleave::BIL:
        return (r * bands + b) * cols + c;
    case Interleave::BIP:
        return (r * cols + c) * bands + b;
    }
    return 0;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw_data("ENVI header field '" + key + "' has a non-numeric entry '" + item + "'");
        }
    }
    return out;
}

} // namespace

HsiCube load_envi(const fs::path& header_path) {
    const auto fields = parse_header(header_path);
    const std::size_t cols = require_size(fields, "samples", header_path);
    const std::size_t rows = require_size(fields, "lines", header_path);
    const std::size_t bands = require_size(fields, "bands", header_path);
    if (rows == 0 || cols == 0 || bands == 0) throw_data("ENVI header declares an empty cube");

    const int type_code = static_cast<int>(require_size(fields, "data type", header_path));
    EnviDataType type;
    switch (type_code) {
    case 4:
        type = EnviDataType::Float32;
        break;
    case 5:
        type = EnviDataType::Float64;
        break;
    case 12:
        type = EnviDataType::UInt16;
        break;
    default:
        throw_data("unsupported ENVI data type " + std::to_string(type_code) + " (supported: 4, 5, 12)");
    }

    Interleave il;
    {
        auto it = fields.find("interleave");
        if (it == fields.end()) throw_data("ENVI header is missing 'interleave'");
        const std::string v = lower(it->second);
        if (v == "bsq") il = Interleave::BSQ;
        else if (v == "bil") il = Interleave::BIL;
        else if (v == "bip") il = Interleave::BIP;
        else throw_data("unknown interleave '" + it->second + "'");
    }

    const std::size_t byte_order = require_size(fields, "byte order", header_path);
    if (byte_order > 1) throw_data("byte order must be 0 or 1");
    const bool file_big = byte_order == 1;
    const bool swap = file_big != (std::endian::native == std::endian::big);

    std::size_t header_offset = 0;
    if (fields.count("header offset")) header_offset = require_size(fields, "header offset", header_path);

    const fs::path bin = find_binary(header_path);
    const std::size_t ss = sample_size(type);
    const std::size_t expected = header_offset + rows * cols * bands * ss;
    const auto actual = static_cast<std::size_t>(fs::file_size(bin));
    if (actual != expected) {
        throw_data("binary " + bin.string() + " has " + std::to_string(actual) + " bytes, header implies " +
                   std::to_string(expected));
    }

    std::vector<unsigned char> raw(actual);
    {
        std::ifstream in(bin, std::ios::binary);
        if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(actual))) {
            throw_data("failed reading " + bin.string());
        }
    }

    HsiCube cube(rows, cols, bands);
    const unsigned char* base = raw.data() + header_offset;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            for (std::size_t b = 0; b < bands; ++b) {
                const unsigned char* p = base + file_offset(il, r, c, b, rows, cols, bands) * ss;
                double v = 0.0;
                switch (type) {
                case EnviDataType::UInt16:
                    v = read_sample<std::uint16_t>(p, swap);
                    break;
                case EnviDataType::Float32:
                    v = read_sample<float>(p, swap);
                    break;
                case EnviDataType::Float64:
                    v = read_sample<double>(p, swap);
                    break;
                }
                cube.at(r, c, b) = v;
            }
        }
    }
    cube.check_finite();

    if (auto it = fields.find("wavelength"); it != fields.end()) {
        cube.set_wavelengths_nm(parse_number_list(it->second, "wavelength"));
    }
    if (auto it = fields.find("map info"); it != fields.end()) {
        // map info = {proj, refx, refy, easting, northing, xsize, ysize, ...}
        std::vector<std::string> parts;
        std::stringstream ss2(it->second);
        std::string item;
        while (std::getline(ss2, item, ',')) parts.push_back(trim(item));
        if (parts.size() >= 6) {
            try {
                cube.resolution_m = std::stod(parts[5]);
            } catch (const std::exception&) {
            }
        }
    }
    return cube;
}

fs::path save_envi(const HsiCube& cube, const fs::path& stem, const EnviWriteOptions& options) {
    fs::path header = stem;
    header += ".hdr";
    fs::path bin = stem;
    bin += ".img";

    const std::size_t ss = sample_size(options.data_type);
    const std::size_t rows = cube.rows(), cols = cube.cols(), bands = cube.bands();
    std::vector<unsigned char> raw(rows * cols * bands * ss);
    const bool swap = options.big_endian != (std::endian::native == std::endian::big);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            for (std::size_t b = 0; b < bands; ++b) {
                unsigned char* p = raw.data() + file_offset(options.interleave, r, c, b, rows, cols, bands) * ss;
                const double v = cube.at(r, c, b);
                switch (options.data_type) {
                case EnviDataType::UInt16:
                    if (v < 0.0 || v > 65535.0 || v != std::floor(v)) {
                        throw_validation("value " + std::to_string(v) + " is not representable as uint16");
                    }
                    write_sample<std::uint16_t>(p, static_cast<std::uint16_t>(v), swap);
                    break;
                case EnviDataType::Float32:
                    write_sample<float>(p, static_cast<float>(v), swap);
                    break;
                case EnviDataType::Float64:
                    write_sample<double>(p, v, swap);
                    break;
                }
            }
        }
    }

    {
        std::ofstream out(bin, std::ios::binary | std::ios::trunc);
        if (!out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
            throw_data("failed writing " + bin.string());
        }
    }

    std::ofstream hdr(header, std::ios::trunc);
    if (!hdr) throw_data("failed writing " + header.string());
    const char* il = options.interleave == Interleave::BSQ ? "bsq" : options.interleave == Interleave::BIL ? "bil" : "bip";
    hdr << "ENVI\n"
        << "description = {dvis cube}\n"
        << "samples = " << cols << "\n"
        << "lines = " << rows << "\n"
        << "bands = " << bands << "\n"
        << "header offset = 0\n"
        << "file type = ENVI Standard\n"
        << "data type = " << static_cast<int>(options.data_type) << "\n"
        << "interleave = " << il << "\n"
        << "byte order = " << (options.big_endian ? 1 : 0) << "\n";
    if (cube.wavelengths_nm()) {
        hdr << "wavelength units = Nanometers\n";
        hdr << "wavelength = {";
        hdr.precision(17);
        const auto& wl = *cube.wavelengths_nm();
        for (std::size_t i = 0; i < wl.size(); ++i) hdr << (i ? ", " : "") << wl[i];
        hdr << "}\n";
    }
    if (!hdr) throw_data("failed writing " + header.string());
    return header;
}

} // namespace dvis
