#pragma once

#include "dvis/hsi.hpp"

#include <filesystem>

namespace dvis {

enum class Interleave { BSQ, BIL, BIP };

// ENVI "data type" codes that are supported.
enum class EnviDataType : int { UInt16 = 12, Float32 = 4, Float64 = 5 };

struct EnviWriteOptions {
    Interleave interleave = Interleave::BSQ;
    EnviDataType data_type = EnviDataType::Float64;
    bool big_endian = false;
};

/// Reads an ENVI header and its companion binary. The binary is looked up by
/// stripping ".hdr", then by swapping it for .img, .dat, .bin or .raw.
HsiCube load_envi(const std::filesystem::path& header_path);

/// Writes `<stem>.hdr` and `<stem>.img`; returns the header path.
std::filesystem::path save_envi(const HsiCube& cube, const std::filesystem::path& stem,
                                const EnviWriteOptions& options = {});

} // namespace dvis
