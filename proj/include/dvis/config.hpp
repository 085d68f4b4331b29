#pragma once

#include "dvis/dvis.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dvis {

enum class NormalizeStage { AfterMask, BeforeDownsample };

/// Everything a pipeline run needs. Parsed from a key=value file; command-line
/// flags are applied afterwards with the same keys and win.
struct PipelineConfig {
    std::filesystem::path cube;        // ENVI header
    std::filesystem::path mask;        // CSV on the downsampled grid; optional
    std::filesystem::path crowns;      // crown ids, downsampled grid; optional
    std::filesystem::path reference;   // reference labels, downsampled grid; optional
    std::filesystem::path predicted;   // eval only
    std::string reference_merge;       // e.g. "1:1,2:2,3:2"; empty = as is
    std::filesystem::path out = "dvis_out";

    ClusterParams params;
    std::optional<std::size_t> density_neighbors;
    std::size_t factor = 4;
    double eigen_tol = 1e-8;
    std::size_t max_eigenpairs = 100;
    std::size_t dense_limit = 500;
    bool normalize = true;
    NormalizeStage normalize_stage = NormalizeStage::AfterMask;
    bool unmix_raw = false;            // HySime/VCA on un-normalised spectra
    SnrSource snr_source = SnrSource::Hysime;
    std::optional<std::size_t> fixed_m;

    std::size_t threads = 0;           // 0 = library default
    bool use_cache = true;
    std::filesystem::path cache_dir;   // empty: $DVIS_CACHE_DIR, else <out>/cache
};

/// Applies one setting. Unknown keys and unparsable values are validation
/// errors naming the key. Relative paths are resolved against `base`.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value,
                      const std::filesystem::path& base = {});

/// Applies every `key = value` line; '#' starts a comment.
void apply_config_text(PipelineConfig& config, const std::string& text, const std::filesystem::path& base = {});

PipelineConfig load_config(const std::filesystem::path& path);

/// Bounds checks; the message names the field.
void validate(const PipelineConfig& config);

/// Every setting as `key = value` lines, parseable by apply_config_text.
std::string format_config(const PipelineConfig& config);

/// Ordered (key, value) pairs behind format_config.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& config);

std::filesystem::path resolve_cache_dir(const PipelineConfig& config);

} // namespace dvis
