#include "dvis/config.hpp"

#include "dvis/error.hpp"
#include "dvis/eval.hpp"
#include "dvis/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace dvis {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end) throw_validation(key + ": expected a nonnegative integer, got '" + value + "'");
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw_validation(key + ": expected a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    std::string v = value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw_validation(key + ": expected true or false, got '" + value + "'");
}

std::filesystem::path parse_path(const std::string& value, const std::filesystem::path& base) {
    std::filesystem::path p(value);
    if (value.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

std::string format_real(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

} // namespace

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& raw,
                      const std::filesystem::path& base) {
    const std::string value = trim(raw);
    if (key == "cube") c.cube = parse_path(value, base);
    else if (key == "mask") c.mask = parse_path(value, base);
    else if (key == "crowns") c.crowns = parse_path(value, base);
    else if (key == "reference") c.reference = parse_path(value, base);
    else if (key == "predicted") c.predicted = parse_path(value, base);
    else if (key == "reference_merge") c.reference_merge = value;
    else if (key == "out") c.out = parse_path(value, base);
    else if (key == "k") c.params.clusters = parse_unsigned(key, value);
    else if (key == "n_neighbors") c.params.neighbors = parse_unsigned(key, value);
    else if (key == "density_neighbors") {
        const auto v = parse_unsigned(key, value);
        c.density_neighbors = v == 0 ? std::nullopt : std::optional<std::size_t>(v);
    } else if (key == "sigma0") c.params.sigma0 = parse_real(key, value);
    else if (key == "time") {
        const auto v = parse_unsigned(key, value);
        if (v > 1'000'000'000ULL) throw_validation("time: " + value + " is out of range");
        c.params.time = static_cast<unsigned>(v);
    } else if (key == "seed") c.params.seed = parse_unsigned(key, value);
    else if (key == "factor") c.factor = parse_unsigned(key, value);
    else if (key == "eigen_tol") c.eigen_tol = parse_real(key, value);
    else if (key == "max_eigenpairs") c.max_eigenpairs = parse_unsigned(key, value);
    else if (key == "dense_limit") c.dense_limit = parse_unsigned(key, value);
    else if (key == "normalize") c.normalize = parse_bool(key, value);
    else if (key == "normalize_stage") {
        if (value == "after_mask") c.normalize_stage = NormalizeStage::AfterMask;
        else if (value == "before_downsample") c.normalize_stage = NormalizeStage::BeforeDownsample;
        else throw_validation("normalize_stage: expected after_mask or before_downsample, got '" + value + "'");
    } else if (key == "unmix_input") {
        if (value == "normalized") c.unmix_raw = false;
        else if (value == "raw") c.unmix_raw = true;
        else throw_validation("unmix_input: expected normalized or raw, got '" + value + "'");
    } else if (key == "snr_source") {
        if (value == "hysime") c.snr_source = SnrSource::Hysime;
        else if (value == "builtin") c.snr_source = SnrSource::Builtin;
        else throw_validation("snr_source: expected hysime or builtin, got '" + value + "'");
    } else if (key == "m") {
        const auto v = parse_unsigned(key, value);
        c.fixed_m = v == 0 ? std::nullopt : std::optional<std::size_t>(v);
    } else if (key == "threads") c.threads = parse_unsigned(key, value);
    else if (key == "cache") c.use_cache = parse_bool(key, value);
    else if (key == "cache_dir") c.cache_dir = parse_path(value, base);
    else throw_validation("unknown config key '" + key + "'");
}

void apply_config_text(PipelineConfig& config, const std::string& text, const std::filesystem::path& base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw_validation("config line " + std::to_string(lineno) + ": expected key = value");
        }
        set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1), base);
    }
}

PipelineConfig load_config(const std::filesystem::path& path) {
    PipelineConfig config;
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw_validation("config: " + std::string(e.what()));
    }
    apply_config_text(config, text, path.parent_path());
    return config;
}

void validate(const PipelineConfig& c) {
    const auto& p = c.params;
    if (p.clusters == 0) throw_validation("k must be at least 1");
    if (p.neighbors == 0) throw_validation("n_neighbors must be at least 1");
    if (!(p.sigma0 > 0.0) || !std::isfinite(p.sigma0)) throw_validation("sigma0 must be positive and finite");
    if (c.factor == 0) throw_validation("factor must be at least 1");
    if (!(c.eigen_tol > 0.0 && c.eigen_tol < 1.0)) throw_validation("eigen_tol must lie in (0, 1)");
    if (c.max_eigenpairs < 1) throw_validation("max_eigenpairs must be at least 1");
    if (c.dense_limit < 2) throw_validation("dense_limit must be at least 2");
    if (c.reference_merge.size()) parse_merge_spec(c.reference_merge);
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& c) {
    auto path = [](const std::filesystem::path& p) { return p.string(); };
    return {
        {"cube", path(c.cube)},
        {"mask", path(c.mask)},
        {"crowns", path(c.crowns)},
        {"reference", path(c.reference)},
        {"reference_merge", c.reference_merge},
        {"out", path(c.out)},
        {"k", std::to_string(c.params.clusters)},
        {"n_neighbors", std::to_string(c.params.neighbors)},
        {"density_neighbors", std::to_string(c.density_neighbors.value_or(0))},
        {"sigma0", format_real(c.params.sigma0)},
        {"time", std::to_string(c.params.time)},
        {"seed", std::to_string(c.params.seed)},
        {"factor", std::to_string(c.factor)},
        {"eigen_tol", format_real(c.eigen_tol)},
        {"max_eigenpairs", std::to_string(c.max_eigenpairs)},
        {"dense_limit", std::to_string(c.dense_limit)},
        {"normalize", c.normalize ? "true" : "false"},
        {"normalize_stage", c.normalize_stage == NormalizeStage::AfterMask ? "after_mask" : "before_downsample"},
        {"unmix_input", c.unmix_raw ? "raw" : "normalized"},
        {"snr_source", c.snr_source == SnrSource::Hysime ? "hysime" : "builtin"},
        {"m", std::to_string(c.fixed_m.value_or(0))},
    };
}

std::string format_config(const PipelineConfig& config) {
    std::string out;
    for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
    return out;
}

std::filesystem::path resolve_cache_dir(const PipelineConfig& config) {
    if (!config.cache_dir.empty()) return config.cache_dir;
    if (const char* env = std::getenv("DVIS_CACHE_DIR"); env && *env) return env;
    return config.out / "cache";
}

} // namespace dvis
