#include "dvis/pipeline.hpp"

#include "dvis/envi.hpp"
#include "dvis/error.hpp"
#include "dvis/hash.hpp"

#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dvis {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string hash_text(const std::string& s) {
    ContentHash h;
    h.text(s);
    return h.hex();
}

std::string hash_matrix(const RowMatrix& x) {
    ContentHash h;
    h.value(static_cast<std::int64_t>(x.rows()));
    h.value(static_cast<std::int64_t>(x.cols()));
    h.bytes(x.data(), static_cast<std::size_t>(x.size()) * sizeof(double));
    return h.hex();
}

std::string real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw_data("cannot create output directory " + dir_.string() + ": " + ec.message());
    }

    void write(const std::string& name, const std::string& contents) {
        const fs::path path = dir_ / name;
        write_file_atomic(path, contents);
        artifacts.push_back({name, path, hash_text(contents)});
    }

    const fs::path& dir() const { return dir_; }

    std::vector<Artifact> artifacts;

private:
    fs::path dir_;
};

json artifacts_json(const std::vector<Artifact>& artifacts) {
    json out = json::object();
    for (const auto& a : artifacts) out[a.name] = a.hash;
    return out;
}

json params_json(const PipelineConfig& config) {
    json p = json::object();
    for (const auto& [k, v] : config_entries(config)) p[k] = v;
    return p;
}

json report_json(const GridEval& e) {
    json j;
    j["overall_acc"] = e.report.overall_acc;
    j["average_acc"] = e.report.average_acc;
    j["producer_acc"] = e.report.producer_acc;
    j["user_acc"] = e.report.user_acc;
    j["permutation"] = e.report.permutation;
    j["compared"] = e.compared;
    j["skipped"] = e.skipped;
    std::vector<std::vector<long long>> m(static_cast<std::size_t>(e.report.matrix.rows()));
    for (Eigen::Index r = 0; r < e.report.matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < e.report.matrix.cols(); ++c) m[static_cast<std::size_t>(r)].push_back(e.report.matrix(r, c));
    }
    j["matrix"] = m;
    return j;
}

LabelGrid read_label_grid(const fs::path& path, std::size_t rows, std::size_t cols) {
    return labels_from_entries(read_grid_csv(path), rows, cols);
}

LabelGrid apply_merge(LabelGrid grid, const std::string& spec_text) {
    if (spec_text.empty()) return grid;
    auto spec = parse_merge_spec(spec_text);
    spec.emplace(0, 0);
    grid.label = merge_classes(grid.label, spec);
    return grid;
}

void normalize_cube(HsiCube& cube) {
    for (std::size_t r = 0; r < cube.rows(); ++r) {
        for (std::size_t c = 0; c < cube.cols(); ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < cube.bands(); ++b) s += cube.at(r, c, b) * cube.at(r, c, b);
            if (!(s > 0.0)) {
                throw_data("pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") has a zero spectrum");
            }
            const double inv = 1.0 / std::sqrt(s);
            for (std::size_t b = 0; b < cube.bands(); ++b) cube.at(r, c, b) *= inv;
        }
    }
}

/// Grid evaluation at crown level: one sample per crown labelled in both.
GridEval crown_level_eval(const CrownVote& predicted, const LabelGrid& reference, const CrownMap& crowns) {
    const CrownVote ref = crown_majority_vote(reference, crowns);
    std::vector<int> p, r;
    for (std::size_t c = 0; c < predicted.crown_label.size(); ++c) {
        if (predicted.crown_label[c] > 0 && ref.crown_label[c] > 0) {
            p.push_back(predicted.crown_label[c]);
            r.push_back(ref.crown_label[c]);
        }
    }
    if (p.empty()) throw_data("no crown carries both a predicted and a reference label");
    int k = 1;
    for (int v : p) k = std::max(k, v);
    for (int v : r) k = std::max(k, v);
    GridEval out;
    out.report = evaluate(p, r, k);
    out.compared = p.size();
    out.skipped = predicted.crown_label.size() - p.size();
    return out;
}

std::string format_diagnostics(const ClusterRun& run) {
    const auto& st = run.state;
    const auto& origin = run.scene.pixels.origin;
    std::vector<int> mode_label(origin.size(), 0);
    for (std::size_t k = 0; k < st.modes.size(); ++k) mode_label[static_cast<std::size_t>(st.modes[k])] = static_cast<int>(k + 1);
    std::ostringstream out;
    out << "row,col,density,purity,zeta,dt,parent_row,parent_col,label,mode\n";
    for (std::size_t i = 0; i < origin.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        out << origin[i].row << ',' << origin[i].col << ',' << real(st.density[e]) << ',' << real(st.purity[e]) << ','
            << real(st.zeta[e]) << ',' << real(st.dt[e]) << ',';
        if (const Index p = st.dt_parent[i]; p >= 0) {
            out << origin[static_cast<std::size_t>(p)].row << ',' << origin[static_cast<std::size_t>(p)].col;
        } else {
            out << ',';
        }
        out << ',' << st.labels[i] << ',' << mode_label[i] << '\n';
    }
    return out.str();
}

std::string format_endmembers(const UnmixingModel& model, const PixelSet& pixels) {
    std::ostringstream out;
    out << "material,index,row,col";
    for (Eigen::Index b = 0; b < model.endmembers.cols(); ++b) out << ",b" << b;
    out << '\n';
    for (std::size_t j = 0; j < model.m; ++j) {
        const auto idx = static_cast<std::size_t>(model.endmember_indices[j]);
        out << (j + 1) << ',' << idx << ',' << pixels.origin[idx].row << ',' << pixels.origin[idx].col;
        for (Eigen::Index b = 0; b < model.endmembers.cols(); ++b) out << ',' << real(model.endmembers(static_cast<Eigen::Index>(j), b));
        out << '\n';
    }
    return out.str();
}

std::string format_abundances(const UnmixingModel& model, const PixelSet& pixels) {
    std::ostringstream out;
    out << "row,col";
    for (std::size_t j = 0; j < model.m; ++j) out << ",a" << (j + 1);
    out << ",purity\n";
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        out << pixels.origin[i].row << ',' << pixels.origin[i].col;
        for (Eigen::Index j = 0; j < model.abundances.cols(); ++j) out << ',' << real(model.abundances(e, j));
        out << ',' << real(model.purity[e]) << '\n';
    }
    return out.str();
}

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

constexpr char kUnmixMagic[8] = {'D', 'V', 'I', 'S', 'U', 'N', 'M', '\0'};
constexpr std::uint32_t kUnmixVersion = 1;

} // namespace

void set_thread_count(std::size_t n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(static_cast<int>(n));
#else
    (void)n;
#endif
}

PreparedScene prepare_scene(const PipelineConfig& config) {
    if (config.cube.empty()) throw_validation("cube: no input cube given");
    PreparedScene scene;
    HsiCube cube;
    try {
        cube = load_envi(config.cube);
        cube.check_finite();
    } catch (...) {
        rethrow_with_stage("load");
    }
    {
        ContentHash h;
        h.value(static_cast<std::uint64_t>(cube.rows()));
        h.value(static_cast<std::uint64_t>(cube.cols()));
        h.value(static_cast<std::uint64_t>(cube.bands()));
        h.values(std::span<const double>(cube.data()));
        scene.cube_hash = h.hex();
    }
    try {
        if (config.normalize && config.normalize_stage == NormalizeStage::BeforeDownsample) normalize_cube(cube);
        cube = bicubic_downsample(cube, config.factor);
    } catch (...) {
        rethrow_with_stage("downsample");
    }
    scene.grid_rows = cube.rows();
    scene.grid_cols = cube.cols();
    try {
        PixelMask mask(cube.rows(), cube.cols(), true);
        if (!config.mask.empty()) {
            const std::string text = read_file(config.mask);
            scene.mask_hash = hash_text(text);
            mask = mask_from_entries(read_grid_csv(config.mask), cube.rows(), cube.cols());
        }
        PixelSet pixels = extract_pixels(cube, mask);
        scene.raw = pixels.spectra;
        if (config.normalize && config.normalize_stage == NormalizeStage::AfterMask) pixels = normalize_spectra(pixels);
        scene.pixels = std::move(pixels);
    } catch (...) {
        rethrow_with_stage("mask");
    }
    return scene;
}

FileStageCache::FileStageCache(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw_data("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::optional<UnmixingModel> FileStageCache::load_unmixing(std::uint64_t key, const RowMatrix& pixels) {
    ContentHash name;
    name.value(key);
    std::ifstream in(dir_ / ("unmix-" + name.hex() + ".bin"), std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t stored = 0, m = 0, n = 0, d = 0, zero = 0;
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kUnmixMagic, sizeof(magic)) != 0) return std::nullopt;
    if (!get(in, version) || version != kUnmixVersion || !get(in, stored) || stored != key) return std::nullopt;
    if (!get(in, m) || !get(in, n) || !get(in, d) || !get(in, zero)) return std::nullopt;
    if (n != static_cast<std::uint64_t>(pixels.rows()) || d != static_cast<std::uint64_t>(pixels.cols()) || m == 0 ||
        m > d || zero > n) {
        return std::nullopt;
    }
    UnmixingModel model;
    model.m = m;
    model.endmembers.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    model.abundances.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    model.purity.resize(static_cast<Eigen::Index>(n));
    model.endmember_indices.resize(m);
    model.zero_abundance_rows.resize(zero);
    in.read(reinterpret_cast<char*>(model.endmembers.data()), static_cast<std::streamsize>(m * d * sizeof(double)));
    in.read(reinterpret_cast<char*>(model.abundances.data()), static_cast<std::streamsize>(n * m * sizeof(double)));
    in.read(reinterpret_cast<char*>(model.purity.data()), static_cast<std::streamsize>(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(model.endmember_indices.data()), static_cast<std::streamsize>(m * sizeof(Index)));
    in.read(reinterpret_cast<char*>(model.zero_abundance_rows.data()), static_cast<std::streamsize>(zero * sizeof(Index)));
    get(in, model.snr_db);
    if (!in) return std::nullopt;
    // Cheap collision guard: endmembers must still be copies of the pixels they name.
    for (std::size_t j = 0; j < m; ++j) {
        const Index idx = model.endmember_indices[j];
        if (idx < 0 || idx >= pixels.rows() || model.endmembers.row(static_cast<Eigen::Index>(j)) != pixels.row(idx)) {
            return std::nullopt;
        }
    }
    ++hits_;
    return model;
}

void FileStageCache::store_unmixing(std::uint64_t key, const UnmixingModel& model) {
    ContentHash name;
    name.value(key);
    std::ostringstream out;
    out.write(kUnmixMagic, sizeof(kUnmixMagic));
    put(out, kUnmixVersion);
    put(out, key);
    put(out, static_cast<std::uint64_t>(model.m));
    put(out, static_cast<std::uint64_t>(model.abundances.rows()));
    put(out, static_cast<std::uint64_t>(model.endmembers.cols()));
    put(out, static_cast<std::uint64_t>(model.zero_abundance_rows.size()));
    out.write(reinterpret_cast<const char*>(model.endmembers.data()),
              static_cast<std::streamsize>(model.endmembers.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.abundances.data()),
              static_cast<std::streamsize>(model.abundances.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.purity.data()),
              static_cast<std::streamsize>(model.purity.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.endmember_indices.data()),
              static_cast<std::streamsize>(model.endmember_indices.size() * sizeof(Index)));
    out.write(reinterpret_cast<const char*>(model.zero_abundance_rows.data()),
              static_cast<std::streamsize>(model.zero_abundance_rows.size() * sizeof(Index)));
    put(out, model.snr_db);
    write_file_atomic(dir_ / ("unmix-" + name.hex() + ".bin"), out.str());
}

std::optional<Spectrum> FileStageCache::load_spectrum(std::uint64_t key) {
    ContentHash name;
    name.value(key);
    auto sp = dvis::load_spectrum(dir_ / ("spectrum-" + name.hex() + ".bin"), key);
    if (sp) ++hits_;
    return sp;
}

void FileStageCache::store_spectrum(std::uint64_t key, const Spectrum& spectrum) {
    ContentHash name;
    name.value(key);
    dvis::save_spectrum(dir_ / ("spectrum-" + name.hex() + ".bin"), spectrum, key);
}

GridEval evaluate_grids(const LabelGrid& predicted, const LabelGrid& reference, bool same_support) {
    if (predicted.rows != reference.rows || predicted.cols != reference.cols) {
        throw_data("grid mismatch: predicted is " + std::to_string(predicted.rows) + "x" +
                   std::to_string(predicted.cols) + ", reference is " + std::to_string(reference.rows) + "x" +
                   std::to_string(reference.cols));
    }
    std::vector<int> p, r;
    GridEval out;
    int k = 1;
    for (std::size_t i = 0; i < predicted.label.size(); ++i) {
        const int a = predicted.label[i];
        const int b = reference.label[i];
        if (same_support && (a > 0) != (b > 0)) {
            throw_data("grid mismatch: pixel (" + std::to_string(i / predicted.cols) + ", " +
                       std::to_string(i % predicted.cols) + ") is labelled in only one file");
        }
        if (a > 0 && b > 0) {
            p.push_back(a);
            r.push_back(b);
            k = std::max({k, a, b});
        } else if (a > 0) {
            ++out.skipped;
        }
    }
    if (p.empty()) throw_data("no pixel carries both a predicted and a reference label");
    out.report = evaluate(p, r, k);
    out.compared = p.size();
    return out;
}

ClusterRun run_cluster(const PipelineConfig& config, std::ostream* log) {
    validate(config);
    set_thread_count(config.threads);
    using clock = std::chrono::steady_clock;
    std::vector<std::pair<std::string, double>> timings;
    auto t0 = clock::now();
    auto lap = [&](const std::string& stage) {
        const auto now = clock::now();
        timings.emplace_back(stage, std::chrono::duration<double>(now - t0).count());
        t0 = now;
        if (log) *log << "[dvis] " << stage << " done (" << std::fixed << std::setprecision(2) << timings.back().second << " s)\n";
    };

    ClusterRun run;
    run.scene = prepare_scene(config);
    lap("prepare");

    ClusterOptions options;
    options.snr_source = config.snr_source;
    options.fixed_m = config.fixed_m;
    options.density_neighbors = config.density_neighbors;
    options.graph.truncation_tol = config.eigen_tol;
    options.graph.max_eigenpairs = config.max_eigenpairs;
    options.graph.dense_limit = config.dense_limit;
    if (config.unmix_raw) options.unmixing_input = &run.scene.raw;

    std::optional<FileStageCache> cache;
    if (config.use_cache) cache.emplace(resolve_cache_dir(config));
    run.state = cluster(run.scene.pixels, config.params, options, cache ? &*cache : nullptr);
    for (const auto& t : run.state.timings) timings.emplace_back("cluster/" + t.first, t.second);
    lap("cluster");

    const auto& pixels = run.scene.pixels;
    run.labels = LabelGrid(run.scene.grid_rows, run.scene.grid_cols);
    for (std::size_t i = 0; i < pixels.size(); ++i) run.labels.at(pixels.origin[i].row, pixels.origin[i].col) = run.state.labels[i];

    std::optional<CrownMap> crowns;
    if (!config.crowns.empty()) {
        try {
            crowns = crowns_from_grid(read_label_grid(config.crowns, run.scene.grid_rows, run.scene.grid_cols));
            run.crown_vote = crown_majority_vote(run.labels, *crowns);
        } catch (...) {
            rethrow_with_stage("crown voting");
        }
    }
    if (!config.reference.empty()) {
        try {
            const LabelGrid reference =
                apply_merge(read_label_grid(config.reference, run.scene.grid_rows, run.scene.grid_cols), config.reference_merge);
            run.pixel_eval = evaluate_grids(run.labels, reference, false);
            if (run.crown_vote) {
                run.voted_eval = evaluate_grids(run.crown_vote->relabeled, reference, false);
                run.crown_eval = crown_level_eval(*run.crown_vote, reference, *crowns);
            }
        } catch (...) {
            rethrow_with_stage("evaluation");
        }
    }
    lap("evaluate");

    ArtifactWriter out(config.out);
    out.write("labels.csv", format_label_csv(run.labels));
    out.write("labels.pgm", format_label_pgm(run.labels));
    if (run.crown_vote) {
        out.write("crown_labels.csv", format_label_csv(run.crown_vote->relabeled));
        out.write("crown_labels.pgm", format_label_pgm(run.crown_vote->relabeled));
    }
    out.write("diagnostics.csv", format_diagnostics(run));
    out.write("endmembers.csv", format_endmembers(run.state.unmixing, pixels));
    if (run.pixel_eval) {
        out.write("eval_pixels.txt", format_report_table(run.pixel_eval->report));
        out.write("eval_pixels.csv", format_report_csv(run.pixel_eval->report));
    }
    if (run.voted_eval) {
        out.write("eval_voted.txt", format_report_table(run.voted_eval->report));
        out.write("eval_voted.csv", format_report_csv(run.voted_eval->report));
        out.write("eval_crowns.txt", format_report_table(run.crown_eval->report));
        out.write("eval_crowns.csv", format_report_csv(run.crown_eval->report));
    }
    lap("write");

    json manifest;
    manifest["tool"] = "dvis cluster";
    manifest["params"] = params_json(config);
    manifest["inputs"] = {{"cube", run.scene.cube_hash}, {"mask", run.scene.mask_hash}};
    if (!config.crowns.empty()) manifest["inputs"]["crowns"] = hash_text(read_file(config.crowns));
    if (!config.reference.empty()) manifest["inputs"]["reference"] = hash_text(read_file(config.reference));
    manifest["inputs"]["pixels"] = hash_matrix(pixels.spectra);
    manifest["outputs"] = artifacts_json(out.artifacts);
    json result;
    result["grid"] = {run.scene.grid_rows, run.scene.grid_cols};
    result["pixels"] = pixels.size();
    result["materials"] = run.state.unmixing.m;
    result["snr_db"] = run.state.unmixing.snr_db;
    std::vector<std::array<std::size_t, 2>> em, modes;
    for (Index i : run.state.unmixing.endmember_indices) {
        em.push_back({pixels.origin[static_cast<std::size_t>(i)].row, pixels.origin[static_cast<std::size_t>(i)].col});
    }
    for (Index i : run.state.modes) {
        modes.push_back({pixels.origin[static_cast<std::size_t>(i)].row, pixels.origin[static_cast<std::size_t>(i)].col});
    }
    result["endmember_pixels"] = em;
    result["modes"] = modes;
    result["eigenpairs"] = run.state.graph->spectrum.size();
    result["graph_edges"] = run.state.graph->edge_count();
    result["graph_bridges"] = run.state.graph->bridges.size();
    if (run.pixel_eval) result["eval_pixels"] = report_json(*run.pixel_eval);
    if (run.voted_eval) {
        result["eval_voted"] = report_json(*run.voted_eval);
        result["eval_crowns"] = report_json(*run.crown_eval);
    }
    manifest["result"] = result;
    manifest["warnings"] = run.state.warnings;
    manifest["rules"] = {
        {"visit_order", "non-increasing zeta, ties by ascending pixel index"},
        {"mode_ties", "lowest pixel index"},
        {"crown_vote_ties", "lowest label"},
        {"knn_ties", "ascending pixel index"},
    };
    out.write("manifest.json", manifest.dump(2) + "\n");

    std::ostringstream timing;
    for (const auto& [stage, seconds] : timings) timing << stage << ' ' << std::fixed << std::setprecision(6) << seconds << '\n';
    if (cache) timing << "cache_hits " << cache->hits() << '\n';
    write_file_atomic(out.dir() / "timing.log", timing.str());

    run.artifacts = std::move(out.artifacts);
    for (const auto& w : run.state.warnings) {
        if (log) *log << "[dvis] warning: " << w << '\n';
    }
    return run;
}

EvalRun run_eval(const PipelineConfig& config) {
    if (config.predicted.empty()) throw_validation("predicted: no predicted label file given");
    if (config.reference.empty()) throw_validation("reference: no reference label file given");
    EvalRun run;
    LabelGrid predicted, reference;
    try {
        predicted = read_label_grid(config.predicted, 0, 0);
        reference = apply_merge(read_label_grid(config.reference, 0, 0), config.reference_merge);
        // Inferred extents can differ when the last rows/cols are unlabelled; pad to the larger one.
        const std::size_t rows = std::max(predicted.rows, reference.rows);
        const std::size_t cols = std::max(predicted.cols, reference.cols);
        predicted = read_label_grid(config.predicted, rows, cols);
        reference = apply_merge(read_label_grid(config.reference, rows, cols), config.reference_merge);
        run.pixel = evaluate_grids(predicted, reference, true);
        if (!config.crowns.empty()) {
            const CrownMap crowns = crowns_from_grid(read_label_grid(config.crowns, rows, cols));
            run.crown = crown_level_eval(crown_majority_vote(predicted, crowns), reference, crowns);
        }
    } catch (...) {
        rethrow_with_stage("eval");
    }
    ArtifactWriter out(config.out);
    out.write("eval_report.txt", format_report_table(run.pixel.report));
    out.write("eval_report.csv", format_report_csv(run.pixel.report));
    if (run.crown) {
        out.write("eval_crowns.txt", format_report_table(run.crown->report));
        out.write("eval_crowns.csv", format_report_csv(run.crown->report));
    }
    run.artifacts = std::move(out.artifacts);
    return run;
}

UnmixRun run_unmix(const PipelineConfig& config) {
    validate(config);
    set_thread_count(config.threads);
    UnmixRun run;
    run.scene = prepare_scene(config);
    try {
        UnmixOptions uo;
        uo.seed = config.params.seed;
        uo.snr_source = config.snr_source;
        uo.fixed_m = config.fixed_m;
        run.model = unmix(config.unmix_raw ? run.scene.raw : run.scene.pixels.spectra, uo);
    } catch (...) {
        rethrow_with_stage("unmixing");
    }
    ArtifactWriter out(config.out);
    out.write("endmembers.csv", format_endmembers(run.model, run.scene.pixels));
    out.write("abundances.csv", format_abundances(run.model, run.scene.pixels));
    json summary;
    summary["tool"] = "dvis unmix";
    summary["params"] = params_json(config);
    summary["inputs"] = {{"cube", run.scene.cube_hash}, {"mask", run.scene.mask_hash}};
    summary["materials"] = run.model.m;
    summary["snr_db"] = run.model.snr_db;
    summary["endmember_indices"] = run.model.endmember_indices;
    summary["zero_abundance_rows"] = run.model.zero_abundance_rows.size();
    summary["outputs"] = artifacts_json(out.artifacts);
    out.write("unmix.json", summary.dump(2) + "\n");
    run.artifacts = std::move(out.artifacts);
    return run;
}

GraphStats run_graph_stats(const PipelineConfig& config, bool write_edges) {
    validate(config);
    set_thread_count(config.threads);
    const PreparedScene scene = prepare_scene(config);
    if (config.params.neighbors >= scene.pixels.size()) {
        throw_validation("n_neighbors " + std::to_string(config.params.neighbors) + " must be below the pixel count " +
                         std::to_string(scene.pixels.size()));
    }
    GraphOptions go;
    go.diffusion_time = config.params.time;
    go.truncation_tol = config.eigen_tol;
    go.max_eigenpairs = config.max_eigenpairs;
    go.dense_limit = config.dense_limit;
    PixelGraph graph;
    try {
        graph = knn_graph(scene.pixels, config.params.neighbors, go);
    } catch (...) {
        rethrow_with_stage("graph");
    }
    GraphStats st;
    st.nodes = graph.size();
    st.edges = graph.edge_count();
    st.min_degree = graph.degrees.minCoeff();
    st.max_degree = graph.degrees.maxCoeff();
    st.mean_degree = graph.degrees.mean();
    st.bridges = graph.bridges.size();
    st.eigenpairs = graph.spectrum.size();
    st.lambda2 = st.eigenpairs > 1 ? graph.spectrum.eigenvalues[1] : 0.0;
    const Vector pi_p = transition_matrix(graph).transpose() * graph.stationary;
    st.stationary_residual = (pi_p - graph.stationary).cwiseAbs().maxCoeff();
    st.warnings = graph.warnings;

    ArtifactWriter out(config.out);
    std::ostringstream ev;
    ev << "k,eigenvalue,decay_t\n";
    for (std::size_t k = 0; k < st.eigenpairs; ++k) {
        const double l = graph.spectrum.eigenvalues[static_cast<Eigen::Index>(k)];
        ev << (k + 1) << ',' << real(l) << ',' << real(std::pow(std::abs(l), config.params.time)) << '\n';
    }
    out.write("eigenvalues.csv", ev.str());
    if (write_edges) out.write("edges.csv", format_edge_list(graph));
    json j;
    j["tool"] = "dvis graph-stats";
    j["params"] = params_json(config);
    j["inputs"] = {{"cube", scene.cube_hash}, {"mask", scene.mask_hash}};
    j["nodes"] = st.nodes;
    j["edges"] = st.edges;
    j["degree"] = {{"min", st.min_degree}, {"mean", st.mean_degree}, {"max", st.max_degree}};
    j["bridges"] = st.bridges;
    j["eigenpairs"] = st.eigenpairs;
    j["lambda2"] = st.lambda2;
    j["stationary_residual"] = st.stationary_residual;
    j["warnings"] = st.warnings;
    j["outputs"] = artifacts_json(out.artifacts);
    out.write("graph_stats.json", j.dump(2) + "\n");
    st.artifacts = std::move(out.artifacts);
    return st;
}

std::vector<Artifact> write_synthetic(const SyntheticScene& scene, const SyntheticSceneSpec& spec, const fs::path& dir) {
    ArtifactWriter out(dir);
    const fs::path header = save_envi(scene.cube, dir / "scene");
    out.artifacts.push_back({"scene.hdr", header, hash_text(read_file(header))});
    out.artifacts.push_back({"scene.img", dir / "scene.img", hash_text(read_file(dir / "scene.img"))});
    out.write("truth.csv", format_label_csv(scene.truth));

    std::ostringstream em;
    em << "material";
    for (Eigen::Index b = 0; b < scene.endmembers.cols(); ++b) em << ",b" << b;
    em << '\n';
    for (Eigen::Index j = 0; j < scene.endmembers.rows(); ++j) {
        em << (j + 1);
        for (Eigen::Index b = 0; b < scene.endmembers.cols(); ++b) em << ',' << real(scene.endmembers(j, b));
        em << '\n';
    }
    out.write("endmembers.csv", em.str());

    std::ostringstream planted;
    planted << "material,index,row,col\n";
    for (std::size_t j = 0; j < scene.planted.size(); ++j) {
        const Index p = scene.planted[j];
        if (p < 0) continue;
        planted << (j + 1) << ',' << p << ',' << static_cast<std::size_t>(p) / scene.cube.cols() << ','
                << static_cast<std::size_t>(p) % scene.cube.cols() << '\n';
    }
    out.write("planted.csv", planted.str());

    // The Madingley sigma0 underflows every density term on unit-norm synthetic
    // spectra, so the generated config carries a scale that suits them.
    const std::size_t neighbors = std::min<std::size_t>(50, spec.n - 1);
    out.write("scene.cfg", "# generated by dvis synth\ncube = scene.hdr\nreference = truth.csv\nfactor = 1\nk = " +
                               std::to_string(spec.cluster_sizes.empty() ? spec.materials : spec.cluster_sizes.size()) +
                               "\nn_neighbors = " + std::to_string(neighbors) + "\nsigma0 = 0.05\n");

    json j;
    j["tool"] = "dvis synth";
    j["spec"] = {{"n", spec.n},
                 {"bands", spec.bands},
                 {"materials", spec.materials},
                 {"cluster_sizes", spec.cluster_sizes},
                 {"concentration", spec.concentration},
                 {"dominance", spec.dominance},
                 {"snr_db", spec.snr_db},
                 {"noiseless", spec.noiseless},
                 {"plant_pure", spec.plant_pure},
                 {"cols", spec.cols},
                 {"seed", spec.seed}};
    j["grid"] = {scene.cube.rows(), scene.cube.cols()};
    if (std::isfinite(scene.empirical_snr_db)) j["empirical_snr_db"] = scene.empirical_snr_db;
    j["outputs"] = artifacts_json(out.artifacts);
    out.write("synth.json", j.dump(2) + "\n");
    return out.artifacts;
}

} // namespace dvis
