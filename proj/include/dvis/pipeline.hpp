#pragma once

#include "dvis/config.hpp"
#include "dvis/dvis.hpp"
#include "dvis/eval.hpp"
#include "dvis/io.hpp"
#include "dvis/synthetic.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dvis {

struct Artifact {
    std::string name;
    std::filesystem::path path;
    std::string hash;   // FNV-1a of the file contents
};

/// Cube -> (normalise) -> downsample -> mask -> extract -> (normalise).
struct PreparedScene {
    PixelSet pixels;          // clustering input
    RowMatrix raw;            // same pixels before normalisation
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::string cube_hash;
    std::string mask_hash;    // empty without a mask
};

PreparedScene prepare_scene(const PipelineConfig& config);

/// StageCache backed by one binary file per entry in a directory.
class FileStageCache final : public StageCache {
public:
    explicit FileStageCache(std::filesystem::path dir);

    std::optional<UnmixingModel> load_unmixing(std::uint64_t key, const RowMatrix& pixels) override;
    void store_unmixing(std::uint64_t key, const UnmixingModel& model) override;
    std::optional<Spectrum> load_spectrum(std::uint64_t key) override;
    void store_spectrum(std::uint64_t key, const Spectrum& spectrum) override;

    std::size_t hits() const { return hits_; }

private:
    std::filesystem::path dir_;
    std::size_t hits_ = 0;
};

struct GridEval {
    EvalReport report;
    std::size_t compared = 0;
    std::size_t skipped = 0;   // predicted pixels without a reference label
};

/// Compares two label grids on the pixels labelled in both. With
/// `same_support`, the labelled sets must coincide (data error otherwise).
GridEval evaluate_grids(const LabelGrid& predicted, const LabelGrid& reference, bool same_support);

struct ClusterRun {
    PreparedScene scene;
    ClusterState state;
    LabelGrid labels;
    std::optional<CrownVote> crown_vote;
    std::optional<GridEval> pixel_eval;        // raw cluster labels
    std::optional<GridEval> voted_eval;        // after crown voting, pixel-weighted
    std::optional<GridEval> crown_eval;        // one sample per crown
    std::vector<Artifact> artifacts;
};

/// Full pipeline with artifacts written under config.out. Progress lines go to `log` when given.
ClusterRun run_cluster(const PipelineConfig& config, std::ostream* log = nullptr);

struct EvalRun {
    GridEval pixel;
    std::optional<GridEval> crown;
    std::vector<Artifact> artifacts;
};

/// Compares config.predicted against config.reference (same labelled pixels required).
EvalRun run_eval(const PipelineConfig& config);

struct UnmixRun {
    PreparedScene scene;
    UnmixingModel model;
    std::vector<Artifact> artifacts;
};

UnmixRun run_unmix(const PipelineConfig& config);

struct GraphStats {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double min_degree = 0.0;
    double mean_degree = 0.0;
    double max_degree = 0.0;
    std::size_t bridges = 0;
    std::size_t eigenpairs = 0;
    double lambda2 = 0.0;
    double stationary_residual = 0.0;   // |pi P - pi|_inf
    std::vector<std::string> warnings;
    std::vector<Artifact> artifacts;
};

GraphStats run_graph_stats(const PipelineConfig& config, bool write_edges = false);

/// Writes scene.hdr/.img, truth.csv, endmembers.csv, planted.csv, synth.json and
/// a scene.cfg pointing at them.
std::vector<Artifact> write_synthetic(const SyntheticScene& scene, const SyntheticSceneSpec& spec,
                                      const std::filesystem::path& out);

/// Caps OpenMP threads when n > 0.
void set_thread_count(std::size_t n);

} // namespace dvis
