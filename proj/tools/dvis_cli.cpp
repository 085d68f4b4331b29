#include "dvis/error.hpp"
#include "dvis/pipeline.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

void add_setting(CLI::App* app, Overrides& overrides, const std::string& flag, const std::string& key,
                 const std::string& help) {
    app->add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, Overrides& overrides, std::string& config_path) {
    app->add_option("--config", config_path, "key = value configuration file");
    add_setting(app, overrides, "--cube", "cube", "ENVI header of the input cube");
    add_setting(app, overrides, "--mask", "mask", "CSV mask (row,col,keep) on the downsampled grid");
    add_setting(app, overrides, "--factor", "factor", "spatial downsampling factor (default 4)");
    add_setting(app, overrides, "--seed", "seed", "seed for the VCA directions");
    add_setting(app, overrides, "--threads", "threads", "worker thread cap (0 = all cores)");
    add_setting(app, overrides, "--out", "out", "output directory");
    app->add_option_function<std::vector<std::string>>(
        "--set",
        [&overrides](const std::vector<std::string>& items) {
            for (const auto& item : items) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) dvis::throw_validation("--set expects key=value, got '" + item + "'");
                overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
            }
        },
        "any config key, as key=value (repeatable)");
}

void add_graph(CLI::App* app, Overrides& overrides) {
    add_setting(app, overrides, "--n-neighbors", "n_neighbors", "neighbours per pixel N (default 150)");
    add_setting(app, overrides, "--time", "time", "diffusion time t (default 32)");
    add_setting(app, overrides, "--eigen-tol", "eigen_tol", "eigenpair truncation tolerance (default 1e-8)");
}

dvis::PipelineConfig build_config(const std::string& path, const Overrides& overrides) {
    dvis::PipelineConfig config = path.empty() ? dvis::PipelineConfig{} : dvis::load_config(path);
    for (const auto& [k, v] : overrides) dvis::set_config_value(config, k, v);
    return config;
}

std::string percent(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << 100.0 * v << "%";
    return s.str();
}

void print_artifacts(const std::vector<dvis::Artifact>& artifacts) {
    for (const auto& a : artifacts) std::cout << "  " << a.path.string() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"D-VIS hyperspectral clustering"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides overrides;
    std::string config_path;
    bool quiet = false;
    bool write_edges = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress output");

    auto* cluster = app.add_subcommand("cluster", "run the full pipeline and write label maps");
    add_common(cluster, overrides, config_path);
    add_graph(cluster, overrides);
    add_setting(cluster, overrides, "--k", "k", "number of clusters K (default 2)");
    add_setting(cluster, overrides, "--sigma0", "sigma0", "density scale (default 3.89e-4)");
    add_setting(cluster, overrides, "--crowns", "crowns", "crown id CSV for majority voting");
    add_setting(cluster, overrides, "--reference", "reference", "reference label CSV to score against");
    add_setting(cluster, overrides, "--reference-merge", "reference_merge", "merge reference classes, e.g. 1:1,2:2,3:2");
    cluster->add_flag_callback("--no-cache", [&overrides] { overrides.emplace_back("cache", "false"); },
                               "recompute unmixing and eigenpairs");

    auto* eval = app.add_subcommand("eval", "score a label map against a reference");
    eval->add_option("--config", config_path, "key = value configuration file");
    add_setting(eval, overrides, "--predicted", "predicted", "predicted label CSV");
    add_setting(eval, overrides, "--reference", "reference", "reference label CSV");
    add_setting(eval, overrides, "--crowns", "crowns", "crown id CSV for a crown-level report");
    add_setting(eval, overrides, "--reference-merge", "reference_merge", "merge reference classes, e.g. 1:1,2:2,3:2");
    add_setting(eval, overrides, "--out", "out", "output directory");

    auto* unmix = app.add_subcommand("unmix", "estimate materials, endmembers, abundances and purity");
    add_common(unmix, overrides, config_path);
    add_setting(unmix, overrides, "--m", "m", "fix the material count (0 = HySime)");

    auto* graph = app.add_subcommand("graph-stats", "build the neighbour graph and report its structure");
    add_common(graph, overrides, config_path);
    add_graph(graph, overrides);
    graph->add_flag("--edges", write_edges, "also write the edge list");

    auto* synth = app.add_subcommand("synth", "generate a synthetic mixed-pixel scene");
    dvis::SyntheticSceneSpec spec;
    std::string synth_out = "synthetic";
    synth->add_option("--n", spec.n, "pixel count");
    synth->add_option("--bands", spec.bands, "band count");
    synth->add_option("--materials", spec.materials, "endmember count");
    synth->add_option("--cluster-sizes", spec.cluster_sizes, "pixels per cluster (sums to n)")->delimiter(',');
    synth->add_option("--concentration", spec.concentration, "Dirichlet concentration");
    synth->add_option("--dominance", spec.dominance, "share of the concentration on the dominant material");
    synth->add_option("--snr", spec.snr_db, "noise level in dB");
    synth->add_flag("--noiseless", spec.noiseless, "no noise");
    synth->add_flag("!--no-pure", spec.plant_pure, "do not plant pure pixels");
    synth->add_option("--cols", spec.cols, "grid width (must divide n)");
    synth->add_option("--seed", spec.seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            app.exit(e);
            return dvis::exit_code(dvis::ErrorKind::Validation);
        }

        if (*cluster) {
            const auto config = build_config(config_path, overrides);
            const auto run = dvis::run_cluster(config, quiet ? nullptr : &std::cerr);
            std::cout << "pixels: " << run.scene.pixels.size() << "\nmaterials: " << run.state.unmixing.m
                      << "\nclusters: " << run.state.modes.size() << '\n';
            if (run.pixel_eval) std::cout << "overall accuracy (pixels): " << percent(run.pixel_eval->report.overall_acc) << '\n';
            if (run.voted_eval) {
                std::cout << "overall accuracy (crown-voted pixels): " << percent(run.voted_eval->report.overall_acc)
                          << "\noverall accuracy (crowns): " << percent(run.crown_eval->report.overall_acc) << '\n';
            }
            if (!quiet) print_artifacts(run.artifacts);
        } else if (*eval) {
            const auto config = build_config(config_path, overrides);
            const auto run = dvis::run_eval(config);
            std::cout << dvis::format_report_table(run.pixel.report);
            if (run.crown) std::cout << "\nCrown level:\n" << dvis::format_report_table(run.crown->report);
            if (!quiet) print_artifacts(run.artifacts);
        } else if (*unmix) {
            const auto config = build_config(config_path, overrides);
            const auto run = dvis::run_unmix(config);
            std::cout << "materials: " << run.model.m << "\nsnr_db: " << run.model.snr_db << '\n';
            if (!quiet) print_artifacts(run.artifacts);
        } else if (*graph) {
            const auto config = build_config(config_path, overrides);
            const auto st = dvis::run_graph_stats(config, write_edges);
            std::cout << "nodes: " << st.nodes << "\nedges: " << st.edges << "\ndegree min/mean/max: " << st.min_degree
                      << " / " << st.mean_degree << " / " << st.max_degree << "\nbridges: " << st.bridges
                      << "\neigenpairs: " << st.eigenpairs << "\nlambda2: " << st.lambda2
                      << "\nstationary residual: " << st.stationary_residual << '\n';
            for (const auto& w : st.warnings) std::cerr << "warning: " << w << '\n';
            if (!quiet) print_artifacts(st.artifacts);
        } else if (*synth) {
            const auto scene = dvis::generate_synthetic(spec);
            const auto artifacts = dvis::write_synthetic(scene, spec, synth_out);
            std::cout << "grid: " << scene.cube.rows() << " x " << scene.cube.cols() << " x " << scene.cube.bands() << '\n';
            if (!spec.noiseless) std::cout << "empirical snr_db: " << scene.empirical_snr_db << '\n';
            if (!quiet) print_artifacts(artifacts);
        }
    } catch (const dvis::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return dvis::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return dvis::exit_code(dvis::ErrorKind::Numerical);
    }
    return 0;
}
