#include "dvis/config.hpp"
#include "dvis/error.hpp"
#include "dvis/pipeline.hpp"
#include "dvis/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace dvis;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DVIS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

SyntheticSceneSpec two_blob_spec(std::size_t n, std::uint64_t seed) {
    SyntheticSceneSpec spec;
    spec.n = n;
    spec.bands = 30;
    spec.materials = 2;
    spec.cluster_sizes = {n / 2, n - n / 2};
    spec.seed = seed;
    return spec;
}

void write_labels(const fs::path& path, std::size_t rows, std::size_t cols, const std::vector<int>& v) {
    LabelGrid g(rows, cols);
    g.label = v;
    write_file_atomic(path, format_label_csv(g));
}

} // namespace

TEST_CASE("config text parsing") {
    PipelineConfig c;
    apply_config_text(c,
                      "# comment\n"
                      "cube = data/scene.hdr\n"
                      "k = 3   # trailing comment\n"
                      "n_neighbors=40\n"
                      "sigma0 = 0.01\n"
                      "time = 8\n"
                      "normalize_stage = before_downsample\n"
                      "unmix_input = raw\n"
                      "m = 4\n"
                      "density_neighbors = 0\n",
                      "/base");
    CHECK(c.cube == fs::path("/base/data/scene.hdr"));
    CHECK(c.params.clusters == 3);
    CHECK(c.params.neighbors == 40);
    CHECK(c.params.sigma0 == 0.01);
    CHECK(c.params.time == 8);
    CHECK(c.normalize_stage == NormalizeStage::BeforeDownsample);
    CHECK(c.unmix_raw);
    CHECK(c.fixed_m == std::optional<std::size_t>{4});
    CHECK(!c.density_neighbors);

    // Defaults are the Madingley settings.
    const PipelineConfig d;
    CHECK(d.params.clusters == 2);
    CHECK(d.params.neighbors == 150);
    CHECK(d.params.sigma0 == 3.89e-4);
    CHECK(d.params.time == 32);
    CHECK(d.factor == 4);

    // format_config round trips.
    PipelineConfig again;
    apply_config_text(again, format_config(c));
    CHECK(format_config(again) == format_config(c));
}

TEST_CASE("config errors name the field") {
    PipelineConfig c;
    CHECK(error_of([&] { set_config_value(c, "colour", "red"); }).find("colour") != std::string::npos);
    CHECK(error_of([&] { set_config_value(c, "sigma0", "abc"); }).find("sigma0") != std::string::npos);
    CHECK(error_of([&] { set_config_value(c, "normalize_stage", "never"); }).find("normalize_stage") != std::string::npos);
    CHECK(error_of([&] { apply_config_text(c, "k 3\n"); }) != "");
    c.cube = "x.hdr";
    c.params.clusters = 0;
    CHECK(error_of([&] { validate(c); }).find("k") != std::string::npos);
    c.params.clusters = 2;
    c.params.sigma0 = 0.0;
    CHECK(error_of([&] { validate(c); }).find("sigma0") != std::string::npos);
    c.params.sigma0 = 1.0;
    c.factor = 0;
    CHECK(error_of([&] { validate(c); }).find("factor") != std::string::npos);
}

TEST_CASE("synthetic generator") {
    SyntheticSceneSpec spec = two_blob_spec(800, 3);
    spec.noiseless = true;
    const SyntheticScene clean = generate_synthetic(spec);
    const RowMatrix y = Eigen::Map<const RowMatrix>(clean.cube.data().data(), 800, 30);
    CHECK((y - clean.abundances * clean.endmembers).cwiseAbs().maxCoeff() <= 1e-10);
    for (std::size_t j = 0; j < 2; ++j) {
        const Index p = clean.planted[j];
        REQUIRE(p >= 0);
        CHECK(clean.abundances.row(p).maxCoeff() == 1.0);
    }
    CHECK((clean.abundances.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(clean.truth.rows * clean.truth.cols == 800);

    spec.noiseless = false;
    spec.snr_db = 30.0;
    const SyntheticScene a = generate_synthetic(spec);
    const SyntheticScene b = generate_synthetic(spec);
    CHECK(a.cube.data() == b.cube.data());
    CHECK(a.truth == b.truth);
    CHECK(std::abs(a.empirical_snr_db - 30.0) <= 0.5);
    spec.seed = 4;
    CHECK(generate_synthetic(spec).cube.data() != a.cube.data());

    SyntheticSceneSpec bad = spec;
    bad.cluster_sizes = {10, 10};
    CHECK(error_of([&] { validate(bad); }).find("cluster_sizes") != std::string::npos);
    bad = spec;
    bad.snr_db = -1.0;
    CHECK(error_of([&] { validate(bad); }).find("snr") != std::string::npos);
}

TEST_CASE("run_cluster on a synthetic scene, with and without the cache") {
    const fs::path dir = oracle::scratch_dir("cluster");
    const SyntheticSceneSpec spec = two_blob_spec(1200, 5);
    write_synthetic(generate_synthetic(spec), spec, dir / "scene");

    PipelineConfig c = load_config(dir / "scene" / "scene.cfg");
    c.out = dir / "run1";
    c.cache_dir = dir / "cache";
    const ClusterRun first = run_cluster(c);
    for (const char* name : {"labels.csv", "labels.pgm", "diagnostics.csv", "manifest.json", "timing.log",
                             "endmembers.csv", "eval_pixels.txt"}) {
        CHECK(fs::exists(c.out / name));
    }
    const auto manifest = nlohmann::json::parse(read_file(c.out / "manifest.json"));
    CHECK(manifest["result"]["eval_pixels"]["overall_acc"].get<double>() >= 0.99);
    CHECK(manifest["params"]["k"] == "2");
    CHECK(manifest["inputs"].contains("cube"));

    c.out = dir / "run2";
    const ClusterRun cached = run_cluster(c);
    c.out = dir / "run3";
    c.use_cache = false;
    const ClusterRun fresh = run_cluster(c);
    const std::string labels = read_file(dir / "run1" / "labels.csv");
    CHECK(read_file(dir / "run2" / "labels.csv") == labels);
    CHECK(read_file(dir / "run3" / "labels.csv") == labels);
    CHECK(read_file(dir / "run2" / "diagnostics.csv") == read_file(dir / "run1" / "diagnostics.csv"));
    CHECK(fs::exists(dir / "cache"));

    // Diagnostics header and one line per pixel.
    std::ifstream diag(dir / "run1" / "diagnostics.csv");
    std::string header;
    std::getline(diag, header);
    CHECK(header == "row,col,density,purity,zeta,dt,parent_row,parent_col,label,mode");
    std::size_t lines = 0;
    for (std::string line; std::getline(diag, line);) ++lines;
    CHECK(lines == 1200);
}

TEST_CASE("run_eval: published counts as label files") {
    const fs::path dir = oracle::scratch_dir("eval");
    // 205 x 355 = 72775 pixels laid out as the four published count blocks.
    std::vector<int> pred, ref;
    const long long counts[2][2] = {{27460, 12895}, {8238, 24182}};
    for (int r = 0; r < 2; ++r) {
        for (int p = 0; p < 2; ++p) {
            pred.insert(pred.end(), static_cast<std::size_t>(counts[r][p]), p + 1);
            ref.insert(ref.end(), static_cast<std::size_t>(counts[r][p]), r + 1);
        }
    }
    REQUIRE(pred.size() == 205u * 355u);
    write_labels(dir / "pred.csv", 205, 355, pred);
    write_labels(dir / "ref.csv", 205, 355, ref);

    PipelineConfig c;
    c.predicted = dir / "pred.csv";
    c.reference = dir / "ref.csv";
    c.out = dir / "out";
    const EvalRun run = run_eval(c);
    CHECK(std::abs(100.0 * run.pixel.report.overall_acc - 71.0) <= 0.05);
    CHECK(std::abs(100.0 * run.pixel.report.average_acc - 71.3) <= 0.05);
    CHECK(fs::exists(c.out / "eval_report.txt"));
    CHECK(read_file(c.out / "eval_report.txt").find("71.0") != std::string::npos);

    c.predicted = dir / "ref.csv";
    CHECK(run_eval(c).pixel.report.overall_acc == 1.0);

    std::vector<int> flipped(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) flipped[i] = 3 - ref[i];
    write_labels(dir / "flip.csv", 205, 355, flipped);
    c.predicted = dir / "flip.csv";
    const EvalRun anti = run_eval(c);
    CHECK(anti.pixel.report.overall_acc == 1.0);
    CHECK(anti.pixel.report.permutation == std::vector<int>{2, 1});

    write_labels(dir / "small.csv", 10, 10, std::vector<int>(100, 1));
    c.predicted = dir / "small.csv";
    CHECK_THROWS_AS(run_eval(c), Error);
}

TEST_CASE("command-line tool") {
    const fs::path dir = oracle::scratch_dir("cli");
    const std::string synth = "synth --n 400 --bands 20 --materials 2 --snr 30 --seed 2 --out " + (dir / "s").string();
    REQUIRE(run_cli(synth) == 0);
    CHECK(fs::exists(dir / "s" / "scene.hdr"));
    CHECK(fs::exists(dir / "s" / "planted.csv"));
    const std::string cfg = (dir / "s" / "scene.cfg").string();
    CHECK(run_cli("cluster --config " + cfg + " --k 0 --out " + (dir / "bad").string()) == 2);
    CHECK(run_cli("cluster --config " + cfg + " --set colour=red") == 2);
    CHECK(run_cli("cluster --bogus-flag") == 2);
    CHECK(run_cli("cluster --config " + (dir / "missing.cfg").string()) != 0);
    CHECK(run_cli("-q cluster --config " + cfg + " --n-neighbors 20 --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "labels.csv"));
    CHECK(run_cli("graph-stats --config " + cfg + " --n-neighbors 20 --out " + (dir / "gs").string()) == 0);
    CHECK(fs::exists(dir / "gs" / "graph_stats.json"));
    CHECK(run_cli("unmix --config " + cfg + " --out " + (dir / "um").string()) == 0);
    CHECK(fs::exists(dir / "um" / "abundances.csv"));
    CHECK(run_cli("eval --predicted " + (dir / "ok" / "labels.csv").string() + " --reference " +
                  (dir / "s" / "truth.csv").string() + " --out " + (dir / "ev").string()) == 0);
    CHECK(fs::exists(dir / "ev" / "eval_report.csv"));
}
