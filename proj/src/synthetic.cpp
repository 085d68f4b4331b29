#include "dvis/synthetic.hpp"

#include "dvis/error.hpp"
#include "dvis/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace dvis {

namespace {

std::vector<std::size_t> cluster_sizes_of(const SyntheticSceneSpec& spec) {
    if (!spec.cluster_sizes.empty()) return spec.cluster_sizes;
    std::vector<std::size_t> sizes(spec.materials, spec.n / spec.materials);
    for (std::size_t i = 0; i < spec.n % spec.materials; ++i) ++sizes[i];
    return sizes;
}

std::size_t grid_cols(const SyntheticSceneSpec& spec) {
    if (spec.cols != 0) return spec.cols;
    std::size_t best = 1;
    for (std::size_t c = 1; c * c <= spec.n; ++c) {
        if (spec.n % c == 0) best = c;
    }
    return spec.n / best;
}

} // namespace

void validate(const SyntheticSceneSpec& spec) {
    if (spec.n == 0) throw_validation("n must be positive");
    if (spec.bands == 0) throw_validation("bands must be positive");
    if (spec.materials == 0) throw_validation("materials must be positive");
    if (spec.materials > spec.bands) throw_validation("materials must not exceed bands");
    if (!(spec.concentration > 0.0)) throw_validation("concentration must be positive");
    if (!(spec.dominance > 0.0 && spec.dominance <= 1.0)) throw_validation("dominance must lie in (0, 1]");
    if (!spec.noiseless && !(spec.snr_db > 0.0 && std::isfinite(spec.snr_db))) {
        throw_validation("snr_db must be positive (or request a noiseless scene)");
    }
    if (!spec.cluster_sizes.empty()) {
        const std::size_t total = std::accumulate(spec.cluster_sizes.begin(), spec.cluster_sizes.end(), std::size_t{0});
        if (total != spec.n) {
            throw_validation("cluster_sizes sum to " + std::to_string(total) + " but n is " + std::to_string(spec.n));
        }
        for (std::size_t s : spec.cluster_sizes) {
            if (s == 0) throw_validation("cluster_sizes entries must be positive");
        }
    } else if (spec.materials > spec.n) {
        throw_validation("materials must not exceed n");
    }
    if (spec.plant_pure && spec.materials > spec.n) throw_validation("cannot plant more pure pixels than n");
    if (spec.cols != 0 && spec.n % spec.cols != 0) {
        throw_validation("cols " + std::to_string(spec.cols) + " does not divide n " + std::to_string(spec.n));
    }
}

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);
    const auto n = static_cast<Eigen::Index>(spec.n);
    const auto d = static_cast<Eigen::Index>(spec.bands);
    const auto m = static_cast<Eigen::Index>(spec.materials);

    SyntheticScene scene;
    scene.endmembers.resize(m, d);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index b = 0; b < d; ++b) scene.endmembers(j, b) = rng.uniform();
        scene.endmembers.row(j).normalize();
    }

    // Cluster membership, shuffled over the pixel grid.
    const auto sizes = cluster_sizes_of(spec);
    std::vector<int> cluster(spec.n);
    {
        std::size_t pos = 0;
        for (std::size_t c = 0; c < sizes.size(); ++c) {
            for (std::size_t i = 0; i < sizes[c]; ++i) cluster[pos++] = static_cast<int>(c);
        }
        for (std::size_t i = spec.n; i > 1; --i) std::swap(cluster[i - 1], cluster[rng.below(i)]);
    }

    scene.abundances.resize(n, m);
    std::vector<double> alpha(spec.materials);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto dominant = static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)]) % spec.materials;
        for (std::size_t j = 0; j < spec.materials; ++j) {
            if (spec.materials == 1) {
                alpha[j] = spec.concentration;
            } else if (j == dominant) {
                alpha[j] = spec.concentration * spec.dominance;
            } else {
                alpha[j] = spec.concentration * (1.0 - spec.dominance) / static_cast<double>(spec.materials - 1);
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < spec.materials; ++j) {
            const double g = alpha[j] > 0.0 ? rng.gamma(alpha[j]) : 0.0;
            scene.abundances(i, static_cast<Eigen::Index>(j)) = g;
            sum += g;
        }
        if (sum > 0.0) {
            scene.abundances.row(i) /= sum;
        } else {
            scene.abundances.row(i).setZero();
            scene.abundances(i, static_cast<Eigen::Index>(dominant)) = 1.0;
        }
    }

    scene.planted.assign(spec.materials, -1);
    if (spec.plant_pure) {
        // Distinct positions by partial Fisher-Yates.
        std::vector<Index> perm(spec.n);
        std::iota(perm.begin(), perm.end(), Index{0});
        for (std::size_t j = 0; j < spec.materials; ++j) {
            const std::size_t pick = j + rng.below(spec.n - j);
            std::swap(perm[j], perm[pick]);
            const Index p = perm[j];
            scene.planted[j] = p;
            scene.abundances.row(p).setZero();
            scene.abundances(p, static_cast<Eigen::Index>(j)) = 1.0;
        }
    }

    scene.clean = scene.abundances * scene.endmembers;
    RowMatrix pixels = scene.clean;
    if (spec.noiseless) {
        scene.empirical_snr_db = std::numeric_limits<double>::infinity();
    } else {
        const double signal_power = scene.clean.squaredNorm() / static_cast<double>(n * d);
        const double sigma = std::sqrt(signal_power / std::pow(10.0, spec.snr_db / 10.0));
        double noise_energy = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index b = 0; b < d; ++b) {
                const double e = sigma * rng.normal();
                pixels(i, b) += e;
                noise_energy += e * e;
            }
        }
        scene.empirical_snr_db = 10.0 * std::log10(scene.clean.squaredNorm() / noise_energy);
    }

    const std::size_t cols = grid_cols(spec);
    const std::size_t rows = spec.n / cols;
    scene.cube = HsiCube(rows, cols, spec.bands,
                         std::vector<double>(pixels.data(), pixels.data() + pixels.size()));
    std::vector<double> wl(spec.bands);
    for (std::size_t b = 0; b < spec.bands; ++b) wl[b] = 400.0 + 600.0 * static_cast<double>(b) / static_cast<double>(spec.bands);
    scene.cube.set_wavelengths_nm(std::move(wl));

    scene.truth = LabelGrid(rows, cols);
    for (std::size_t i = 0; i < spec.n; ++i) scene.truth.label[i] = cluster[i] + 1;
    return scene;
}

} // namespace dvis
