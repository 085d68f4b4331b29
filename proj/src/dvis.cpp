#include "dvis/dvis.hpp"

#include "dvis/error.hpp"
#include "dvis/hash.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace dvis {

void validate(const ClusterParams& params, std::size_t pixel_count) {
    if (params.clusters == 0) throw_validation("k (cluster count) must be at least 1");
    if (params.clusters > pixel_count) {
        throw_validation("k (cluster count) " + std::to_string(params.clusters) + " exceeds the pixel count " +
                         std::to_string(pixel_count));
    }
    if (params.neighbors == 0) throw_validation("n_neighbors must be at least 1");
    if (params.neighbors >= pixel_count) {
        throw_validation("n_neighbors " + std::to_string(params.neighbors) + " must be below the pixel count " +
                         std::to_string(pixel_count));
    }
    if (!(params.sigma0 > 0.0) || !std::isfinite(params.sigma0)) throw_validation("sigma0 must be positive and finite");
}

Vector density(const Neighbors& neighbors, std::size_t count, double sigma0) {
    if (!(sigma0 > 0.0)) throw_validation("sigma0 must be positive");
    if (count == 0 || count > neighbors.k) throw_validation("density neighbour count out of range");
    const std::size_t n = neighbors.size();
    const double inv = 1.0 / (sigma0 * sigma0);
    Vector p(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double d2 : neighbors.sq_distances_of(i).first(count)) s += std::exp(-d2 * inv);
        p[static_cast<Eigen::Index>(i)] = s;
    }
    return p;
}

Vector density(const Neighbors& neighbors, double sigma0) { return density(neighbors, neighbors.k, sigma0); }

Vector density(const PixelSet& pixels, std::size_t n_neighbors, double sigma0) {
    return density(knn_search(pixels.spectra, n_neighbors), sigma0);
}

Vector zeta(const Vector& p, const Vector& eta) {
    if (p.size() != eta.size()) throw_validation("density and purity lengths differ");
    if (p.size() == 0) throw_validation("empty density vector");
    const double pmax = p.maxCoeff();
    const double emax = eta.maxCoeff();
    if (!(pmax > 0.0)) throw_numerical("density is zero everywhere (sigma0 too small for this data?)");
    if (!(emax > 0.0)) throw_numerical("purity is zero everywhere");
    Vector z(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double a = p[i] / pmax;
        const double b = eta[i] / emax;
        z[i] = (a + b) > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
    }
    return z;
}

std::vector<Index> zeta_order(const Vector& z) {
    std::vector<Index> order(static_cast<std::size_t>(z.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return z[a] > z[b]; });
    return order;
}

DtResult dt_values(const RowMatrix& coords, std::span<const Index> order) {
    const auto n = static_cast<Eigen::Index>(order.size());
    const Eigen::Index dims = coords.cols();
    DtResult out;
    out.dt = Vector::Zero(n);
    out.parent.assign(static_cast<std::size_t>(n), -1);
    if (n == 0) return out;

    // Rows laid out in visit order so each scan over predecessors is contiguous.
    RowMatrix ordered(n, dims);
    for (Eigen::Index r = 0; r < n; ++r) ordered.row(r) = coords.row(order[static_cast<std::size_t>(r)]);

    {
        const Index top = order[0];
        double best = 0.0;
        for (Eigen::Index q = 1; q < n; ++q) best = std::max(best, squared_distance(ordered, 0, q));
        out.dt[top] = std::sqrt(best);
    }

    const double widen = 1.0 + 2.0 * distance_tie_tolerance;
#pragma omp parallel for schedule(dynamic, 64)
    for (Eigen::Index r = 1; r < n; ++r) {
        const double* a = ordered.row(r).data();
        double best = std::numeric_limits<double>::infinity();
        // Candidates that were within the tie band of the running minimum when
        // seen; the final tie set is a subset of these.
        std::vector<std::pair<double, Index>> near;
        for (Eigen::Index q = 0; q < r; ++q) {
            const double* b = ordered.row(q).data();
            // Partial sums only grow, so stopping once past the band is exact.
            const double limit = best * widen;
            double s = 0.0;
            Eigen::Index k = 0;
            for (; k < dims; ++k) {
                const double diff = a[k] - b[k];
                s += diff * diff;
                if (s > limit) break;
            }
            if (k < dims) continue;
            near.emplace_back(s, order[static_cast<std::size_t>(q)]);
            best = std::min(best, s);
        }
        Index parent = -1;
        for (const auto& [s, candidate] : near) {
            if (s <= best * widen && (parent < 0 || candidate < parent)) parent = candidate;
        }
        const Index x = order[static_cast<std::size_t>(r)];
        out.dt[x] = std::sqrt(best);
        out.parent[static_cast<std::size_t>(x)] = parent;
    }
    return out;
}

DtResult dt_values(const PixelGraph& graph, const Vector& z, unsigned t) {
    if (static_cast<std::size_t>(z.size()) != graph.size()) throw_validation("zeta length does not match the graph");
    const auto order = zeta_order(z);
    return dt_values(diffusion_coordinates(graph, t), order);
}

std::vector<Index> select_modes(const Vector& z, const Vector& dt, std::size_t k) {
    const auto n = static_cast<std::size_t>(z.size());
    if (k == 0) throw_validation("cluster count must be at least 1");
    if (k > n) throw_validation("cluster count " + std::to_string(k) + " exceeds the pixel count " + std::to_string(n));
    if (dt.size() != z.size()) throw_validation("zeta and d_t lengths differ");
    std::vector<Index> idx(n);
    std::iota(idx.begin(), idx.end(), Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return z[a] * dt[a] > z[b] * dt[b]; });
    idx.resize(k);
    return idx;
}

Propagation propagate_labels(const RowMatrix& coords, std::span<const Index> order, std::span<const Index> parent,
                             std::span<const Index> modes) {
    const std::size_t n = order.size();
    Propagation out;
    out.labels.assign(n, 0);
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const Index m = modes[k];
        if (m < 0 || static_cast<std::size_t>(m) >= n) throw_validation("mode index out of range");
        if (out.labels[static_cast<std::size_t>(m)] != 0) throw_validation("duplicate mode index");
        out.labels[static_cast<std::size_t>(m)] = static_cast<int>(k + 1);
    }
    if (modes.empty()) throw_validation("at least one mode is required");

    for (const Index x : order) {
        auto& label = out.labels[static_cast<std::size_t>(x)];
        if (label != 0) continue;
        const Index p = parent[static_cast<std::size_t>(x)];
        if (p >= 0) {
            // Every point ahead of x in the visit order is labelled by now.
            label = out.labels[static_cast<std::size_t>(p)];
            continue;
        }
        std::vector<double> d(n, std::numeric_limits<double>::infinity());
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < n; ++y) {
            if (out.labels[y] == 0) continue;
            d[y] = squared_distance(coords, x, static_cast<Index>(y));
            best = std::min(best, d[y]);
        }
        Index pick = -1;
        for (std::size_t y = 0; pick < 0; ++y) {
            if (d[y] <= best * (1.0 + 2.0 * distance_tie_tolerance)) pick = static_cast<Index>(y);
        }
        label = out.labels[static_cast<std::size_t>(pick)];
        out.warnings.push_back("point " + std::to_string(x) +
                               " has no labelled point of higher zeta; took the label of its nearest labelled point " +
                               std::to_string(pick));
    }
    return out;
}

Propagation propagate_labels(const PixelGraph& graph, const Vector& z, std::span<const Index> modes, unsigned t) {
    if (static_cast<std::size_t>(z.size()) != graph.size()) throw_validation("zeta length does not match the graph");
    const auto order = zeta_order(z);
    const RowMatrix coords = diffusion_coordinates(graph, t);
    const DtResult dt = dt_values(coords, order);
    return propagate_labels(coords, order, dt.parent, modes);
}

namespace {

void hash_pixels(ContentHash& h, const RowMatrix& x) {
    h.value(static_cast<std::int64_t>(x.rows()));
    h.value(static_cast<std::int64_t>(x.cols()));
    h.bytes(x.data(), static_cast<std::size_t>(x.size()) * sizeof(double));
}

} // namespace

ClusterState cluster(const PixelSet& pixels, const ClusterParams& params, const ClusterOptions& options,
                     StageCache* cache) {
    validate(params, pixels.size());
    const RowMatrix& x = pixels.spectra;
    const RowMatrix& ux = options.unmixing_input ? *options.unmixing_input : x;
    if (ux.rows() != x.rows()) throw_validation("unmixing input must have one row per pixel");
    ClusterState state;
    auto clock = std::chrono::steady_clock::now();
    auto lap = [&](const char* stage) {
        const auto now = std::chrono::steady_clock::now();
        state.timings.emplace_back(stage, std::chrono::duration<double>(now - clock).count());
        clock = now;
    };

    try {
        UnmixOptions uo;
        uo.seed = params.seed;
        uo.snr_source = options.snr_source;
        uo.fixed_m = options.fixed_m;
        ContentHash h;
        h.text("unmixing/v1");
        hash_pixels(h, ux);
        h.value(params.seed);
        h.value(static_cast<int>(options.snr_source));
        h.value(static_cast<std::int64_t>(options.fixed_m.value_or(0)));
        std::optional<UnmixingModel> cached = cache ? cache->load_unmixing(h.digest(), ux) : std::nullopt;
        if (cached) {
            state.unmixing = std::move(*cached);
        } else {
            state.unmixing = unmix(ux, uo);
            if (cache) cache->store_unmixing(h.digest(), state.unmixing);
        }
        state.purity = state.unmixing.purity;
        if (!state.unmixing.zero_abundance_rows.empty()) {
            state.warnings.push_back(std::to_string(state.unmixing.zero_abundance_rows.size()) +
                                     " pixels have all-zero abundances (purity set to 0)");
        }
    } catch (...) {
        rethrow_with_stage("unmixing");
    }
    lap("unmixing");

    Neighbors nn;
    try {
        nn = knn_search(x, params.neighbors);
    } catch (...) {
        rethrow_with_stage("neighbour search");
    }
    lap("neighbour search");

    try {
        const std::size_t dn = options.density_neighbors.value_or(params.neighbors);
        if (dn == 0 || dn >= pixels.size()) {
            throw_validation("density_neighbors " + std::to_string(dn) + " must be in 1.." +
                             std::to_string(pixels.size() - 1));
        }
        state.density = dn <= nn.k ? density(nn, dn, params.sigma0) : density(knn_search(x, dn), params.sigma0);
        state.zeta = zeta(state.density, state.purity);
    } catch (...) {
        rethrow_with_stage("density");
    }
    lap("density");

    try {
        GraphOptions go = options.graph;
        if (!go.diffusion_time) go.diffusion_time = params.time;
        ContentHash h;
        h.text("spectrum/v1");
        hash_pixels(h, x);
        h.value(static_cast<std::int64_t>(params.neighbors));
        h.value(*go.diffusion_time);
        h.value(go.truncation_tol);
        h.value(static_cast<std::int64_t>(go.max_eigenpairs));
        h.value(static_cast<std::int64_t>(go.dense_limit));
        h.value(go.lanczos_tol);
        std::optional<Spectrum> sp = cache ? cache->load_spectrum(h.digest()) : std::nullopt;
        auto graph = std::make_shared<PixelGraph>(graph_from_neighbors(x, nn, go, sp ? &*sp : nullptr));
        if (cache && !sp) cache->store_spectrum(h.digest(), graph->spectrum);
        state.warnings.insert(state.warnings.end(), graph->warnings.begin(), graph->warnings.end());
        state.graph = std::move(graph);
    } catch (...) {
        rethrow_with_stage("graph");
    }
    lap("graph");

    RowMatrix coords;
    try {
        coords = diffusion_coordinates(*state.graph, params.time);
        state.order = zeta_order(state.zeta);
        DtResult dt = dt_values(coords, state.order);
        state.dt = std::move(dt.dt);
        state.dt_parent = std::move(dt.parent);
    } catch (...) {
        rethrow_with_stage("d_t");
    }
    lap("d_t");

    try {
        state.modes = select_modes(state.zeta, state.dt, params.clusters);
    } catch (...) {
        rethrow_with_stage("mode selection");
    }
    lap("mode selection");

    try {
        Propagation prop = propagate_labels(coords, state.order, state.dt_parent, state.modes);
        state.labels = std::move(prop.labels);
        state.warnings.insert(state.warnings.end(), prop.warnings.begin(), prop.warnings.end());
    } catch (...) {
        rethrow_with_stage("label propagation");
    }
    lap("label propagation");
    return state;
}

} // namespace dvis
