#include "dvis/graph.hpp"

#include "dvis/error.hpp"
#include "lanczos.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

namespace dvis {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseMatrix adjacency_from_pairs(std::size_t n, std::vector<std::pair<Index, Index>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::vector<Triplet> triplets;
    triplets.reserve(pairs.size());
    for (const auto& [a, b] : pairs) triplets.emplace_back(a, b, 1.0);
    SparseMatrix w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    w.setFromTriplets(triplets.begin(), triplets.end());
    w.makeCompressed();
    return w;
}

Vector row_sums(const SparseMatrix& w) {
    Vector d = Vector::Zero(w.rows());
    for (Eigen::Index i = 0; i < w.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(w, i); it; ++it) d[i] += it.value();
    }
    return d;
}

// Shortest-edge spanning tree over the components (Prim with zero-cost
// intra-component moves). Returns the added edges.
std::vector<Edge> bridge_components(const RowMatrix& x, const std::vector<Index>& component, std::size_t count) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<std::vector<Index>> members(count);
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(component[i])].push_back(static_cast<Index>(i));

    std::vector<char> in_tree(n, 0);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<Index> source(n, -1);

    auto absorb = [&](Index comp) {
        for (Index a : members[static_cast<std::size_t>(comp)]) in_tree[static_cast<std::size_t>(a)] = 1;
        for (Index a : members[static_cast<std::size_t>(comp)]) {
            for (std::size_t j = 0; j < n; ++j) {
                if (in_tree[j]) continue;
                const double d = squared_distance(x, a, static_cast<Index>(j));
                if (d < best[j] || (d == best[j] && a < source[j])) {
                    best[j] = d;
                    source[j] = a;
                }
            }
        }
    };

    std::vector<Edge> added;
    absorb(component[0]);
    for (std::size_t step = 1; step < count; ++step) {
        std::size_t pick = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (!in_tree[j] && (pick == n || best[j] < best[pick])) pick = j;
        }
        added.push_back({std::min(source[pick], static_cast<Index>(pick)), std::max(source[pick], static_cast<Index>(pick)),
                         std::sqrt(best[pick])});
        absorb(component[pick]);
    }
    return added;
}

// Leading run with |lambda_k|^t >= tol * |lambda_2|^t; the full list when no time is set.
std::size_t visible_count(std::span<const double> values, const GraphOptions& options) {
    if (!options.diffusion_time || values.size() < 2) return values.size();
    const double t = static_cast<double>(*options.diffusion_time);
    const double cutoff = options.truncation_tol * std::pow(std::abs(values[1]), t);
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (std::pow(std::abs(values[k]), t) < cutoff) return k;
    }
    return values.size();
}

std::size_t truncated_count(std::span<const double> values, const GraphOptions& options) {
    std::size_t keep = visible_count(values, options);
    if (options.diffusion_time) keep = std::min(keep, options.max_eigenpairs);
    return std::max<std::size_t>(keep, 1);
}

// Maps unit eigenvectors of S = D^-1/2 W D^-1/2 to pi-orthonormal right
// eigenvectors of P and fixes their signs.
Spectrum finish_spectrum(const Vector& values, const Eigen::MatrixXd& s_vectors, const Vector& degrees) {
    const double volume = degrees.sum();
    Spectrum sp;
    sp.eigenvalues = values;
    sp.eigenvectors.resize(s_vectors.rows(), s_vectors.cols());
    const Vector scale = (volume / degrees.array()).sqrt();
    for (Eigen::Index k = 0; k < s_vectors.cols(); ++k) {
        Eigen::VectorXd psi = s_vectors.col(k).cwiseProduct(scale);
        Eigen::Index arg = 0;
        psi.cwiseAbs().maxCoeff(&arg);
        if (k == 0) {
            // Exactly the constant 1 (unit pi-norm); rounding here would put a
            // floor under every diffusion distance.
            psi.setOnes();
        } else if (psi[arg] < 0.0) {
            psi = -psi;
        }
        sp.eigenvectors.col(k) = psi;
    }
    return sp;
}

PixelGraph finish_graph(SparseMatrix adjacency, const GraphOptions& options, const Spectrum* cached,
                        std::vector<Edge> bridges, std::vector<std::string> warnings) {
    PixelGraph g;
    g.adjacency = std::move(adjacency);
    g.degrees = row_sums(g.adjacency);
    g.bridges = std::move(bridges);
    g.warnings = std::move(warnings);
    g.stationary = stationary_distribution(g);
    if (cached && cached->eigenvectors.rows() == static_cast<Eigen::Index>(g.size())) {
        g.spectrum = *cached;
    } else {
        g.spectrum = compute_spectrum(g.adjacency, g.degrees, options, g.warnings);
    }
    return g;
}

} // namespace

std::vector<Index> connected_components(const SparseMatrix& adjacency, std::size_t& count) {
    const auto n = static_cast<std::size_t>(adjacency.rows());
    std::vector<Index> comp(n, -1);
    count = 0;
    std::vector<Index> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        const auto id = static_cast<Index>(count++);
        comp[s] = id;
        stack.push_back(static_cast<Index>(s));
        while (!stack.empty()) {
            const Index u = stack.back();
            stack.pop_back();
            for (SparseMatrix::InnerIterator it(adjacency, u); it; ++it) {
                const auto v = static_cast<std::size_t>(it.col());
                if (comp[v] < 0) {
                    comp[v] = id;
                    stack.push_back(static_cast<Index>(v));
                }
            }
        }
    }
    return comp;
}

PixelGraph graph_from_neighbors(const RowMatrix& spectra, const Neighbors& neighbors, const GraphOptions& options,
                                const Spectrum* cached) {
    const std::size_t n = neighbors.size();
    if (n != static_cast<std::size_t>(spectra.rows())) throw_validation("neighbour table does not match pixel count");

    std::vector<std::pair<Index, Index>> pairs;
    pairs.reserve(2 * n * neighbors.k);
    for (std::size_t i = 0; i < n; ++i) {
        for (Index j : neighbors.indices_of(i)) {
            pairs.emplace_back(static_cast<Index>(i), j);
            pairs.emplace_back(j, static_cast<Index>(i));
        }
    }
    SparseMatrix w = adjacency_from_pairs(n, pairs);

    std::vector<std::string> warnings;
    std::vector<Edge> bridges;
    std::size_t count = 0;
    const auto comp = connected_components(w, count);
    if (count > 1) {
        bridges = bridge_components(spectra, comp, count);
        for (const auto& e : bridges) {
            pairs.emplace_back(e.a, e.b);
            pairs.emplace_back(e.b, e.a);
        }
        w = adjacency_from_pairs(n, std::move(pairs));
        warnings.push_back("KNN graph had " + std::to_string(count) + " components; added " +
                           std::to_string(bridges.size()) + " bridging edges");
    }
    return finish_graph(std::move(w), options, cached, std::move(bridges), std::move(warnings));
}

PixelGraph knn_graph(const PixelSet& pixels, std::size_t n_neighbors, const GraphOptions& options) {
    const Neighbors nn = knn_search(pixels.spectra, n_neighbors);
    return graph_from_neighbors(pixels.spectra, nn, options);
}

PixelGraph graph_from_adjacency(SparseMatrix adjacency, const GraphOptions& options) {
    if (adjacency.rows() != adjacency.cols()) throw_validation("adjacency must be square");
    if (adjacency.rows() < 2) throw_validation("graph needs at least two nodes");
    for (Eigen::Index i = 0; i < adjacency.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
            if (it.col() == i) throw_validation("adjacency must have a zero diagonal");
            if (it.value() != 1.0) throw_validation("adjacency must be binary");
        }
    }
    const SparseMatrix transposed = SparseMatrix(adjacency.transpose());
    if ((adjacency - transposed).norm() != 0.0) throw_validation("adjacency must be symmetric");
    adjacency.makeCompressed();
    return finish_graph(std::move(adjacency), options, nullptr, {}, {});
}

Vector stationary_distribution(const PixelGraph& graph) {
    std::size_t count = 0;
    connected_components(graph.adjacency, count);
    if (count != 1) throw_numerical("stationary distribution requires a connected graph (" + std::to_string(count) +
                                    " components)");
    const Vector& d = graph.degrees.size() ? graph.degrees : row_sums(graph.adjacency);
    const Vector pi = d / d.sum();

    // pi P = pi, with (pi P)_j = sum_i pi_i W_ij / d_i.
    Vector pi_p = Vector::Zero(pi.size());
    for (Eigen::Index i = 0; i < graph.adjacency.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(graph.adjacency, i); it; ++it) pi_p[it.col()] += pi[i] * it.value() / d[i];
    }
    const double err = (pi_p - pi).cwiseAbs().maxCoeff();
    if (err > 1e-10) throw_numerical("stationary distribution check failed: |pi P - pi| = " + std::to_string(err));
    return pi;
}

SparseMatrix transition_matrix(const PixelGraph& graph) {
    SparseMatrix p = graph.adjacency;
    for (Eigen::Index i = 0; i < p.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(p, i); it; ++it) it.valueRef() /= graph.degrees[i];
    }
    return p;
}

Spectrum compute_spectrum(const SparseMatrix& adjacency, const Vector& degrees, const GraphOptions& options,
                          std::vector<std::string>& warnings) {
    const auto n = static_cast<std::size_t>(adjacency.rows());
    const Vector inv_sqrt = degrees.cwiseSqrt().cwiseInverse();

    SparseMatrix s = adjacency;
    for (Eigen::Index i = 0; i < s.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(s, i); it; ++it) it.valueRef() *= inv_sqrt[i] * inv_sqrt[it.col()];
    }

    Vector values;
    Eigen::MatrixXd vectors;
    double min_value = 0.0;

    if (n <= options.dense_limit) {
        const Eigen::MatrixXd dense(s);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
        if (solver.info() != Eigen::Success) throw_numerical("dense eigensolver failed");
        const Vector& ev = solver.eigenvalues();
        min_value = ev.minCoeff();
        std::vector<Eigen::Index> order(n);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            if (std::abs(ev[a]) != std::abs(ev[b])) return std::abs(ev[a]) > std::abs(ev[b]);
            return ev[a] > ev[b];
        });
        // lambda = 1 leads even when a -1 (bipartite) rounds to a larger magnitude.
        const auto top = std::max_element(order.begin(), order.end(),
                                          [&](Eigen::Index a, Eigen::Index b) { return ev[a] < ev[b]; });
        std::rotate(order.begin(), top, top + 1);
        std::vector<double> sorted(n);
        for (std::size_t k = 0; k < n; ++k) sorted[k] = ev[order[k]];
        const std::size_t keep = truncated_count(sorted, options);
        values.resize(static_cast<Eigen::Index>(keep));
        vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep));
        for (std::size_t k = 0; k < keep; ++k) {
            values[static_cast<Eigen::Index>(k)] = sorted[k];
            vectors.col(static_cast<Eigen::Index>(k)) = solver.eigenvectors().col(order[k]);
        }
    } else {
        const std::size_t cap = std::max<std::size_t>(options.max_eigenpairs, 1);
        detail::KeepRule rule = [&](std::span<const double> prefix) -> std::optional<std::size_t> {
            if (options.diffusion_time && prefix.size() > 1) {
                const std::size_t k = visible_count(prefix, options);
                if (k < prefix.size()) return std::min(k, cap);
            }
            if (prefix.size() >= cap) return cap;
            return std::nullopt;
        };
        const std::size_t max_dim = std::min(n, 4 * cap + 100);
        auto result = detail::lanczos_largest_magnitude(s, rule, max_dim, options.lanczos_tol, 0x6c616e637a6f73ULL);
        if (!result.converged) {
            warnings.push_back("sparse eigensolver kept only " + std::to_string(result.values.size()) +
                               " converged eigenpairs");
        }
        values = std::move(result.values);
        vectors = std::move(result.vectors);
        min_value = result.min_ritz;
        Eigen::Index top = 0;
        values.maxCoeff(&top);
        for (Eigen::Index k = top; k > 0; --k) {
            std::swap(values[k], values[k - 1]);
            vectors.col(k).swap(vectors.col(k - 1));
        }
    }

    if (std::abs(values[0] - 1.0) > 1e-8) {
        throw_numerical("leading eigenvalue of the transition matrix is " + std::to_string(values[0]) + ", expected 1");
    }
    if (std::abs(min_value + 1.0) < 1e-10) {
        warnings.push_back("transition matrix has eigenvalue -1 (bipartite graph); diffusion does not mix");
    }
    return finish_spectrum(values, vectors, degrees);
}

RowMatrix diffusion_coordinates(const PixelGraph& graph, unsigned t) {
    const Spectrum& sp = graph.spectrum;
    RowMatrix coords(sp.eigenvectors.rows(), sp.eigenvectors.cols());
    for (Eigen::Index k = 0; k < sp.eigenvectors.cols(); ++k) {
        const double c = std::pow(sp.eigenvalues[k], static_cast<double>(t));
        for (Eigen::Index i = 0; i < sp.eigenvectors.rows(); ++i) coords(i, k) = c * sp.eigenvectors(i, k);
    }
    return coords;
}

double embedded_distance(const RowMatrix& coords, Index i, Index j) { return std::sqrt(squared_distance(coords, i, j)); }

double diffusion_distance(const PixelGraph& graph, Index i, Index j, unsigned t) {
    const auto n = static_cast<Index>(graph.size());
    if (i < 0 || j < 0 || i >= n || j >= n) {
        throw_validation("node index out of range (" + std::to_string(i) + ", " + std::to_string(j) + " for " +
                         std::to_string(n) + " nodes)");
    }
    if (i == j) return 0.0;
    const Spectrum& sp = graph.spectrum;
    double s = 0.0;
    for (Eigen::Index k = 0; k < sp.eigenvectors.cols(); ++k) {
        const double c = std::pow(sp.eigenvalues[k], static_cast<double>(t));
        const double diff = c * sp.eigenvectors(i, k) - c * sp.eigenvectors(j, k);
        s += diff * diff;
    }
    return std::sqrt(s);
}

Eigen::MatrixXd diffusion_distance_matrix(const PixelGraph& graph, unsigned t, std::span<const Index> subset,
                                          std::size_t max_nodes) {
    const std::size_t n = graph.size();
    std::vector<Index> nodes(subset.begin(), subset.end());
    if (nodes.empty()) {
        nodes.resize(n);
        std::iota(nodes.begin(), nodes.end(), Index{0});
    }
    if (nodes.size() > max_nodes) {
        throw_validation("all-pairs diffusion distances over " + std::to_string(nodes.size()) +
                         " nodes exceed the cap of " + std::to_string(max_nodes) + "; query rows individually");
    }
    for (Index v : nodes) {
        if (v < 0 || static_cast<std::size_t>(v) >= n) throw_validation("subset index " + std::to_string(v) + " out of range");
    }
    const RowMatrix coords = diffusion_coordinates(graph, t);
    const auto m = static_cast<Eigen::Index>(nodes.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a + 1; b < m; ++b) {
            const double d = nodes[static_cast<std::size_t>(a)] == nodes[static_cast<std::size_t>(b)]
                                 ? 0.0
                                 : embedded_distance(coords, nodes[static_cast<std::size_t>(a)],
                                                     nodes[static_cast<std::size_t>(b)]);
            out(a, b) = d;
            out(b, a) = d;
        }
    }
    return out;
}

std::string format_edge_list(const PixelGraph& graph) {
    std::ostringstream out;
    out << "source,target\n";
    for (Eigen::Index i = 0; i < graph.adjacency.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(graph.adjacency, i); it; ++it) {
            if (it.col() > i) out << i << ',' << it.col() << '\n';
        }
    }
    return out.str();
}

SparseMatrix parse_edge_list(const std::string& csv, std::size_t n) {
    std::istringstream in(csv);
    std::string line;
    std::vector<std::pair<Index, Index>> pairs;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument(line);
            const long long a = std::stoll(line.substr(0, comma));
            const long long b = std::stoll(line.substr(comma + 1));
            if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n || a == b) {
                throw_data("edge list line " + std::to_string(line_no) + " has an invalid edge");
            }
            pairs.emplace_back(a, b);
            pairs.emplace_back(b, a);
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            if (line_no == 1) continue;
            throw_data("edge list line " + std::to_string(line_no) + " is not 'source,target'");
        }
    }
    return adjacency_from_pairs(n, std::move(pairs));
}

namespace {

constexpr char kSpectrumMagic[8] = {'D', 'V', 'I', 'S', 'E', 'I', 'G', '\0'};
constexpr std::uint32_t kSpectrumVersion = 1;

} // namespace

void save_spectrum(const std::filesystem::path& path, const Spectrum& spectrum, std::uint64_t key) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_data("cannot write " + tmp.string());
        const std::uint64_t rows = static_cast<std::uint64_t>(spectrum.eigenvectors.rows());
        const std::uint64_t cols = static_cast<std::uint64_t>(spectrum.eigenvectors.cols());
        out.write(kSpectrumMagic, sizeof(kSpectrumMagic));
        out.write(reinterpret_cast<const char*>(&kSpectrumVersion), sizeof(kSpectrumVersion));
        out.write(reinterpret_cast<const char*>(&key), sizeof(key));
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        out.write(reinterpret_cast<const char*>(spectrum.eigenvalues.data()),
                  static_cast<std::streamsize>(cols * sizeof(double)));
        out.write(reinterpret_cast<const char*>(spectrum.eigenvectors.data()),
                  static_cast<std::streamsize>(rows * cols * sizeof(double)));
        if (!out) throw_data("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::optional<Spectrum> load_spectrum(const std::filesystem::path& path, std::uint64_t key) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t stored_key = 0, rows = 0, cols = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&stored_key), sizeof(stored_key));
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || std::memcmp(magic, kSpectrumMagic, sizeof(magic)) != 0 || version != kSpectrumVersion ||
        stored_key != key || cols == 0) {
        return std::nullopt;
    }
    Spectrum sp;
    sp.eigenvalues.resize(static_cast<Eigen::Index>(cols));
    sp.eigenvectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(sp.eigenvalues.data()), static_cast<std::streamsize>(cols * sizeof(double)));
    in.read(reinterpret_cast<char*>(sp.eigenvectors.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!in) return std::nullopt;
    return sp;
}

} // namespace dvis
