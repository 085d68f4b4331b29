#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately naive: dense matrices, double loops, extended precision.

#include "dvis/dvis.hpp"
#include "dvis/graph.hpp"
#include "dvis/rng.hpp"
#include "dvis/synthetic.hpp"
#include "dvis/types.hpp"

#include <algorithm>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using dvis::Index;
using dvis::RowMatrix;
using Quad = __float128;
using QuadMatrix = std::vector<std::vector<Quad>>;

inline RowMatrix random_points(dvis::Rng& rng, std::size_t n, std::size_t d) {
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform();
    }
    return x;
}

inline double sq_dist(const RowMatrix& x, Eigen::Index i, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
        const double d = x(i, b) - x(j, b);
        s += d * d;
    }
    return s;
}

/// Exhaustive KNN: sort all other points by (distance, index).
inline std::vector<std::vector<Index>> brute_knn(const RowMatrix& x, std::size_t k) {
    const auto n = x.rows();
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<std::pair<double, Index>> all;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) all.emplace_back(sq_dist(x, i, j), j);
        }
        std::sort(all.begin(), all.end());
        for (std::size_t r = 0; r < k; ++r) out[static_cast<std::size_t>(i)].push_back(all[r].second);
    }
    return out;
}

/// Dense symmetric 0/1 adjacency from the KNN lists, max-symmetrised.
inline Eigen::MatrixXd knn_adjacency(const std::vector<std::vector<Index>>& nn) {
    const auto n = static_cast<Eigen::Index>(nn.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Index j : nn[static_cast<std::size_t>(i)]) {
            w(i, j) = 1.0;
            w(j, i) = 1.0;
        }
    }
    return w;
}

inline Eigen::MatrixXd dense(const dvis::SparseMatrix& s) { return Eigen::MatrixXd(s); }

inline QuadMatrix quad_transition(const Eigen::MatrixXd& w) {
    const auto n = static_cast<std::size_t>(w.rows());
    QuadMatrix p(n, std::vector<Quad>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        Quad deg = 0;
        for (std::size_t j = 0; j < n; ++j) deg += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        for (std::size_t j = 0; j < n; ++j) p[i][j] = Quad(w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) / deg;
    }
    return p;
}

inline QuadMatrix multiply(const QuadMatrix& a, const QuadMatrix& b) {
    const std::size_t n = a.size();
    QuadMatrix c(n, std::vector<Quad>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const Quad aik = a[i][k];
            if (aik == 0) continue;
            for (std::size_t j = 0; j < n; ++j) c[i][j] += aik * b[k][j];
        }
    }
    return c;
}

inline QuadMatrix power(const QuadMatrix& p, unsigned t) {
    const std::size_t n = p.size();
    QuadMatrix result(n, std::vector<Quad>(n, 0));
    for (std::size_t i = 0; i < n; ++i) result[i][i] = 1;
    QuadMatrix base = p;
    while (t > 0) {
        if (t & 1u) result = multiply(result, base);
        t >>= 1u;
        if (t > 0) base = multiply(base, base);
    }
    return result;
}

/// Definitional diffusion distances: sum_k (Pt_ik - Pt_jk)^2 / pi_k, pi = d / sum d.
inline Eigen::MatrixXd diffusion_distances(const Eigen::MatrixXd& w, unsigned t) {
    const auto n = static_cast<std::size_t>(w.rows());
    std::vector<Quad> pi(n, 0);
    Quad vol = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) pi[i] += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        vol += pi[i];
    }
    for (auto& v : pi) v /= vol;
    const QuadMatrix pt = power(quad_transition(w), t);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            Quad s = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const Quad d = pt[i][k] - pt[j][k];
                s += d * d / pi[k];
            }
            const double v = std::sqrt(static_cast<double>(s));
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    return out;
}

/// Second-largest |eigenvalue| of P, from a dense solve of D^-1/2 W D^-1/2.
inline double slowest_decay(const Eigen::MatrixXd& w) {
    const Eigen::VectorXd s = w.rowwise().sum().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd sym = s.asDiagonal() * w * s.asDiagonal();
    Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().cwiseAbs();
    std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
    return ev.size() > 1 ? ev[1] : 0.0;
}

/// Spectral-vs-definition comparison at relative tolerance `rel_tol`.
///
/// In double precision the computed eigenvectors carry absolute errors of
/// order eps, which the slowest mode carries into every distance as an
/// absolute floor of order eps * |lambda_2|^t. Pairs whose true distance lies
/// below `resolution` = 1e-6 * |lambda_2|^t (near-twin nodes at large t) cannot
/// be resolved to a relative 1e-8 by any double-precision method; they are
/// held to the absolute bound rel_tol * resolution instead.
inline bool distance_matches(double got, double want, double rel_tol, double decay_t, double* rel_err = nullptr,
                             bool* resolvable = nullptr) {
    const double resolution = 1e-6 * decay_t;
    const bool ok_scale = want >= resolution;
    if (resolvable) *resolvable = ok_scale;
    if (!ok_scale) {
        if (rel_err) *rel_err = 0.0;
        return std::abs(got - want) <= rel_tol * resolution;
    }
    const double e = std::abs(got - want) / want;
    if (rel_err) *rel_err = e;
    return e <= rel_tol;
}

/// "y ranks above x": larger zeta, or equal zeta and smaller index.
inline bool ranks_above(const dvis::Vector& z, Index y, Index x) { return z[y] > z[x] || (z[y] == z[x] && y < x); }

struct PipelineResult {
    std::vector<double> dt;
    std::vector<Index> parent;
    std::vector<Index> modes;
    std::vector<int> labels;
};

/// d_t, modes and labels from a full distance matrix by exhaustive scans.
/// Distances within the library's relative tie band count as equal.
inline PipelineResult dvis_from_distances(const Eigen::MatrixXd& dist, const dvis::Vector& z, std::size_t k) {
    const auto n = static_cast<Index>(z.size());
    const double tie = dvis::distance_tie_tolerance;
    PipelineResult r;
    r.dt.assign(static_cast<std::size_t>(n), 0.0);
    r.parent.assign(static_cast<std::size_t>(n), -1);
    for (Index x = 0; x < n; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (Index y = 0; y < n; ++y) {
            if (ranks_above(z, y, x)) best = std::min(best, dist(x, y));
        }
        for (Index y = 0; y < n && r.parent[static_cast<std::size_t>(x)] < 0; ++y) {
            if (ranks_above(z, y, x) && dist(x, y) <= best * (1.0 + tie)) r.parent[static_cast<std::size_t>(x)] = y;
        }
        if (r.parent[static_cast<std::size_t>(x)] < 0) best = dist.row(x).maxCoeff();
        r.dt[static_cast<std::size_t>(x)] = best;
    }
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
        const double sa = z[a] * r.dt[static_cast<std::size_t>(a)];
        const double sb = z[b] * r.dt[static_cast<std::size_t>(b)];
        return sa > sb || (sa == sb && a < b);
    });
    r.modes.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));

    r.labels.assign(static_cast<std::size_t>(n), 0);
    for (std::size_t m = 0; m < k; ++m) r.labels[static_cast<std::size_t>(r.modes[m])] = static_cast<int>(m + 1);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return ranks_above(z, a, b); });
    for (Index x : order) {
        if (r.labels[static_cast<std::size_t>(x)] != 0) continue;
        double best = std::numeric_limits<double>::infinity();
        Index pick = -1;
        bool restricted = false;
        for (Index y = 0; y < n; ++y) {
            if (r.labels[static_cast<std::size_t>(y)] != 0 && ranks_above(z, y, x)) restricted = true;
        }
        auto eligible = [&](Index y) {
            return r.labels[static_cast<std::size_t>(y)] != 0 && (!restricted || ranks_above(z, y, x));
        };
        for (Index y = 0; y < n; ++y) {
            if (eligible(y)) best = std::min(best, dist(x, y));
        }
        for (Index y = 0; y < n && pick < 0; ++y) {
            if (eligible(y) && dist(x, y) <= best * (1.0 + tie)) pick = y;
        }
        r.labels[static_cast<std::size_t>(x)] = r.labels[static_cast<std::size_t>(pick)];
    }
    return r;
}

/// Brute-force density: double loop over exhaustive neighbour lists.
inline dvis::Vector density(const RowMatrix& x, std::size_t n_neighbors, double sigma0) {
    const auto nn = brute_knn(x, n_neighbors);
    dvis::Vector p(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double sum = 0.0;
        for (Index j : nn[static_cast<std::size_t>(i)]) sum += std::exp(-sq_dist(x, i, j) / (sigma0 * sigma0));
        p[i] = sum;
    }
    return p;
}

inline dvis::Vector zeta(const dvis::Vector& p, const dvis::Vector& eta) {
    const double pm = p.maxCoeff();
    const double em = eta.maxCoeff();
    dvis::Vector z(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double a = p[i] / pm;
        const double b = eta[i] / em;
        z[i] = a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
    }
    return z;
}

struct PipelineCheck {
    std::size_t dt_mismatches = 0;
    std::size_t unresolvable = 0;   // below the near-twin floor
    std::size_t truncated = 0;      // off by no more than the eigenpair truncation bound
    double worst_dt_rel = 0.0;
    bool modes_equal = false;
    bool labels_equal = false;
    std::string detail;

    bool ok() const { return dt_mismatches == 0 && modes_equal && labels_equal; }
};

/// Re-derives d_t, modes and labels of a finished run from the pixels, using
/// extended-precision matrix powers and exhaustive scans. Purity is taken from
/// the run's own abundances (unmixing has its own oracles).
inline PipelineCheck check_pipeline(const RowMatrix& x, const dvis::ClusterParams& params,
                                    const dvis::ClusterState& state, double rel_tol = 1e-8) {
    PipelineCheck c;
    // Bridge edges are checked by the graph tests; reuse them here.
    Eigen::MatrixXd w = knn_adjacency(brute_knn(x, params.neighbors));
    for (const auto& e : state.graph->bridges) w(e.a, e.b) = w(e.b, e.a) = 1.0;
    const dvis::Vector p = density(x, params.neighbors, params.sigma0);
    const auto& a = state.unmixing.abundances;
    dvis::Vector eta(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double sum = a.row(i).sum();
        eta[i] = sum > 0.0 ? a.row(i).maxCoeff() / sum : 0.0;
    }
    const dvis::Vector z = zeta(p, eta);
    const Eigen::MatrixXd dist = diffusion_distances(w, params.time);
    const PipelineResult want = dvis_from_distances(dist, z, params.clusters);
    const double decay = std::pow(slowest_decay(w), params.time);

    // Dropping eigenpairs K+1.. changes D_t(i, j) by at most
    // |lambda_{K+1}|^t sqrt(1/pi_i + 1/pi_j) (completeness of the pi-orthonormal
    // eigenvectors), so a minimum over candidates moves by at most that with pi_min.
    const Eigen::VectorXd deg = w.rowwise().sum();
    const Eigen::VectorXd pi = deg / deg.sum();
    const Eigen::VectorXd s = deg.cwiseSqrt().cwiseInverse();
    Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.asDiagonal() * w * s.asDiagonal()).eigenvalues().cwiseAbs();
    std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
    const auto kept = static_cast<Eigen::Index>(state.graph->spectrum.size());
    const double dropped = kept < ev.size() ? std::pow(ev[kept], params.time) : 0.0;

    std::ostringstream msg;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double got = state.dt[i];
        const double exact = want.dt[static_cast<std::size_t>(i)];
        double e = 0.0;
        bool resolvable = true;
        if (distance_matches(got, exact, rel_tol, decay, &e, &resolvable)) {
            if (!resolvable) ++c.unresolvable;
            c.worst_dt_rel = std::max(c.worst_dt_rel, e);
        } else if (std::abs(got - exact) <= dropped * std::sqrt(1.0 / pi[i] + 1.0 / pi.minCoeff())) {
            ++c.truncated;
        } else {
            ++c.dt_mismatches;
            msg << "dt[" << i << "] got " << got << " want " << exact << "\n";
        }
    }
    c.modes_equal = want.modes == state.modes;
    c.labels_equal = want.labels == state.labels;
    if (!c.modes_equal) msg << "modes differ\n";
    if (!c.labels_equal) msg << "labels differ\n";
    c.detail = msg.str();
    return c;
}

// One cluster, symmetric Dirichlet(1) abundances over `m` materials.
/// snr_db <= 0 means noiseless.
inline dvis::SyntheticScene simplex_scene(std::size_t n, std::size_t d, std::size_t m, double snr_db,
                                          std::uint64_t seed, bool plant = true) {
    dvis::SyntheticSceneSpec spec;
    spec.n = n;
    spec.bands = d;
    spec.materials = m;
    spec.cluster_sizes = {n};
    spec.concentration = static_cast<double>(m);
    spec.dominance = 1.0 / static_cast<double>(m);
    spec.noiseless = snr_db <= 0.0;
    spec.snr_db = snr_db > 0.0 ? snr_db : 30.0;
    spec.plant_pure = plant;
    spec.seed = seed;
    return dvis::generate_synthetic(spec);
}

inline RowMatrix pixels_of(const dvis::SyntheticScene& s) {
    return Eigen::Map<const RowMatrix>(s.cube.data().data(), static_cast<Eigen::Index>(s.cube.pixel_count()),
                                       static_cast<Eigen::Index>(s.cube.bands()));
}

// Exhaustive active-set oracle: least squares on every support, keep the
// feasible one with the smallest residual.
inline Eigen::VectorXd nnls_exhaustive(const Eigen::MatrixXd& e, const Eigen::VectorXd& x) {
    const auto m = e.cols();
    Eigen::VectorXd best = Eigen::VectorXd::Zero(m);
    double best_res = x.squaredNorm();
    for (int mask = 1; mask < (1 << m); ++mask) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (mask & (1 << j)) cols.push_back(j);
        }
        Eigen::MatrixXd sub(e.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = e.col(cols[c]);
        const Eigen::VectorXd z = sub.colPivHouseholderQr().solve(x);
        if ((z.array() < 0.0).any()) continue;
        Eigen::VectorXd full = Eigen::VectorXd::Zero(m);
        for (std::size_t c = 0; c < cols.size(); ++c) full[cols[c]] = z[static_cast<Eigen::Index>(c)];
        const double res = (e * full - x).squaredNorm();
        if (res < best_res) {
            best_res = res;
            best = full;
        }
    }
    return best;
}

/// Per-test scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("dvis-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace oracle
