#include "dvis/unmixing.hpp"

#include "dvis/error.hpp"
#include "dvis/nnls.hpp"
#include "dvis/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dvis {

namespace {

// Leading eigenvectors of a symmetric matrix, eigenvalue-descending, with the
// largest-magnitude entry of each made positive.
Eigen::MatrixXd leading_eigenvectors(const Eigen::MatrixXd& sym, Eigen::Index count, Vector* values = nullptr) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw_numerical("symmetric eigensolver failed");
    const Eigen::Index d = sym.rows();
    Eigen::MatrixXd out(d, count);
    if (values) values->resize(count);
    for (Eigen::Index k = 0; k < count; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        out.col(k) = v;
        if (values) (*values)[k] = es.eigenvalues()[d - 1 - k];
    }
    return out;
}

} // namespace

HysimeResult hysime(const RowMatrix& y) {
    const Eigen::Index n = y.rows();
    const Eigen::Index d = y.cols();
    if (n <= d) {
        throw_validation("HySime needs more pixels than bands (" + std::to_string(n) + " pixels, " +
                         std::to_string(d) + " bands)");
    }

    HysimeResult result;
    Eigen::MatrixXd r = y.transpose() * y;

    const Eigen::RowVectorXd mean = y.colwise().mean();
    for (Eigen::Index b = 0; b < d; ++b) {
        const double var = (y.col(b).array() - mean[b]).square().sum();
        if (!(var > 0.0)) result.flagged_bands.push_back(static_cast<std::size_t>(b));
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(r);
    const Vector diag = ldlt.vectorD().cwiseAbs();
    const bool singular = ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-12 * diag.maxCoeff());
    if (!result.flagged_bands.empty() || singular) {
        r.diagonal().array() += 1e-6 * r.trace();
        ldlt.compute(r);
        result.ridge_applied = true;
    }
    const Eigen::MatrixXd g = ldlt.solve(Eigen::MatrixXd::Identity(d, d));

    // Residual of regressing band i on all others is Y g_i / g_ii.
    Eigen::MatrixXd scaled = g;
    for (Eigen::Index b = 0; b < d; ++b) scaled.col(b) /= g(b, b);
    result.noise = y * scaled;

    const auto nd = static_cast<double>(n);
    const RowMatrix x = y - result.noise;
    const Eigen::MatrixXd ry = y.transpose() * y / nd;
    const Eigen::MatrixXd rx = x.transpose() * x / nd;
    Eigen::MatrixXd rn = (result.noise.transpose() * result.noise / nd).diagonal().asDiagonal();
    rn.diagonal().array() += rx.trace() / static_cast<double>(d) / 1e5;

    const Eigen::MatrixXd e = leading_eigenvectors(rx, d);
    std::vector<double> delta(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k) {
        const double py = e.col(k).dot(ry * e.col(k));
        const double pn = e.col(k).dot(rn * e.col(k));
        delta[static_cast<std::size_t>(k)] = -py + 2.0 * pn;
    }
    std::sort(delta.begin(), delta.end());

    // mse(k) = tr(P_perp Ry) + 2 tr(P Rn) = tr(Ry) + sum of the k smallest delta.
    result.cost.resize(d);
    double acc = ry.trace();
    for (Eigen::Index k = 0; k < d; ++k) {
        acc += delta[static_cast<std::size_t>(k)];
        result.cost[k] = acc;
    }
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < d; ++k) {
        if (result.cost[k] < result.cost[best]) best = k;
    }
    result.m = static_cast<std::size_t>(best + 1);
    return result;
}

VcaResult vca(const RowMatrix& pixels, std::size_t m, std::uint64_t seed, const RowMatrix* noise) {
    const Eigen::Index n = pixels.rows();
    const Eigen::Index bands = pixels.cols();
    const auto p = static_cast<Eigen::Index>(m);
    if (m == 0 || p > std::min(n, bands)) {
        throw_validation("endmember count " + std::to_string(m) + " outside [1, min(n, D)] = [1, " +
                         std::to_string(std::min(n, bands)) + "]");
    }

    // Columns are pixels from here on.
    const Eigen::MatrixXd r = pixels.transpose();
    const auto nd = static_cast<double>(n);

    Vector corr_values;
    const Eigen::MatrixXd corr = r * r.transpose() / nd;
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr, Eigen::EigenvaluesOnly);
        const Vector ev = es.eigenvalues();
        const double top = ev.maxCoeff();
        const auto rank = (ev.array() > 1e-10 * top).count();
        if (rank < p) {
            throw_numerical("data rank " + std::to_string(rank) + " is below the requested " + std::to_string(m) +
                            " endmembers");
        }
    }

    const Eigen::VectorXd mean = r.rowwise().mean();
    const Eigen::MatrixXd centered = r.colwise() - mean;
    const Eigen::MatrixXd cov = centered * centered.transpose() / nd;

    const double power_y = r.squaredNorm() / nd;
    double snr = 0.0;
    if (noise) {
        if (noise->rows() != n || noise->cols() != bands) throw_validation("noise estimate does not match pixels");
        const double power_n = noise->squaredNorm() / nd;
        snr = power_n > 0.0 ? 10.0 * std::log10((power_y - power_n) / power_n) : std::numeric_limits<double>::infinity();
    } else {
        const Eigen::MatrixXd ud = leading_eigenvectors(cov, p);
        const double power_x = (ud.transpose() * centered).squaredNorm() / nd + mean.squaredNorm();
        const double gap = power_y - power_x;
        const double signal = power_x - static_cast<double>(p) / static_cast<double>(bands) * power_y;
        if (!(gap > 1e-14 * power_y)) snr = std::numeric_limits<double>::infinity();
        else if (!(signal > 0.0)) snr = -std::numeric_limits<double>::infinity();
        else snr = 10.0 * std::log10(signal / gap);
    }
    if (std::isnan(snr)) snr = -std::numeric_limits<double>::infinity();
    const double threshold = 15.0 + 10.0 * std::log10(static_cast<double>(m));

    VcaResult result;
    result.snr_db = snr;
    Eigen::MatrixXd y;
    bool projective = snr >= threshold;
    if (projective) {
        const Eigen::MatrixXd ud = leading_eigenvectors(corr, p);
        const Eigen::MatrixXd x = ud.transpose() * r;
        const Eigen::VectorXd u = x.rowwise().mean();
        const Eigen::RowVectorXd denom = u.transpose() * x;
        if (!(denom.minCoeff() > 0.0)) {
            projective = false;
        } else {
            y = x.array().rowwise() / denom.array();
        }
    }
    if (!projective) {
        const Eigen::Index d = p - 1;
        const Eigen::MatrixXd ud = leading_eigenvectors(cov, d);
        const Eigen::MatrixXd x = ud.transpose() * centered;
        const double c = x.colwise().norm().maxCoeff();
        y.resize(p, n);
        y.topRows(d) = x;
        y.row(d).setConstant(c);
    }
    result.projective = projective;

    Rng rng(seed);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    a(p - 1, 0) = 1.0;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    result.indices.resize(m);
    for (Eigen::Index i = 0; i < p; ++i) {
        Eigen::VectorXd w(p);
        for (Eigen::Index k = 0; k < p; ++k) w[k] = rng.normal();

        // f = w - A pinv(A) w: remove the component in the span of A.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
        const Vector& sv = svd.singularValues();
        const double sv_tol = sv.size() ? sv[0] * static_cast<double>(p) * std::numeric_limits<double>::epsilon() : 0.0;
        // With a single endmember the seed column already spans the space;
        // project along w itself.
        Eigen::VectorXd f = w;
        for (Eigen::Index k = 0; p > 1 && k < sv.size(); ++k) {
            if (sv[k] > sv_tol) f -= svd.matrixU().col(k) * svd.matrixU().col(k).dot(w);
        }
        const double fn = f.norm();
        if (!(fn > 0.0)) throw_numerical("VCA projection direction vanished");
        f /= fn;

        const Eigen::RowVectorXd v = f.transpose() * y;
        Eigen::Index best = -1;
        double best_abs = -1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (taken[static_cast<std::size_t>(j)]) continue;
            const double av = std::abs(v[j]);
            if (av > best_abs) {
                best_abs = av;
                best = j;
            }
        }
        taken[static_cast<std::size_t>(best)] = 1;
        result.indices[static_cast<std::size_t>(i)] = best;
        a.col(i) = y.col(best);
    }

    result.endmembers.resize(p, bands);
    for (Eigen::Index i = 0; i < p; ++i) result.endmembers.row(i) = pixels.row(result.indices[static_cast<std::size_t>(i)]);
    return result;
}

RowMatrix abundances(const RowMatrix& pixels, const RowMatrix& endmembers, double kkt_tol) {
    if (pixels.cols() != endmembers.cols()) throw_validation("endmember band count does not match pixels");
    const NnlsSolver solver(endmembers.transpose(), kkt_tol);
    RowMatrix out(pixels.rows(), endmembers.rows());
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < pixels.rows(); ++i) {
        out.row(i) = solver.solve(pixels.row(i).transpose()).transpose();
    }
    return out;
}

PurityResult purity(const RowMatrix& a) {
    if ((a.array() < 0.0).any()) throw_validation("abundances must be nonnegative");
    PurityResult result;
    result.eta.resize(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double sum = a.row(i).sum();
        if (sum < 1e-12) {
            result.eta[i] = 0.0;
            result.zero_rows.push_back(i);
        } else {
            result.eta[i] = a.row(i).maxCoeff() / sum;
        }
    }
    return result;
}

UnmixingModel unmix(const RowMatrix& pixels, const UnmixOptions& options) {
    UnmixingModel model;
    std::optional<HysimeResult> hs;
    if (options.fixed_m) {
        model.m = *options.fixed_m;
    } else {
        hs = hysime(pixels);
        model.m = hs->m;
    }
    const RowMatrix* noise = (hs && options.snr_source == SnrSource::Hysime) ? &hs->noise : nullptr;
    VcaResult v = vca(pixels, model.m, options.seed, noise);
    model.endmembers = std::move(v.endmembers);
    model.endmember_indices = std::move(v.indices);
    model.snr_db = v.snr_db;
    model.abundances = abundances(pixels, model.endmembers);
    PurityResult pr = purity(model.abundances);
    model.purity = std::move(pr.eta);
    model.zero_abundance_rows = std::move(pr.zero_rows);
    return model;
}

} // namespace dvis
