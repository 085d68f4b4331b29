#include "dvis/eval.hpp"

#include "dvis/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dvis {

int CrownMap::crown_count() const {
    int c = 0;
    for (int v : id) c = std::max(c, v);
    return c;
}

CrownMap crowns_from_grid(const LabelGrid& grid) {
    CrownMap map{grid.rows, grid.cols, grid.label};
    const int count = map.crown_count();
    std::vector<char> seen(static_cast<std::size_t>(count) + 1, 0);
    for (int v : map.id) {
        if (v < 0) throw_data("negative crown id");
        seen[static_cast<std::size_t>(v)] = 1;
    }
    for (int c = 1; c <= count; ++c) {
        if (!seen[static_cast<std::size_t>(c)]) {
            throw_data("crown ids must cover 1.." + std::to_string(count) + "; crown " + std::to_string(c) + " has no pixels");
        }
    }
    return map;
}

CrownVote crown_majority_vote(const LabelGrid& labels, const CrownMap& crowns) {
    if (labels.rows != crowns.rows || labels.cols != crowns.cols) {
        throw_validation("crown map is " + std::to_string(crowns.rows) + "x" + std::to_string(crowns.cols) +
                         " but labels are " + std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
    }
    const int count = crowns.crown_count();
    int max_label = 0;
    for (int v : labels.label) max_label = std::max(max_label, v);

    std::vector<std::vector<long long>> tally(static_cast<std::size_t>(count) + 1,
                                              std::vector<long long>(static_cast<std::size_t>(max_label) + 1, 0));
    for (std::size_t i = 0; i < labels.label.size(); ++i) {
        const int c = crowns.id[i];
        const int l = labels.label[i];
        if (c > 0 && l > 0) ++tally[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)];
    }

    CrownVote vote;
    vote.crown_label.assign(static_cast<std::size_t>(count), 0);
    for (int c = 1; c <= count; ++c) {
        const auto& t = tally[static_cast<std::size_t>(c)];
        int best = 0;
        for (int l = 1; l <= max_label; ++l) {
            if (t[static_cast<std::size_t>(l)] > (best ? t[static_cast<std::size_t>(best)] : 0)) best = l;
        }
        vote.crown_label[static_cast<std::size_t>(c - 1)] = best;
    }

    vote.relabeled = labels;
    for (std::size_t i = 0; i < labels.label.size(); ++i) {
        const int c = crowns.id[i];
        if (c > 0 && labels.label[i] > 0) vote.relabeled.label[i] = vote.crown_label[static_cast<std::size_t>(c - 1)];
    }
    return vote;
}

CountMatrix contingency(std::span<const int> predicted, std::span<const int> reference, int k) {
    if (predicted.size() != reference.size()) throw_validation("predicted and reference label counts differ");
    if (k < 1) throw_validation("class count must be positive");
    CountMatrix m = CountMatrix::Zero(k, k);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i];
        const int r = reference[i];
        if (p < 1 || p > k || r < 1 || r > k) {
            throw_validation("label out of range 1.." + std::to_string(k) + " at position " + std::to_string(i));
        }
        ++m(r - 1, p - 1);
    }
    return m;
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    // Potentials form of the Hungarian method, O(k^3), 1-based internally.
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw_validation("assignment cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return row_to_col;
}

std::vector<int> hungarian_align(std::span<const int> predicted, std::span<const int> reference, int k) {
    const CountMatrix counts = contingency(predicted, reference, k);
    // Rows: predicted clusters, columns: reference classes; cost = -overlap.
    Eigen::MatrixXd cost(k, k);
    for (int p = 0; p < k; ++p) {
        for (int r = 0; r < k; ++r) cost(p, r) = -static_cast<double>(counts(r, p));
    }
    const auto assignment = solve_assignment(cost);
    std::vector<int> perm(static_cast<std::size_t>(k));
    for (int p = 0; p < k; ++p) perm[static_cast<std::size_t>(p)] = assignment[static_cast<std::size_t>(p)] + 1;
    return perm;
}

EvalReport report_from_matrix(const CountMatrix& matrix, std::vector<int> permutation) {
    const auto k = static_cast<int>(matrix.rows());
    if (matrix.cols() != k) throw_validation("matching matrix must be square");
    EvalReport rep;
    rep.matrix = matrix;
    rep.permutation = std::move(permutation);
    rep.total = matrix.sum();
    if (rep.total <= 0) throw_data("matching matrix is empty");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.producer_acc.resize(static_cast<std::size_t>(k));
    rep.user_acc.resize(static_cast<std::size_t>(k));
    double aa_sum = 0.0;
    int aa_count = 0;
    for (int c = 0; c < k; ++c) {
        const long long row = matrix.row(c).sum();
        const long long col = matrix.col(c).sum();
        const auto diag = static_cast<double>(matrix(c, c));
        rep.producer_acc[static_cast<std::size_t>(c)] = row > 0 ? diag / static_cast<double>(row) : nan;
        rep.user_acc[static_cast<std::size_t>(c)] = col > 0 ? diag / static_cast<double>(col) : nan;
        if (row > 0) {
            aa_sum += rep.producer_acc[static_cast<std::size_t>(c)];
            ++aa_count;
        }
    }
    rep.overall_acc = static_cast<double>(matrix.trace()) / static_cast<double>(rep.total);
    rep.average_acc = aa_count > 0 ? aa_sum / aa_count : nan;
    return rep;
}

EvalReport matching_matrix(std::span<const int> predicted, std::span<const int> reference,
                           std::span<const int> permutation, int k) {
    if (static_cast<int>(permutation.size()) != k) throw_validation("permutation length must equal the class count");
    std::vector<int> aligned(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i];
        if (p < 1 || p > k) throw_validation("predicted label out of range at position " + std::to_string(i));
        aligned[i] = permutation[static_cast<std::size_t>(p - 1)];
    }
    return report_from_matrix(contingency(aligned, reference, k), {permutation.begin(), permutation.end()});
}

EvalReport evaluate(std::span<const int> predicted, std::span<const int> reference, int k) {
    const auto perm = hungarian_align(predicted, reference, k);
    return matching_matrix(predicted, reference, perm, k);
}

std::vector<int> merge_classes(std::span<const int> labels, const std::map<int, int>& spec) {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = spec.find(labels[i]);
        if (it == spec.end()) throw_validation("label " + std::to_string(labels[i]) + " is not covered by the merge spec");
        out[i] = it->second;
    }
    return out;
}

std::map<int, int> parse_merge_spec(const std::string& text) {
    std::map<int, int> spec;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        try {
            if (colon == std::string::npos) throw std::invalid_argument(item);
            spec[std::stoi(item.substr(0, colon))] = std::stoi(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw_validation("merge entry '" + item + "' is not 'from:to'");
        }
    }
    return spec;
}

namespace {

std::string percent(double v) {
    if (std::isnan(v)) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << 100.0 * v << "%";
    return s.str();
}

} // namespace

std::string format_report_table(const EvalReport& report, const std::vector<std::string>& class_names) {
    const auto k = static_cast<int>(report.matrix.rows());
    auto name = [&](int c) {
        return c < static_cast<int>(class_names.size()) ? class_names[static_cast<std::size_t>(c)]
                                                        : "Class " + std::to_string(c + 1);
    };
    std::size_t width = 12;
    for (int c = 0; c < k; ++c) width = std::max(width, name(c).size() + 2);
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) width = std::max(width, std::to_string(report.matrix(r, c)).size() + 2);
    }

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "";
    for (int c = 0; c < k; ++c) out << std::right << std::setw(static_cast<int>(width)) << name(c);
    out << std::right << std::setw(18) << "Producer's Acc." << '\n';
    for (int r = 0; r < k; ++r) {
        out << std::left << std::setw(static_cast<int>(width)) << name(r);
        for (int c = 0; c < k; ++c) out << std::right << std::setw(static_cast<int>(width)) << report.matrix(r, c);
        out << std::right << std::setw(18) << percent(report.producer_acc[static_cast<std::size_t>(r)]) << '\n';
    }
    out << std::left << std::setw(static_cast<int>(width)) << "User's Acc.";
    for (int c = 0; c < k; ++c) {
        out << std::right << std::setw(static_cast<int>(width)) << percent(report.user_acc[static_cast<std::size_t>(c)]);
    }
    out << '\n'
        << "Overall accuracy: " << percent(report.overall_acc) << '\n'
        << "Average accuracy: " << percent(report.average_acc) << '\n'
        << "Pixels: " << report.total << '\n';
    if (!report.permutation.empty()) {
        out << "Alignment (cluster -> class):";
        for (std::size_t p = 0; p < report.permutation.size(); ++p) out << ' ' << (p + 1) << "->" << report.permutation[p];
        out << '\n';
    }
    return out.str();
}

std::string format_report_csv(const EvalReport& report) {
    const auto k = static_cast<int>(report.matrix.rows());
    std::ostringstream out;
    out << std::setprecision(17);
    out << "reference";
    for (int c = 0; c < k; ++c) out << ",predicted_" << (c + 1);
    out << ",producer_acc\n";
    for (int r = 0; r < k; ++r) {
        out << (r + 1);
        for (int c = 0; c < k; ++c) out << ',' << report.matrix(r, c);
        out << ',' << report.producer_acc[static_cast<std::size_t>(r)] << '\n';
    }
    out << "user_acc";
    for (int c = 0; c < k; ++c) out << ',' << report.user_acc[static_cast<std::size_t>(c)];
    out << ",\n";
    out << "overall_acc," << report.overall_acc << '\n';
    out << "average_acc," << report.average_acc << '\n';
    out << "total," << report.total << '\n';
    if (!report.permutation.empty()) {
        out << "permutation";
        for (int p : report.permutation) out << ',' << p;
        out << '\n';
    }
    return out.str();
}

} // namespace dvis
