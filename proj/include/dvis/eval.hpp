#pragma once

#include "dvis/io.hpp"

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace dvis {

/// Crown id per pixel on the scene grid; 0 means "not in a crown".
/// Nonzero ids must cover 1..C without gaps.
struct CrownMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> id;

    int at(std::size_t r, std::size_t c) const { return id[r * cols + c]; }
    int crown_count() const;
};

CrownMap crowns_from_grid(const LabelGrid& grid);

struct CrownVote {
    // crown_label[c - 1] is the modal label of crown c, or 0 when no pixel of it is labelled.
    std::vector<int> crown_label;
    LabelGrid relabeled;
};

/// Each crown's labelled pixels take the crown's modal label (ties toward the
/// lowest label). Unlabelled pixels and crown-0 pixels are left alone.
CrownVote crown_majority_vote(const LabelGrid& labels, const CrownMap& crowns);

using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

/// counts(r - 1, p - 1) = number of pixels with reference r and prediction p.
CountMatrix contingency(std::span<const int> predicted, std::span<const int> reference, int k);

/// Minimum-cost assignment (Hungarian method) on a square cost matrix; result[row] = column.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// perm[p - 1] is the reference class assigned to predicted cluster p,
/// maximising the total overlap.
std::vector<int> hungarian_align(std::span<const int> predicted, std::span<const int> reference, int k);

struct EvalReport {
    // Rows: reference class; columns: predicted class after alignment.
    CountMatrix matrix;
    std::vector<int> permutation;
    std::vector<double> producer_acc;
    std::vector<double> user_acc;
    double overall_acc = 0.0;
    double average_acc = 0.0;
    long long total = 0;
};

/// Accuracy statistics of an already-aligned count matrix. Classes with an
/// empty row (or column) get producer's (user's) accuracy NaN and are left out of AA.
EvalReport report_from_matrix(const CountMatrix& matrix, std::vector<int> permutation = {});

EvalReport matching_matrix(std::span<const int> predicted, std::span<const int> reference,
                           std::span<const int> permutation, int k);

/// Aligns with hungarian_align, then builds the report.
EvalReport evaluate(std::span<const int> predicted, std::span<const int> reference, int k);

/// Relabels through `spec`; a label missing from the spec is a validation error.
std::vector<int> merge_classes(std::span<const int> labels, const std::map<int, int>& spec);

/// "a:b,c:d" -> {a -> b, c -> d}.
std::map<int, int> parse_merge_spec(const std::string& text);

/// Table layout: counts, producer's accuracy column, user's accuracy row, then OA/AA.
std::string format_report_table(const EvalReport& report, const std::vector<std::string>& class_names = {});
std::string format_report_csv(const EvalReport& report);

} // namespace dvis
