#include "dvis/error.hpp"
#include "dvis/eval.hpp"
#include "dvis/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dvis;

namespace {

// Label pairs realising a count matrix: counts(r, c) pixels with reference r + 1, prediction c + 1.
void labels_from_counts(const CountMatrix& counts, std::vector<int>& pred, std::vector<int>& ref) {
    pred.clear();
    ref.clear();
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        for (Eigen::Index c = 0; c < counts.cols(); ++c) {
            pred.insert(pred.end(), static_cast<std::size_t>(counts(r, c)), static_cast<int>(c + 1));
            ref.insert(ref.end(), static_cast<std::size_t>(counts(r, c)), static_cast<int>(r + 1));
        }
    }
}

CountMatrix published_counts() {
    CountMatrix m(2, 2);
    m << 27460, 12895, 8238, 24182;
    return m;
}

LabelGrid grid(std::size_t rows, std::size_t cols, std::vector<int> v) {
    LabelGrid g(rows, cols);
    g.label = std::move(v);
    return g;
}

} // namespace

TEST_CASE("crown majority vote examples") {
    // Three crowns in a 3x4 grid plus background.
    const CrownMap crowns = crowns_from_grid(grid(3, 4, {1, 1, 1, 0, 1, 1, 2, 2, 3, 3, 3, 3}));
    CHECK(crowns.crown_count() == 3);
    const LabelGrid labels = grid(3, 4, {2, 2, 2, 1, 2, 2, 1, 2, 1, 1, 1, 2});
    const CrownVote v = crown_majority_vote(labels, crowns);
    CHECK(v.crown_label == std::vector<int>{2, 1, 1});
    CHECK(v.relabeled.label == std::vector<int>{2, 2, 2, 1, 2, 2, 1, 1, 1, 1, 1, 1});

    const CrownVote tie = crown_majority_vote(grid(1, 2, {2, 1}), crowns_from_grid(grid(1, 2, {1, 1})));
    CHECK(tie.crown_label == std::vector<int>{1});

    CHECK_THROWS_AS(crowns_from_grid(grid(1, 3, {1, 3, 0})), Error);
    CHECK_THROWS_AS(crown_majority_vote(grid(1, 3, {1, 1, 1}), crowns_from_grid(grid(1, 2, {1, 1}))), Error);
}

TEST_CASE("property: crown vote is idempotent") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + rng.below(12), cols = 1 + rng.below(12);
        const int c = 1 + static_cast<int>(rng.below(6));
        std::vector<int> ids(rows * cols), lab(rows * cols);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ids[i] = static_cast<int>(rng.below(static_cast<std::size_t>(c) + 1));
            lab[i] = static_cast<int>(rng.below(4));
        }
        // Make every id 1..c appear.
        for (int k = 1; k <= c && static_cast<std::size_t>(k) <= ids.size(); ++k) ids[static_cast<std::size_t>(k - 1)] = k;
        const int used = std::min<int>(c, static_cast<int>(ids.size()));
        for (auto& id : ids) id = std::min(id, used);
        const CrownMap crowns = crowns_from_grid(grid(rows, cols, ids));
        const CrownVote once = crown_majority_vote(grid(rows, cols, lab), crowns);
        const CrownVote twice = crown_majority_vote(once.relabeled, crowns);
        CHECK(twice.relabeled.label == once.relabeled.label);
        CHECK(twice.crown_label == once.crown_label);
    }
}

TEST_CASE("Hungarian alignment examples") {
    const std::vector<int> ref{1, 1, 2, 2, 2, 3};
    CHECK(hungarian_align(ref, ref, 3) == std::vector<int>{1, 2, 3});
    const std::vector<int> swapped{2, 2, 1, 1, 1, 3};
    CHECK(hungarian_align(swapped, ref, 3) == std::vector<int>{2, 1, 3});
    CHECK_THROWS_AS(hungarian_align(std::vector<int>{0, 1}, std::vector<int>{1, 1}, 2), Error);
    CHECK_THROWS_AS(hungarian_align(std::vector<int>{1, 3}, std::vector<int>{1, 1}, 2), Error);

    // Published counts with the clusters numbered the other way round: cluster 2
    // holds the 27460 pixels that agree with the first reference class.
    CountMatrix raw(2, 2);
    raw << 12895, 27460, 24182, 8238;
    std::vector<int> pred, rf;
    labels_from_counts(raw, pred, rf);
    CHECK(hungarian_align(pred, rf, 2) == std::vector<int>{2, 1});
    const EvalReport r = evaluate(pred, rf, 2);
    CHECK(r.matrix == published_counts());
}

TEST_CASE("property: Hungarian equals exhaustive search for K <= 6") {
    Rng rng(6);
    for (int trial = 0; trial < 300; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(6));
        Eigen::MatrixXd cost(k, k);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) cost(i, j) = trial % 3 == 0 ? static_cast<double>(rng.below(4)) : rng.uniform();
        }
        std::vector<int> p(static_cast<std::size_t>(k));
        std::iota(p.begin(), p.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += cost(i, p[static_cast<std::size_t>(i)]);
            best = std::min(best, s);
        } while (std::next_permutation(p.begin(), p.end()));
        const std::vector<int> got = solve_assignment(cost);
        double s = 0.0;
        std::vector<int> seen(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < k; ++i) {
            s += cost(i, got[static_cast<std::size_t>(i)]);
            ++seen[static_cast<std::size_t>(got[static_cast<std::size_t>(i)])];
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
        CHECK(std::abs(s - best) <= 1e-12);
    }
}

TEST_CASE("published matching-matrix arithmetic") {
    const EvalReport r = report_from_matrix(published_counts());
    CHECK(std::abs(100.0 * r.producer_acc[0] - 68.0) <= 0.05);
    CHECK(std::abs(100.0 * r.producer_acc[1] - 74.6) <= 0.05);
    CHECK(std::abs(100.0 * r.user_acc[0] - 76.9) <= 0.05);
    CHECK(std::abs(100.0 * r.user_acc[1] - 65.2) <= 0.05);
    CHECK(std::abs(100.0 * r.overall_acc - 71.0) <= 0.05);
    CHECK(std::abs(100.0 * r.average_acc - 71.3) <= 0.05);
    CHECK(r.total == 72775);
    const std::string table = format_report_table(r, {"Healthy", "Dieback"});
    CHECK(table.find("68.0") != std::string::npos);
    CHECK(table.find("65.2") != std::string::npos);
    CHECK(table.find("71.0") != std::string::npos);
    CHECK(table.find("71.3") != std::string::npos);
}

TEST_CASE("perfect diagonal and empty classes") {
    CountMatrix d = CountMatrix::Zero(3, 3);
    d(0, 0) = 5;
    d(1, 1) = 7;
    d(2, 2) = 1;
    const EvalReport r = report_from_matrix(d);
    CHECK(r.overall_acc == 1.0);
    CHECK(r.average_acc == 1.0);
    for (int k = 0; k < 3; ++k) {
        CHECK(r.producer_acc[static_cast<std::size_t>(k)] == 1.0);
        CHECK(r.user_acc[static_cast<std::size_t>(k)] == 1.0);
    }
    CountMatrix e = CountMatrix::Zero(2, 2);
    e(0, 0) = 3;
    e(0, 1) = 1;
    const EvalReport re = report_from_matrix(e);
    CHECK(std::isnan(re.producer_acc[1]));
    CHECK(re.average_acc == 0.75);
    CHECK_THROWS_AS(report_from_matrix(CountMatrix::Zero(2, 2)), Error);
}

TEST_CASE("random 2x2 statistics match direct arithmetic") {
    Rng rng(22);
    for (int trial = 0; trial < 500; ++trial) {
        CountMatrix m(2, 2);
        for (int i = 0; i < 4; ++i) m.data()[i] = 1 + static_cast<long long>(rng.below(100000));
        const EvalReport r = report_from_matrix(m);
        const double a = static_cast<double>(m(0, 0)), b = static_cast<double>(m(0, 1));
        const double c = static_cast<double>(m(1, 0)), d = static_cast<double>(m(1, 1));
        CHECK(std::abs(r.producer_acc[0] - a / (a + b)) <= 1e-12);
        CHECK(std::abs(r.producer_acc[1] - d / (c + d)) <= 1e-12);
        CHECK(std::abs(r.user_acc[0] - a / (a + c)) <= 1e-12);
        CHECK(std::abs(r.user_acc[1] - d / (b + d)) <= 1e-12);
        CHECK(std::abs(r.overall_acc - (a + d) / (a + b + c + d)) <= 1e-12);
        CHECK(std::abs(r.average_acc - 0.5 * (a / (a + b) + d / (c + d))) <= 1e-12);
        CHECK(r.total == m.sum());
    }
}

TEST_CASE("property: relabelling predictions leaves the report unchanged") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(5));
        const std::size_t n = 50 + rng.below(300);
        std::vector<int> pred(n), ref(n);
        for (std::size_t i = 0; i < n; ++i) {
            ref[i] = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(k)));
            pred[i] = rng.uniform() < 0.7 ? ref[i] : 1 + static_cast<int>(rng.below(static_cast<std::size_t>(k)));
        }
        std::vector<int> sigma(static_cast<std::size_t>(k));
        std::iota(sigma.begin(), sigma.end(), 1);
        for (std::size_t i = sigma.size() - 1; i > 0; --i) std::swap(sigma[i], sigma[rng.below(i + 1)]);
        std::vector<int> moved(n);
        for (std::size_t i = 0; i < n; ++i) moved[i] = sigma[static_cast<std::size_t>(pred[i] - 1)];
        const EvalReport a = evaluate(pred, ref, k);
        const EvalReport b = evaluate(moved, ref, k);
        CHECK(a.matrix == b.matrix);
        CHECK(a.overall_acc == b.overall_acc);
        CHECK(a.average_acc == b.average_acc);
        CHECK(std::abs(a.overall_acc - static_cast<double>(a.matrix.trace()) / static_cast<double>(n)) == 0.0);
        CHECK(a.total == static_cast<long long>(n));
    }
}

TEST_CASE("merge_classes examples") {
    CHECK(merge_classes(std::vector<int>{1, 2, 3}, {{1, 1}, {2, 2}, {3, 2}}) == std::vector<int>{1, 2, 2});
    CHECK(merge_classes(std::vector<int>{1, 2, 3}, {{1, 1}, {2, 2}, {3, 3}}) == std::vector<int>{1, 2, 3});
    std::vector<int> three;
    three.insert(three.end(), 10, 1);
    three.insert(three.end(), 5, 2);
    three.insert(three.end(), 7, 3);
    const auto merged = merge_classes(three, parse_merge_spec("1:1,2:2,3:2"));
    CHECK(std::count(merged.begin(), merged.end(), 2) == 12);
    CHECK_THROWS_AS(merge_classes(std::vector<int>{1, 4}, {{1, 1}}), Error);
    CHECK_THROWS_AS(parse_merge_spec("1-2"), Error);
}

TEST_CASE("CSV report carries full precision") {
    const std::string csv = format_report_csv(report_from_matrix(published_counts()));
    CHECK(csv.find("27460") != std::string::npos);
    CHECK(csv.find("overall_acc,0.70961181724493") != std::string::npos);
}
