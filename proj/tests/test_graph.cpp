#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <set>
#include <vector>

#include "mknn/dataset.hpp"
#include "mknn/graph.hpp"

using namespace mknn;

namespace {

Dataset points_dataset(const Eigen::MatrixXd& pts, std::vector<int> labels,
                       int num_classes) {
    Dataset ds;
    ds.samples = pts;
    ds.truth = labels;
    ds.labels = std::move(labels);
    ds.num_classes = num_classes;
    return ds;
}

}  // namespace

TEST_CASE("gaussian_weights analytic values") {
    Eigen::MatrixXd pts(3, 1);
    pts << 0.0, 0.0, 1.0;  // points 0 and 1 coincide
    Dataset ds = points_dataset(pts, {0, 0, 1}, 1);

    SECTION("coincident points get weight 1") {
        const Eigen::MatrixXd w = gaussian_weights(ds, 0.5);
        CHECK(w(0, 1) == 1.0);
    }
    SECTION("distance^2 = 2 sigma^2 gives e^-1") {
        // sigma chosen so ||x0 - x2||^2 = 1 = 2 sigma^2.
        const double sigma = std::sqrt(0.5);
        const Eigen::MatrixXd w = gaussian_weights(ds, sigma);
        CHECK_THAT(w(0, 2), Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-12));
    }
    SECTION("diagonal zero unless self loops") {
        CHECK(gaussian_weights(ds, 1.0).diagonal().isZero());
        CHECK(gaussian_weights(ds, 1.0, true).diagonal().isApproxToConstant(1.0));
    }
}

TEST_CASE("gaussian_weights matches an elementwise oracle") {
    Eigen::MatrixXd pts(3, 2);
    pts << 0.0, 0.0, 1.0, 0.5, -0.3, 2.0;
    Dataset ds = points_dataset(pts, {1, 0, 0}, 1);
    const double sigma = 1.0;
    const Eigen::MatrixXd w = gaussian_weights(ds, sigma);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (i == j) continue;
            const double d2 = (pts.row(i) - pts.row(j)).squaredNorm();
            const double expect = std::exp(-d2 / (2.0 * sigma * sigma));
            CHECK_THAT(w(i, j), Catch::Matchers::WithinAbs(expect, 1e-14));
        }
    }
    CHECK((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("theta_bar formula and edge cases") {
    CHECK(theta_bar(1.0) == 0.0);
    CHECK(theta_bar(0.5) == 1.0);
    CHECK(theta_bar(0.2) == 1.0);
    CHECK_THAT(theta_bar(0.8), Catch::Matchers::WithinAbs(0.25, 1e-15));
    CHECK_THROWS_AS(theta_bar(0.0), data_error);
    CHECK_THROWS_AS(theta_bar(-0.1), data_error);
}

TEST_CASE("build_tree depth 1 is root plus nearest neighbors") {
    Eigen::MatrixXd pts(5, 1);
    pts << 0.0, 1.0, 2.0, 3.0, 4.0;
    Dataset ds = points_dataset(pts, {1, 0, 0, 0, 0}, 1);
    const StrengthenedTree t = build_tree(ds, 0, 1, 2);
    REQUIRE(t.levels.size() == 2);
    CHECK(t.levels[0] == std::vector<int>{0});
    CHECK(t.levels[1] == std::vector<int>{1, 2});
    for (const auto& e : t.edges) CHECK(e.level == 1);
}

TEST_CASE("ancestor nodes are never re-added") {
    // Point 1's nearest neighbor is the root 0; the root must not reappear
    // at level 2.
    Eigen::MatrixXd pts(4, 1);
    pts << 0.0, 0.4, 1.2, 2.4;
    Dataset ds = points_dataset(pts, {1, 0, 0, 0}, 1);
    const StrengthenedTree t = build_tree(ds, 0, 3, 1);
    std::set<int> seen;
    for (const auto& level : t.levels) {
        for (int v : level) {
            CHECK(seen.count(v) == 0);
            seen.insert(v);
        }
    }
}

namespace {

// Brute-force BFS-with-ancestor-pruning oracle for tree levels.
std::vector<std::vector<int>> tree_oracle(const Eigen::MatrixXd& pts, int root,
                                          int depth, int branch) {
    const int n = static_cast<int>(pts.rows());
    std::vector<std::vector<int>> levels = {{root}};
    std::set<int> seen = {root};
    for (int r = 1; r <= depth; ++r) {
        std::vector<int> level;
        std::set<int> in_level;
        for (int p : levels[r - 1]) {
            std::vector<std::pair<double, int>> cand;
            for (int j = 0; j < n; ++j)
                if (j != p) cand.push_back({(pts.row(p) - pts.row(j)).squaredNorm(), j});
            std::sort(cand.begin(), cand.end());
            for (int a = 0; a < std::min<int>(branch, cand.size()); ++a) {
                const int c = cand[a].second;
                if (seen.count(c) || in_level.count(c)) continue;
                in_level.insert(c);
                level.push_back(c);
            }
        }
        if (level.empty()) break;
        for (int c : level) seen.insert(c);
        levels.push_back(level);
    }
    return levels;
}

}  // namespace

TEST_CASE("10-point line tree matches the brute-force oracle") {
    Eigen::MatrixXd pts(10, 1);
    for (int i = 0; i < 10; ++i) pts(i, 0) = i;
    Dataset ds = points_dataset(pts, {0, 0, 0, 1, 0, 0, 0, 0, 0, 0}, 1);
    const StrengthenedTree t = build_tree(ds, 3, 3, 2);
    const auto oracle = tree_oracle(pts, 3, 3, 2);
    REQUIRE(t.levels.size() == oracle.size());
    for (std::size_t r = 0; r < oracle.size(); ++r) CHECK(t.levels[r] == oracle[r]);
}

TEST_CASE("build_tree preconditions") {
    Eigen::MatrixXd pts(3, 1);
    pts << 0.0, 1.0, 2.0;
    Dataset ds = points_dataset(pts, {1, 0, 0}, 1);
    CHECK_THROWS_AS(build_tree(ds, 1, 2, 1), data_error);  // unlabeled root
    CHECK_THROWS_AS(build_tree(ds, 0, 0, 1), data_error);  // depth < 1
}

TEST_CASE("constrained graph constraint overrides") {
    Eigen::MatrixXd pts(4, 1);
    pts << 0.0, 10.0, 0.0, 5.0;  // 0,1 labeled same class; 2 labeled other at 0 distance from 0
    Dataset ds = points_dataset(pts, {1, 1, 2, 0}, 2);
    GraphConfig cfg;
    cfg.sigma = 1.0;
    cfg.tree_depth = 1;
    cfg.tree_branch = 1;
    const ConstrainedGraph g = build_constrained_graph(ds, cfg);
    CHECK(g.weights(0, 1) == 1.0);  // must-link despite distance 10
    CHECK(g.weights(0, 2) == 0.0);  // cannot-link despite distance 0
    CHECK(g.weights(1, 2) == 0.0);
    CHECK((g.weights - Eigen::MatrixXd(g.weights.transpose())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("strengthening on a level-1 edge multiplies by 1 + theta") {
    // Two far-apart labeled roots of different classes plus one unlabeled
    // point. Pre-weight of edge (0,2) is set to 0.5 by choosing sigma.
    const double dist = 1.0;
    const double sigma = std::sqrt(-dist * dist / (2.0 * std::log(0.5)));
    Eigen::MatrixXd pts(3, 1);
    pts << 0.0, 100.0, dist;
    Dataset ds = points_dataset(pts, {1, 2, 0}, 2);
    GraphConfig cfg;
    cfg.sigma = sigma;
    cfg.tree_depth = 1;
    cfg.tree_branch = 1;
    cfg.theta_fraction = 0.1;
    const ConstrainedGraph g = build_constrained_graph(ds, cfg);
    // theta_bar(0.5) = 1, applied theta = 0.1, factor (1 + 0.1) on level 1.
    CHECK_THAT(g.weights(0, 2), Catch::Matchers::WithinAbs(0.55, 1e-12));
    CHECK(g.weights(2, 0) == g.weights(0, 2));
}

TEST_CASE("strengthening factor decays with level") {
    for (double theta : {0.05, 0.1, 0.5, 0.9}) {
        for (int r = 1; r < 6; ++r) {
            CHECK(1.0 + std::pow(theta, r + 1) < 1.0 + std::pow(theta, r));
        }
    }
}

TEST_CASE("constrained graph invariants on seeded fixtures") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Dataset full = make_synthetic("two-arcs", 40, 0.05, seed);
        const Dataset ds = split(full, {3, seed});
        GraphConfig cfg;
        cfg.sigma = 0.3;
        cfg.tree_depth = 2;
        cfg.tree_branch = 3;
        const ConstrainedGraph g = build_constrained_graph(ds, cfg);

        CHECK((g.weights - Eigen::MatrixXd(g.weights.transpose())).cwiseAbs().maxCoeff() == 0.0);
        CHECK(g.weights.minCoeff() >= 0.0);
        CHECK(g.weights.maxCoeff() <= 1.0);
        CHECK(g.weights.diagonal().isZero());

        const auto labeled = ds.labeled_indices();
        for (int i : labeled) {
            for (int j : labeled) {
                if (i == j) continue;
                if (ds.labels[i] == ds.labels[j])
                    CHECK(g.weights(i, j) == 1.0);
                else
                    CHECK(g.weights(i, j) == 0.0);
            }
        }
        // Non-constraint entries stay strictly below 1.
        for (int i = 0; i < ds.n(); ++i) {
            for (int j = 0; j < ds.n(); ++j) {
                if (i == j || (ds.labels[i] != 0 && ds.labels[j] != 0)) continue;
                CHECK(g.weights(i, j) < 1.0);
            }
        }

        // Determinism: identical inputs, identical bytes.
        const ConstrainedGraph g2 = build_constrained_graph(ds, cfg);
        CHECK((g.weights.array() == g2.weights.array()).all());
    }
}
