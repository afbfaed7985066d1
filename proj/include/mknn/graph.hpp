#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mknn/dataset.hpp"
#include "mknn/errors.hpp"

namespace mknn {

struct GraphConfig {
    double sigma = 0.2;          // Gaussian kernel width
    int tree_depth = 2;          // R, levels of the strengthened tree
    double theta_fraction = 0.1; // applied theta = fraction * theta_bar
    int tree_branch = 3;         // neighbors per tree node
    bool self_loops = false;
    double sparsity_eps = 0.0;   // zero out kernel entries below this

    void validate() const {
        if (sigma <= 0.0) throw data_error("sigma must be positive");
        if (theta_fraction <= 0.0 || theta_fraction >= 1.0)
            throw data_error("theta_fraction must be in (0,1)");
        if (tree_depth < 0) throw data_error("tree_depth must be >= 0");
        if (tree_branch < 1) throw data_error("tree_branch must be >= 1");
    }
};

/// Symmetric nonnegative edge-weight matrix with must-link entries pinned
/// at 1 and cannot-link entries at 0.
struct ConstrainedGraph {
    Eigen::MatrixXd weights;  // n x n
    GraphConfig config;

    int n() const { return static_cast<int>(weights.rows()); }
};

/// Nearest-neighbor tree rooted at a labeled sample; a node never reappears
/// below a level that already contains it.
struct StrengthenedTree {
    struct Edge {
        int parent;
        int child;
        int level;  // child's level, 1..R
    };
    int root = -1;
    std::vector<std::vector<int>> levels;  // levels[0] == {root}
    std::vector<Edge> edges;
};

namespace detail {

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = sq.replicate(1, x.rows()) +
                         sq.transpose().replicate(x.rows(), 1) -
                         2.0 * (x * x.transpose());
    return d2.cwiseMax(0.0);
}

// `branch` nearest neighbors of `p` (excluding itself), ties to the lowest
// index.
inline std::vector<int> nearest_neighbors(const Eigen::MatrixXd& d2, int p,
                                          int branch) {
    const int n = static_cast<int>(d2.rows());
    std::vector<int> idx;
    idx.reserve(n - 1);
    for (int j = 0; j < n; ++j)
        if (j != p) idx.push_back(j);
    const int k = std::min<int>(branch, static_cast<int>(idx.size()));
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](int a, int b) {
                          if (d2(p, a) != d2(p, b)) return d2(p, a) < d2(p, b);
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

}  // namespace detail

/// Gaussian kernel matrix W_ij = exp(-||x_i - x_j||^2 / 2 sigma^2).
inline Eigen::MatrixXd gaussian_weights(const Dataset& ds, double sigma,
                                        bool self_loops = false) {
    if (sigma <= 0.0) throw data_error("sigma must be positive");
    Eigen::MatrixXd d2 = detail::squared_distances(ds.samples);
    if (!d2.allFinite()) throw numeric_error("non-finite pairwise distances");
    Eigen::MatrixXd w = (-d2 / (2.0 * sigma * sigma)).array().exp();
    // Flush vanishing kernel values to exact zero: they carry no information,
    // but once they (or their pairwise products) fall into the subnormal
    // range the downstream dense solves become pathologically slow on
    // hardware that microcodes denormal arithmetic. 1e-75 keeps every
    // product of two surviving weights comfortably normal.
    w = (w.array() < 1e-75).select(0.0, w);
    w = ((w + w.transpose()) / 2.0).eval();  // exact symmetry
    if (!self_loops) w.diagonal().setZero();
    return w;
}

/// Upper bound on the strengthening parameter for an edge of weight w,
/// min((1-w)/w, 1). Undefined for w <= 0.
inline double theta_bar(double w) {
    if (w <= 0.0)
        throw data_error("theta_bar undefined for nonpositive weight");
    if (w > 1.0) throw data_error("edge weight above 1");
    return std::min((1.0 - w) / w, 1.0);
}

/// Tree construction on a precomputed squared-distance matrix.
inline StrengthenedTree build_tree_from_distances(const Eigen::MatrixXd& d2,
                                                  int root, int depth,
                                                  int branch) {
    StrengthenedTree tree;
    tree.root = root;
    tree.levels.push_back({root});
    std::vector<char> seen(d2.rows(), 0);
    seen[root] = 1;

    for (int r = 1; r <= depth; ++r) {
        std::vector<int> level;
        std::vector<char> in_level(d2.rows(), 0);
        for (int p : tree.levels[r - 1]) {
            for (int c : detail::nearest_neighbors(d2, p, branch)) {
                if (seen[c] || in_level[c]) continue;
                in_level[c] = 1;
                level.push_back(c);
                tree.edges.push_back({p, c, r});
            }
        }
        if (level.empty()) break;
        for (int c : level) seen[c] = 1;
        tree.levels.push_back(std::move(level));
    }
    return tree;
}

/// Build the R-level nearest-neighbor tree rooted at a labeled sample.
/// Level r holds the `branch` nearest neighbors of each level r-1 node,
/// minus any node already present in an earlier level.
inline StrengthenedTree build_tree(const Dataset& ds, int root, int depth,
                                   int branch) {
    if (root < 0 || root >= ds.n()) throw data_error("tree root out of range");
    if (ds.labels[root] == 0) throw data_error("tree root must be labeled");
    if (depth < 1) throw data_error("tree depth must be >= 1");

    const Eigen::MatrixXd d2 = detail::squared_distances(ds.samples);
    return build_tree_from_distances(d2, root, depth, branch);
}

/// Constrained graph construction: Gaussian kernel on all pairs, must-link /
/// cannot-link overrides for labeled pairs, then tree strengthening
/// W_ij <- (1 + theta^r) W_ij along each labeled sample's strengthened tree.
/// Theta is evaluated per edge on the pre-strengthening weight; when several
/// trees touch the same edge the single largest factor wins.
inline ConstrainedGraph build_constrained_graph(const Dataset& ds,
                                                const GraphConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (ds.labeled_count() == 0) throw data_error("no labeled samples");

    const int n = ds.n();
    const Eigen::MatrixXd d2 = detail::squared_distances(ds.samples);
    Eigen::MatrixXd w = gaussian_weights(ds, cfg.sigma, cfg.self_loops);
    if (cfg.sparsity_eps > 0.0)
        w = (w.array() < cfg.sparsity_eps).select(0.0, w);

    // Constraint overrides for labeled pairs.
    const std::vector<int> labeled = ds.labeled_indices();
    for (int i : labeled) {
        for (int j : labeled) {
            if (i == j) continue;
            w(i, j) = (ds.labels[i] == ds.labels[j]) ? 1.0 : 0.0;
        }
    }

    // Tree strengthening on the pre-strengthening weights.
    if (cfg.tree_depth >= 1) {
        const Eigen::MatrixXd pre = w;
        Eigen::MatrixXd factor = Eigen::MatrixXd::Ones(n, n);
        for (int root : labeled) {
            const StrengthenedTree tree =
                build_tree_from_distances(d2, root, cfg.tree_depth, cfg.tree_branch);
            for (const auto& e : tree.edges) {
                const double pw = pre(e.parent, e.child);
                if (pw <= 0.0 || pw >= 1.0) continue;  // constraint edges stay put
                const double theta = cfg.theta_fraction * theta_bar(pw);
                const double f = 1.0 + std::pow(theta, e.level);
                // Strengthen the undirected edge: both entries get the factor
                // so the documented per-edge value survives symmetrization.
                factor(e.parent, e.child) = std::max(factor(e.parent, e.child), f);
                factor(e.child, e.parent) = std::max(factor(e.child, e.parent), f);
            }
        }
        w = pre.cwiseProduct(factor);
        w = ((w + w.transpose()) / 2.0).eval();
    }

    w = w.cwiseMax(0.0).cwiseMin(1.0);
    // Symmetrization cannot move constraint entries, but pin them exactly.
    for (int i : labeled)
        for (int j : labeled)
            if (i != j) w(i, j) = (ds.labels[i] == ds.labels[j]) ? 1.0 : 0.0;

    return ConstrainedGraph{std::move(w), cfg};
}

}  // namespace mknn
