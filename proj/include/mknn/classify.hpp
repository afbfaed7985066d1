#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "mknn/dataset.hpp"
#include "mknn/errors.hpp"
#include "mknn/graph.hpp"
#include "mknn/metrics.hpp"
#include "mknn/trw.hpp"

namespace mknn {

/// Fitted transductive mkNN model: TRW similarity over all n points plus the
/// working labels they were fitted with.
struct MknnModel {
    TrwModel trw;
    Dataset dataset;
    int k = 1;
};

struct TuneGrid {
    std::vector<double> sigma_values;
    std::vector<double> alpha_values;
    std::vector<int> geo_neighbors_values;
    int folds = 2;
};

struct TuneResult {
    double sigma = 0.0;
    double alpha = 0.0;
    int geo_neighbors = 0;
    double cv_error = 1.0;
};

/// Fit the graph + TRW model over all points (labeled and unlabeled).
inline MknnModel fit_mknn(const Dataset& ds, const GraphConfig& gcfg,
                          const TrwConfig& tcfg, int k) {
    ds.validate();
    const int l = ds.labeled_count();
    if (k < 1) throw data_error("k must be >= 1");
    if (k > l)
        throw data_error("k (" + std::to_string(k) + ") exceeds labeled count (" +
                         std::to_string(l) + ")");
    MknnModel m;
    m.dataset = ds;
    m.k = k;
    const ConstrainedGraph g = build_constrained_graph(ds, gcfg);
    m.trw = fit_trw(g, tcfg);
    return m;
}

namespace detail {

// Indices of the k largest entries of `score` over `candidates`; ties break
// toward the lower index.
inline std::vector<int> top_k_by_score(const std::vector<int>& candidates,
                                       const std::vector<double>& score, int k) {
    std::vector<int> idx = candidates;
    const int kk = std::min<int>(k, static_cast<int>(idx.size()));
    std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(),
                      [&](int a, int b) {
                          if (score[a] != score[b]) return score[a] > score[b];
                          return a < b;
                      });
    idx.resize(kk);
    return idx;
}

// Weighted vote: per-class sums of `weight` over `neighbors`; returns the
// argmax class (ties to the smallest class id) and the score vector.
inline std::pair<int, std::vector<double>> vote(
    const std::vector<int>& neighbors, const std::vector<double>& weight,
    const std::vector<int>& labels, int num_classes) {
    std::vector<double> score(num_classes + 1, 0.0);
    for (int j : neighbors) score[labels[j]] += weight[j];
    int best = 1;
    for (int c = 2; c <= num_classes; ++c)
        if (score[c] > score[best]) best = c;
    return {best, std::move(score)};
}

}  // namespace detail

/// Classify one unlabeled point by the k largest TRW weights to labeled
/// points. Returns the class and the per-class weight sums (index 1..C).
inline std::pair<int, std::vector<double>> classify_point(const MknnModel& m,
                                                          int idx) {
    const Dataset& ds = m.dataset;
    if (idx < 0 || idx >= ds.n()) throw data_error("index out of range");
    if (ds.labels[idx] != 0)
        throw data_error("classify_point requires an unlabeled index");

    const std::vector<int> labeled = ds.labeled_indices();
    std::vector<double> w(ds.n(), 0.0);
    for (int j : labeled) w[j] = m.trw.sym_weights(idx, j);
    const std::vector<int> nn = detail::top_k_by_score(labeled, w, m.k);
    auto [cls, score] = detail::vote(nn, w, ds.labels, ds.num_classes);
    return {cls, std::move(score)};
}

/// Transductively classify every unlabeled point. Returns the full label
/// vector (given labels kept in place) and the error rate against ground
/// truth over unlabeled points with known truth.
inline std::pair<std::vector<int>, double> classify_all(const MknnModel& m) {
    const Dataset& ds = m.dataset;
    std::vector<int> pred = ds.labels;
    std::vector<int> scored_pred, scored_truth;
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.labels[i] != 0) continue;
        pred[i] = classify_point(m, i).first;
        if (ds.truth[i] != 0) {
            scored_pred.push_back(pred[i]);
            scored_truth.push_back(ds.truth[i]);
        }
    }
    const double err =
        scored_pred.empty() ? 0.0 : error_rate(scored_pred, scored_truth);
    return {std::move(pred), err};
}

namespace detail {

inline void check_k_labeled(const Dataset& ds, int k) {
    const int l = ds.labeled_count();
    if (k < 1 || k > l)
        throw data_error("k must be in 1..l (l=" + std::to_string(l) + ")");
}

// Euclidean kNN vote for one query over the labeled set. `weighted` switches
// between plain counting and inverse-distance weights.
inline int euclidean_vote(const Dataset& ds, const std::vector<int>& labeled,
                          const Eigen::VectorXd& query, int k, bool weighted) {
    std::vector<double> negdist(ds.n(), 0.0);
    for (int j : labeled)
        negdist[j] = -(ds.samples.row(j).transpose() - query).norm();
    const std::vector<int> nn = top_k_by_score(labeled, negdist, k);
    std::vector<double> w(ds.n(), 1.0);
    if (weighted)
        for (int j : nn) w[j] = 1.0 / (-negdist[j] + 1e-12);
    return vote(nn, w, ds.labels, ds.num_classes).first;
}

}  // namespace detail

/// Plain Euclidean kNN majority vote; predictions for unlabeled rows, given
/// labels kept for labeled rows.
inline std::vector<int> knn_baseline(const Dataset& ds, int k) {
    detail::check_k_labeled(ds, k);
    const std::vector<int> labeled = ds.labeled_indices();
    std::vector<int> pred = ds.labels;
    for (int i = 0; i < ds.n(); ++i)
        if (ds.labels[i] == 0)
            pred[i] = detail::euclidean_vote(ds, labeled,
                                             ds.samples.row(i).transpose(), k,
                                             /*weighted=*/false);
    return pred;
}

/// kNN with inverse-distance vote weights 1/(d + 1e-12).
inline std::vector<int> wknn_baseline(const Dataset& ds, int k) {
    detail::check_k_labeled(ds, k);
    const std::vector<int> labeled = ds.labeled_indices();
    std::vector<int> pred = ds.labels;
    for (int i = 0; i < ds.n(); ++i)
        if (ds.labels[i] == 0)
            pred[i] = detail::euclidean_vote(ds, labeled,
                                             ds.samples.row(i).transpose(), k,
                                             /*weighted=*/true);
    return pred;
}

namespace detail {

// Geodesic distances from each labeled point to all points over the
// symmetric geo_neighbors-NN graph with Euclidean edge lengths. Returns an
// l x n matrix of path lengths (inf when unreachable), rows ordered as
// `labeled`.
inline Eigen::MatrixXd geodesic_from_labeled(const Dataset& ds,
                                             const std::vector<int>& labeled,
                                             int geo_neighbors) {
    const int n = ds.n();
    const Eigen::MatrixXd d2 = squared_distances(ds.samples);
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (int i = 0; i < n; ++i) {
        for (int j : nearest_neighbors(d2, i, geo_neighbors)) {
            const double len = std::sqrt(d2(i, j));
            adj[i].push_back({j, len});
            adj[j].push_back({i, len});  // symmetrize by union
        }
    }

    const double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd dist(labeled.size(), n);
    for (std::size_t s = 0; s < labeled.size(); ++s) {
        std::vector<double> d(n, inf);
        d[labeled[s]] = 0.0;
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> q;
        q.push({0.0, labeled[s]});
        while (!q.empty()) {
            auto [dv, v] = q.top();
            q.pop();
            if (dv > d[v]) continue;
            for (auto [u, len] : adj[v]) {
                if (d[v] + len < d[u]) {
                    d[u] = d[v] + len;
                    q.push({d[u], u});
                }
            }
        }
        for (int i = 0; i < n; ++i) dist(s, i) = d[i];
    }
    return dist;
}

}  // namespace detail

/// Geodesic kNN: shortest-path distances on a symmetric geo_neighbors-NN
/// graph replace Euclidean distance in the vote. Unreachable labeled points
/// are excluded; a query with no reachable labeled point falls back to
/// Euclidean kNN.
inline std::vector<int> gknn_baseline(const Dataset& ds, int k,
                                      int geo_neighbors) {
    detail::check_k_labeled(ds, k);
    if (geo_neighbors < 1) throw data_error("geo_neighbors must be >= 1");
    const std::vector<int> labeled = ds.labeled_indices();
    const Eigen::MatrixXd geo =
        detail::geodesic_from_labeled(ds, labeled, geo_neighbors);

    std::vector<int> pred = ds.labels;
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.labels[i] != 0) continue;
        std::vector<int> reachable;
        std::vector<double> negdist(ds.n(), 0.0);
        for (std::size_t s = 0; s < labeled.size(); ++s) {
            if (std::isfinite(geo(s, i))) {
                reachable.push_back(labeled[s]);
                negdist[labeled[s]] = -geo(s, i);
            }
        }
        if (reachable.empty()) {
            pred[i] = detail::euclidean_vote(ds, labeled,
                                             ds.samples.row(i).transpose(), k,
                                             /*weighted=*/false);
            continue;
        }
        const std::vector<int> nn = detail::top_k_by_score(reachable, negdist, k);
        std::vector<double> ones(ds.n(), 1.0);
        pred[i] = detail::vote(nn, ones, ds.labels, ds.num_classes).first;
    }
    return pred;
}

namespace detail {

// Stratified fold assignment of the labeled set: returns fold id (0..folds-1)
// per labeled index, seeded and deterministic.
inline std::vector<std::pair<int, int>> stratified_folds(const Dataset& ds,
                                                         int folds,
                                                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<int, int>> assignment;  // (index, fold)
    for (int c = 1; c <= ds.num_classes; ++c) {
        std::vector<int> members;
        for (int i = 0; i < ds.n(); ++i)
            if (ds.labels[i] == c) members.push_back(i);
        rng.shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i)
            assignment.push_back({members[i], static_cast<int>(i) % folds});
    }
    return assignment;
}

// CV error of one parameter point: hold out each fold of the labeled set in
// turn, fit on the rest (unlabeled points join the graph but are never
// scored), score on the held-out fold.
inline double cv_error(const Dataset& ds, const std::string& algorithm,
                       double sigma, double alpha, int geo_neighbors, int k,
                       const GraphConfig& gcfg_base, const TrwConfig& tcfg_base,
                       const std::vector<std::pair<int, int>>& folds_of,
                       int folds) {
    double err_sum = 0.0;
    int scored = 0;
    for (int f = 0; f < folds; ++f) {
        Dataset work = ds;
        std::vector<int> holdout;
        for (auto [i, fold] : folds_of) {
            if (fold == f) {
                work.labels[i] = 0;
                holdout.push_back(i);
            }
        }
        if (holdout.empty() || work.labeled_count() == 0) continue;

        std::vector<int> pred;
        if (algorithm == "mknn") {
            GraphConfig gcfg = gcfg_base;
            gcfg.sigma = sigma;
            TrwConfig tcfg = tcfg_base;
            tcfg.alpha = alpha;
            const int kk = std::min(k, work.labeled_count());
            pred = classify_all(fit_mknn(work, gcfg, tcfg, kk)).first;
        } else if (algorithm == "gknn") {
            pred = gknn_baseline(work, std::min(k, work.labeled_count()),
                                 geo_neighbors);
        } else if (algorithm == "wknn") {
            pred = wknn_baseline(work, std::min(k, work.labeled_count()));
        } else if (algorithm == "knn") {
            pred = knn_baseline(work, std::min(k, work.labeled_count()));
        } else {
            throw data_error("unknown algorithm: " + algorithm);
        }
        for (int i : holdout) {
            err_sum += (pred[i] != ds.labels[i]) ? 1.0 : 0.0;
            ++scored;
        }
    }
    return scored > 0 ? err_sum / scored : 1.0;
}

}  // namespace detail

/// Grid-search parameters by stratified 2-fold CV over the labeled set.
/// Ties go to the first grid point in declared order.
inline TuneResult tune(const Dataset& ds, const std::string& algorithm,
                       const TuneGrid& grid, std::uint64_t seed, int k,
                       const GraphConfig& gcfg_base = GraphConfig{},
                       const TrwConfig& tcfg_base = TrwConfig{}) {
    ds.validate();
    const int folds = grid.folds > 0 ? grid.folds : 2;
    const auto folds_of = detail::stratified_folds(ds, folds, seed);

    // Assemble the grid in declared order.
    std::vector<TuneResult> points;
    if (algorithm == "mknn") {
        if (grid.sigma_values.empty() || grid.alpha_values.empty())
            throw data_error("empty tuning grid");
        for (double s : grid.sigma_values)
            for (double a : grid.alpha_values)
                points.push_back({s, a, 0, 1.0});
    } else if (algorithm == "gknn") {
        if (grid.geo_neighbors_values.empty())
            throw data_error("empty tuning grid");
        for (int g : grid.geo_neighbors_values) points.push_back({0.0, 0.0, g, 1.0});
    } else if (algorithm == "knn" || algorithm == "wknn") {
        points.push_back({0.0, 0.0, 0, 1.0});
    } else {
        throw data_error("unknown algorithm: " + algorithm);
    }

    TuneResult best;
    bool have_best = false;
    for (auto& p : points) {
        p.cv_error = detail::cv_error(ds, algorithm, p.sigma, p.alpha,
                                      p.geo_neighbors, k, gcfg_base, tcfg_base,
                                      folds_of, folds);
        if (!have_best || p.cv_error < best.cv_error) {
            best = p;
            have_best = true;
        }
    }
    return best;
}

}  // namespace mknn
