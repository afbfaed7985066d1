#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <utility>
#include <vector>

#include "mknn/classify.hpp"
#include "mknn/errors.hpp"
#include "mknn/metrics.hpp"
#include "mknn/optimize.hpp"

namespace mknn {

/// Read-only wrapper around a fitted model for sequential classification.
/// The model is never mutated; only the counters move.
class OnlineSession {
public:
    explicit OnlineSession(const MknnModel& model, int k_recon = 0)
        : model_(model), k_recon_(k_recon > 0 ? k_recon : model.k) {
        if (model.dataset.n() == 0) throw data_error("empty model");
        if (k_recon_ > model.dataset.n())
            throw data_error("k_recon exceeds model size");
        labeled_ = model.dataset.labeled_indices();
    }

    const MknnModel& model() const { return model_; }
    int k_recon() const { return k_recon_; }
    const std::vector<int>& labeled() const { return labeled_; }

    long points_classified() const { return points_classified_.load(); }
    double cumulative_seconds() const {
        return cumulative_ns_.load() * 1e-9;
    }

    void record(double seconds) {
        points_classified_.fetch_add(1);
        cumulative_ns_.fetch_add(static_cast<long long>(seconds * 1e9));
    }

private:
    const MknnModel& model_;
    int k_recon_;
    std::vector<int> labeled_;
    std::atomic<long> points_classified_{0};
    std::atomic<long long> cumulative_ns_{0};
};

struct OnlineResult {
    int predicted_class = 0;
    Eigen::VectorXd weights_to_labeled;  // length l, ordered as labeled_indices()
    double recon_error = 0.0;
    SimplexWeights z;
    std::vector<int> neighbor_indices;
    double seconds = 0.0;
};

/// Classify a never-seen point against the frozen model: Euclidean k_recon
/// nearest neighbors in the fitted set, simplex reconstruction of the point,
/// convex combination of the neighbors' labeled-restricted TRW weight rows,
/// then the usual top-k weighted vote.
inline OnlineResult classify_online(OnlineSession& session,
                                    const Eigen::VectorXd& x) {
    const auto t0 = std::chrono::steady_clock::now();
    const MknnModel& m = session.model();
    const Dataset& ds = m.dataset;
    if (x.size() != ds.d()) throw data_error("dimension mismatch");
    if (!x.allFinite()) throw data_error("non-finite query point");

    // Euclidean nearest neighbors in all of X.
    const int n = ds.n();
    std::vector<int> all(n);
    std::vector<double> negd2(n);
    for (int i = 0; i < n; ++i) {
        all[i] = i;
        negd2[i] = -(ds.samples.row(i).transpose() - x).squaredNorm();
    }
    const std::vector<int> nn =
        detail::top_k_by_score(all, negd2, session.k_recon());

    // Simplex reconstruction of x from its neighbors.
    Eigen::MatrixXd basis(ds.d(), nn.size());
    for (std::size_t a = 0; a < nn.size(); ++a)
        basis.col(a) = ds.samples.row(nn[a]).transpose();
    auto [z, report] = solve_simplex_lsq(x, basis);

    // Neighbors' TRW weight rows restricted to labeled columns.
    const std::vector<int>& labeled = session.labeled();
    Eigen::MatrixXd wk(nn.size(), labeled.size());
    for (std::size_t a = 0; a < nn.size(); ++a)
        for (std::size_t b = 0; b < labeled.size(); ++b)
            wk(a, b) = m.trw.sym_weights(nn[a], labeled[b]);
    const Eigen::VectorXd wbar = reconstruct_weights(wk, z);

    // Vote over the k largest reconstructed weights.
    std::vector<double> w(ds.n(), 0.0);
    for (std::size_t b = 0; b < labeled.size(); ++b) w[labeled[b]] = wbar(b);
    const std::vector<int> voters = detail::top_k_by_score(labeled, w, m.k);
    const int cls = detail::vote(voters, w, ds.labels, ds.num_classes).first;

    OnlineResult result;
    result.predicted_class = cls;
    result.weights_to_labeled = wbar;
    result.recon_error = report.objective;
    result.z = std::move(z);
    result.neighbor_indices = nn;
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    session.record(result.seconds);
    return result;
}

/// Sequentially classify a batch against the frozen model. Each point is
/// independent of the others, so results do not depend on batch order.
inline std::pair<std::vector<OnlineResult>, double> batch_online(
    OnlineSession& session, const std::vector<Eigen::VectorXd>& points) {
    std::vector<OnlineResult> results;
    results.reserve(points.size());
    double total = 0.0;
    for (const auto& x : points) {
        results.push_back(classify_online(session, x));
        total += results.back().seconds;
    }
    return {std::move(results), total};
}

/// Leave-one-out reconstruction diagnostic: rebuild every unlabeled sample
/// and its labeled-restricted TRW weight row from the sample's k nearest
/// neighbors (excluding itself). Returns {RMSE(X, X_hat), RMSE(W, W_hat)}
/// as percentages.
inline std::pair<double, double> loo_reconstruction(const MknnModel& m, int k) {
    const Dataset& ds = m.dataset;
    const std::vector<int> labeled = ds.labeled_indices();
    const std::vector<int> targets = ds.unlabeled_indices();
    if (targets.empty()) throw data_error("no unlabeled samples to reconstruct");
    if (k < 1 || k >= ds.n()) throw data_error("bad reconstruction k");

    const auto nt = static_cast<Eigen::Index>(targets.size());
    const auto nl = static_cast<Eigen::Index>(labeled.size());
    Eigen::MatrixXd x_truth(nt, ds.d()), x_recon(nt, ds.d());
    Eigen::MatrixXd w_truth(nt, nl), w_recon(nt, nl);

    // Labeled samples are excluded from the neighbor pool: their weight rows
    // contain self-similarity entries (the diagonal of sym_weights) that no
    // nearby sample shares, which would dominate the reconstruction error.
    std::vector<bool> is_labeled(ds.n(), false);
    for (int l : labeled) is_labeled[l] = true;

    for (Eigen::Index t = 0; t < nt; ++t) {
        const int i = targets[t];
        std::vector<int> cand;
        std::vector<double> negd2(ds.n(), 0.0);
        for (int j = 0; j < ds.n(); ++j) {
            negd2[j] = -(ds.samples.row(j) - ds.samples.row(i)).squaredNorm();
            if (j != i && !is_labeled[j]) cand.push_back(j);
        }
        const std::vector<int> nn = detail::top_k_by_score(cand, negd2, k);

        Eigen::MatrixXd basis(ds.d(), nn.size());
        Eigen::MatrixXd wk(nn.size(), nl);
        for (std::size_t a = 0; a < nn.size(); ++a) {
            basis.col(static_cast<Eigen::Index>(a)) =
                ds.samples.row(nn[a]).transpose();
            for (Eigen::Index b = 0; b < nl; ++b)
                wk(static_cast<Eigen::Index>(a), b) =
                    m.trw.sym_weights(nn[a], labeled[b]);
        }
        auto [z, report] = solve_simplex_lsq(ds.samples.row(i).transpose(), basis);
        (void)report;
        x_truth.row(t) = ds.samples.row(i);
        x_recon.row(t) = (basis * z.z).transpose();
        for (Eigen::Index b = 0; b < nl; ++b)
            w_truth(t, b) = m.trw.sym_weights(i, labeled[b]);
        w_recon.row(t) = reconstruct_weights(wk, z).transpose();
    }
    return {rmse(x_truth, x_recon), rmse(w_truth, w_recon)};
}

}  // namespace mknn
