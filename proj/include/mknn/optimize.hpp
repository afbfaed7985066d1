#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "mknn/errors.hpp"

namespace mknn {

/// Convex combination weights: z >= 0, sum z = 1.
struct SimplexWeights {
    Eigen::VectorXd z;
};

struct QpReport {
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    std::vector<int> active_set;  // indices held at zero
};

namespace detail {

// Solve min ||x - A_F u||^2 s.t. sum u = 1 restricted to the free set F,
// via the KKT system of the equality-constrained problem.
inline Eigen::VectorXd equality_constrained_step(const Eigen::MatrixXd& gram,
                                                 const Eigen::VectorXd& atb,
                                                 const std::vector<int>& free) {
    const int f = static_cast<int>(free.size());
    Eigen::MatrixXd kkt(f + 1, f + 1);
    Eigen::VectorXd rhs(f + 1);
    for (int a = 0; a < f; ++a) {
        for (int b = 0; b < f; ++b) kkt(a, b) = gram(free[a], free[b]);
        kkt(a, f) = 1.0;
        kkt(f, a) = 1.0;
        rhs(a) = atb(free[a]);
    }
    kkt(f, f) = 0.0;
    rhs(f) = 1.0;
    // FullPivLU tolerates rank-deficient Gram blocks (duplicate columns).
    Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
    return sol.head(f);
}

}  // namespace detail

/// Simplex-constrained least squares: min ||x - basis z||^2 with z >= 0 and
/// sum z = 1. Primal active-set method; ties on entering indices break
/// lexicographically. The report carries the objective and KKT residual.
inline std::pair<SimplexWeights, QpReport> solve_simplex_lsq(
    const Eigen::VectorXd& target, const Eigen::MatrixXd& basis) {
    const int k = static_cast<int>(basis.cols());
    if (k < 1) throw data_error("simplex solver needs at least one column");
    if (!target.allFinite() || !basis.allFinite())
        throw data_error("non-finite input to simplex solver");

    const Eigen::MatrixXd gram = basis.transpose() * basis;
    const Eigen::VectorXd atb = basis.transpose() * target;

    std::vector<int> free = {0};
    Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
    z(0) = 1.0;

    constexpr double kFeasTol = 1e-12;
    constexpr double kDualTol = 1e-10;
    QpReport report;
    const int max_iter = 50 * (k + 1);

    for (; report.iterations < max_iter; ++report.iterations) {
        const Eigen::VectorXd u =
            detail::equality_constrained_step(gram, atb, free);

        if (u.minCoeff() >= -kFeasTol) {
            for (int a = 0; a < static_cast<int>(free.size()); ++a)
                z(free[a]) = std::max(u(a), 0.0);
            for (int i = 0; i < k; ++i) {
                bool is_free = false;
                for (int fidx : free) is_free = is_free || (fidx == i);
                if (!is_free) z(i) = 0.0;
            }
            // Dual check: gradient of ||x - Az||^2 is 2(Gz - atb); with
            // multiplier lambda the KKT stationarity is g + lambda = mu >= 0
            // on active coordinates and 0 on free ones.
            const Eigen::VectorXd g = 2.0 * (gram * z - atb);
            double lambda = 0.0;
            for (int fidx : free) lambda -= g(fidx);
            lambda /= static_cast<double>(free.size());
            int enter = -1;
            double worst = -kDualTol;
            for (int i = 0; i < k; ++i) {
                bool is_free = false;
                for (int fidx : free) is_free = is_free || (fidx == i);
                if (is_free) continue;
                const double mu = g(i) + lambda;
                if (mu < worst) {  // strict: lexicographic tie-break on equal mu
                    worst = mu;
                    enter = i;
                }
            }
            if (enter < 0) break;  // optimal
            free.push_back(enter);
            std::sort(free.begin(), free.end());
        } else {
            // Step from z toward u, stopping at the first zero bound.
            double step = 1.0;
            int block = -1;
            for (int a = 0; a < static_cast<int>(free.size()); ++a) {
                if (u(a) < 0.0) {
                    const double zi = z(free[a]);
                    const double t = zi / (zi - u(a));
                    if (t < step) {
                        step = t;
                        block = free[a];
                    }
                }
            }
            for (int a = 0; a < static_cast<int>(free.size()); ++a) {
                const int i = free[a];
                z(i) = z(i) + step * (u(a) - z(i));
            }
            if (block >= 0) {
                z(block) = 0.0;
                free.erase(std::find(free.begin(), free.end(), block));
            }
            if (free.empty()) throw numeric_error("simplex solver stalled");
        }
    }

    // Renormalize away accumulated rounding in the sum constraint.
    const double sum = z.sum();
    if (sum <= 0.0) throw numeric_error("simplex solver produced zero weights");
    z /= sum;

    SimplexWeights weights{z};
    report.objective = (target - basis * z).squaredNorm();

    // KKT residual: primal feasibility plus stationarity/complementarity.
    const Eigen::VectorXd g = 2.0 * (gram * z - atb);
    double lambda = 0.0;
    int support = 0;
    for (int i = 0; i < k; ++i) {
        if (z(i) > kFeasTol) {
            lambda -= g(i);
            ++support;
        }
    }
    lambda /= std::max(support, 1);
    double res = std::abs(z.sum() - 1.0);
    res = std::max(res, -std::min(z.minCoeff(), 0.0));
    for (int i = 0; i < k; ++i) {
        const double mu = g(i) + lambda;
        if (z(i) > kFeasTol)
            res = std::max(res, std::abs(mu));
        else
            res = std::max(res, std::max(0.0, -mu));
        if (z(i) <= kFeasTol) report.active_set.push_back(i);
    }
    report.kkt_residual = res;
    return {weights, report};
}

/// Reconstruct a weight vector as the convex combination of neighbor weight
/// rows: w = max(0, W_k^T z), which equals W_k^T z for nonnegative inputs.
inline Eigen::VectorXd reconstruct_weights(const Eigen::MatrixXd& neighbor_weights,
                                           const SimplexWeights& weights) {
    if (neighbor_weights.rows() != weights.z.size())
        throw data_error("neighbor weight rows must match z length");
    Eigen::VectorXd w = neighbor_weights.transpose() * weights.z;
    return w.cwiseMax(0.0);
}

}  // namespace mknn
