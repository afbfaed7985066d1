#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mknn/errors.hpp"

namespace mknn {

/// Fraction of mismatched entries.
inline double error_rate(const std::vector<int>& pred,
                         const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw data_error("error_rate: length mismatch");
    if (pred.empty()) throw data_error("error_rate: empty vectors");
    int wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) wrong += (pred[i] != truth[i]);
    return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

/// Relative reconstruction error ||T - R||^2 / ||T||^2 * 100%, squared
/// Frobenius norms.
inline double rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& recon) {
    if (truth.rows() != recon.rows() || truth.cols() != recon.cols())
        throw data_error("rmse: shape mismatch");
    const double tn = truth.squaredNorm();
    if (tn <= 0.0) throw data_error("rmse: zero-norm truth matrix");
    return (truth - recon).squaredNorm() / tn * 100.0;
}

/// Per-seed error rates for one swept parameter value.
struct ErrorReport {
    std::vector<double> per_seed_errors;
    double mean = 0.0;
    double stddev = 0.0;
    double param = 0.0;  // the swept k or labels-per-class value

    static ErrorReport from(const std::vector<double>& errors, double param) {
        ErrorReport r;
        r.per_seed_errors = errors;
        r.param = param;
        if (errors.empty()) return r;
        double sum = 0.0;
        for (double e : errors) sum += e;
        r.mean = sum / errors.size();
        if (errors.size() > 1) {
            double ss = 0.0;
            for (double e : errors) ss += (e - r.mean) * (e - r.mean);
            r.stddev = std::sqrt(ss / (errors.size() - 1));
        }
        return r;
    }
};

}  // namespace mknn
