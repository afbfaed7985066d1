#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>

#include "mknn/errors.hpp"
#include "mknn/graph.hpp"

namespace mknn {

enum class TrwRoute { direct, spd_fast };

struct TrwConfig {
    double alpha = 0.5;            // strength reduction rate, in (0,1)
    TrwRoute route = TrwRoute::spd_fast;
    double solve_tolerance = 1e-12;  // per-column residual bound

    void validate() const {
        if (alpha <= 0.0 || alpha >= 1.0)
            throw data_error("alpha must be in (0,1)");
        if (solve_tolerance <= 0.0)
            throw data_error("solve_tolerance must be positive");
    }
};

/// Fitted tired-random-walk similarity state.
struct TrwModel {
    Eigen::MatrixXd transition;   // P = D^-1 W, row stochastic
    Eigen::VectorXd degrees;      // diagonal of D
    Eigen::MatrixXd ptrw;         // (I - alpha P)^-1
    Eigen::MatrixXd sym_weights;  // (ptrw + ptrw^T) / 2
    TrwConfig config;

    int n() const { return static_cast<int>(ptrw.rows()); }
};

/// Row-normalize the graph weights into a transition matrix, returning
/// (P, degree vector). Zero-degree vertices are an error.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> transition_matrix(
    const ConstrainedGraph& g) {
    const Eigen::VectorXd deg = g.weights.rowwise().sum();
    for (int i = 0; i < g.n(); ++i)
        if (deg(i) <= 0.0)
            throw data_error("isolated vertex " + std::to_string(i) +
                             " (zero weight row)");
    Eigen::MatrixXd p = deg.cwiseInverse().asDiagonal() * g.weights;
    return {std::move(p), deg};
}

namespace detail {

// Max per-column inf-norm of (I - alpha P) X - I.
inline double resolvent_residual(const Eigen::MatrixXd& p, double alpha,
                                 const Eigen::MatrixXd& x) {
    const int n = static_cast<int>(p.rows());
    Eigen::MatrixXd r = x - alpha * (p * x);
    r.diagonal().array() -= 1.0;
    double worst = 0.0;
    for (int j = 0; j < n; ++j)
        worst = std::max(worst, r.col(j).cwiseAbs().maxCoeff());
    return worst;
}

}  // namespace detail

/// P_TRW = (I - alpha P)^-1 via a dense LU multi-RHS solve against the
/// identity, with iterative refinement until the per-column residual meets
/// `tol`.
inline Eigen::MatrixXd trw_direct(const Eigen::MatrixXd& p, double alpha,
                                  double tol = 1e-12) {
    const int n = static_cast<int>(p.rows());
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - alpha * p;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::MatrixXd x = lu.solve(Eigen::MatrixXd::Identity(n, n));
    if (!x.allFinite())
        throw numeric_error("singular system in trw_direct");
    for (int pass = 0; pass < 3 && detail::resolvent_residual(p, alpha, x) > tol;
         ++pass) {
        Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n, n) - a * x;
        x += lu.solve(r);
    }
    if (detail::resolvent_residual(p, alpha, x) > tol)
        throw numeric_error("trw_direct residual above tolerance");
    return x;
}

/// SPD route: P_TRW = D^{-1/2} R^{-1} D^{1/2} with
/// R = I - alpha D^{-1/2} W D^{-1/2}, solved by Cholesky.
inline Eigen::MatrixXd trw_spd(const Eigen::MatrixXd& w,
                               const Eigen::VectorXd& deg, double alpha,
                               double tol = 1e-12) {
    const int n = static_cast<int>(w.rows());
    if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw data_error("trw_spd requires a symmetric weight matrix");
    if ((deg.array() <= 0.0).any())
        throw data_error("trw_spd requires positive degrees");

    const Eigen::VectorXd dmh = deg.cwiseSqrt().cwiseInverse();  // D^{-1/2}
    Eigen::MatrixXd r = -alpha * (dmh.asDiagonal() * w * dmh.asDiagonal());
    r.diagonal().array() += 1.0;
    r = ((r + r.transpose()) / 2.0).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success)
        throw numeric_error("Cholesky factorization failed (R not SPD)");
    Eigen::MatrixXd rinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    for (int pass = 0; pass < 2; ++pass) {
        Eigen::MatrixXd res = Eigen::MatrixXd::Identity(n, n) - r * rinv;
        if (res.cwiseAbs().maxCoeff() <= tol) break;
        rinv += llt.solve(res);
    }
    // Conjugate back: (I - alpha D^{-1} W)^{-1} = D^{-1/2} R^{-1} D^{1/2}.
    const Eigen::VectorXd dph = deg.cwiseSqrt();
    return dmh.asDiagonal() * rinv * dph.asDiagonal();
}

/// Symmetric TRW weight, elementwise (M + M^T) / 2.
inline Eigen::MatrixXd symmetric_weights(const Eigen::MatrixXd& ptrw) {
    Eigen::MatrixXd s = (ptrw + ptrw.transpose()) / 2.0;
    // Force exact symmetry bit-for-bit.
    for (int i = 0; i < s.rows(); ++i)
        for (int j = i + 1; j < s.cols(); ++j) s(j, i) = s(i, j);
    return s;
}

/// Fit the full TRW model for a constrained graph.
inline TrwModel fit_trw(const ConstrainedGraph& g, const TrwConfig& cfg) {
    cfg.validate();
    TrwModel m;
    auto [p, deg] = transition_matrix(g);
    m.transition = std::move(p);
    m.degrees = std::move(deg);
    m.ptrw = (cfg.route == TrwRoute::spd_fast)
                 ? trw_spd(g.weights, m.degrees, cfg.alpha, cfg.solve_tolerance)
                 : trw_direct(m.transition, cfg.alpha, cfg.solve_tolerance);
    m.sym_weights = symmetric_weights(m.ptrw);
    m.config = cfg;
    return m;
}

namespace detail {

inline void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
}

inline void read_matrix(std::ifstream& in, Eigen::MatrixXd& m) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            m(i, j) = v;
        }
}

}  // namespace detail

inline constexpr char kTrwMagic[4] = {'T', 'R', 'W', 'M'};
inline constexpr std::uint8_t kTrwVersion = 1;

/// Binary model dump: magic, version byte, n, alpha, then degrees /
/// transition / ptrw / sym_weights as row-major little-endian doubles.
inline void save_trw(const TrwModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write file: " + path);
    out.write(kTrwMagic, 4);
    out.write(reinterpret_cast<const char*>(&kTrwVersion), 1);
    const std::uint64_t n = static_cast<std::uint64_t>(m.n());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&m.config.alpha), sizeof(double));
    for (int i = 0; i < m.n(); ++i) {
        const double v = m.degrees(i);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    detail::write_matrix(out, m.transition);
    detail::write_matrix(out, m.ptrw);
    detail::write_matrix(out, m.sym_weights);
    if (!out) throw data_error("write failed: " + path);
}

inline TrwModel load_trw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file: " + path);
    char magic[4];
    std::uint8_t version;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 1);
    if (!in || std::memcmp(magic, kTrwMagic, 4) != 0)
        throw data_error("not a TRW model file: " + path);
    if (version != kTrwVersion)
        throw data_error("unsupported TRW model version");
    std::uint64_t n64;
    in.read(reinterpret_cast<char*>(&n64), sizeof(n64));
    TrwModel m;
    in.read(reinterpret_cast<char*>(&m.config.alpha), sizeof(double));
    const int n = static_cast<int>(n64);
    m.degrees.resize(n);
    for (int i = 0; i < n; ++i) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m.degrees(i) = v;
    }
    m.transition.resize(n, n);
    m.ptrw.resize(n, n);
    m.sym_weights.resize(n, n);
    detail::read_matrix(in, m.transition);
    detail::read_matrix(in, m.ptrw);
    detail::read_matrix(in, m.sym_weights);
    if (!in) throw data_error("truncated TRW model file: " + path);
    return m;
}

}  // namespace mknn
