#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <filesystem>

#include "mknn/dataset.hpp"
#include "mknn/graph.hpp"
#include "mknn/rng.hpp"
#include "mknn/trw.hpp"

using namespace mknn;

namespace {

// Random symmetric nonnegative weight matrix with positive degrees.
Eigen::MatrixXd random_valid_weights(int n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i) {
        w(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double v = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    // Guarantee no isolated vertex via a weak ring.
    for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        w(i, j) = std::max(w(i, j), 0.05);
        w(j, i) = w(i, j);
    }
    return w;
}

ConstrainedGraph graph_from(const Eigen::MatrixXd& w) {
    return ConstrainedGraph{w, GraphConfig{}};
}

// Truncated-series oracle for (I - alpha P)^-1 with alpha^T < 1e-12.
Eigen::MatrixXd series_oracle(const Eigen::MatrixXd& p, double alpha) {
    const int T =
        static_cast<int>(std::ceil(std::log(1e-12) / std::log(alpha))) + 1;
    const int n = static_cast<int>(p.rows());
    Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd ap = alpha * p;
    for (int t = 1; t <= T; ++t) {
        term = term * ap;
        sum += term;
    }
    return sum;
}

}  // namespace

TEST_CASE("transition_matrix basics") {
    SECTION("two-node swap graph") {
        Eigen::MatrixXd w(2, 2);
        w << 0, 1, 1, 0;
        auto [p, d] = transition_matrix(graph_from(w));
        CHECK(p(0, 1) == 1.0);
        CHECK(p(1, 0) == 1.0);
        CHECK(p(0, 0) == 0.0);
        CHECK(d(0) == 1.0);
        CHECK(d(1) == 1.0);
    }
    SECTION("uniform complete graph on 3 nodes") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 3);
        w.diagonal().setZero();
        auto [p, d] = transition_matrix(graph_from(w));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) CHECK(p(i, j) == 0.5);
    }
    SECTION("row sums are 1") {
        const Eigen::MatrixXd w = random_valid_weights(20, 5);
        auto [p, d] = transition_matrix(graph_from(w));
        for (int i = 0; i < 20; ++i)
            CHECK_THAT(p.row(i).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("isolated vertex is an explicit error") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
        w(0, 1) = w(1, 0) = 1.0;  // vertex 2 isolated
        CHECK_THROWS_WITH(transition_matrix(graph_from(w)),
                          Catch::Matchers::ContainsSubstring("isolated vertex 2"));
    }
}

TEST_CASE("trw_direct at vanishing alpha is the identity") {
    const Eigen::MatrixXd w = random_valid_weights(10, 1);
    auto [p, d] = transition_matrix(graph_from(w));
    const Eigen::MatrixXd x = trw_direct(p, 1e-300);
    CHECK((x - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trw_direct two-node closed form") {
    Eigen::MatrixXd p(2, 2);
    p << 0, 1, 1, 0;
    const Eigen::MatrixXd x = trw_direct(p, 0.5);
    CHECK_THAT(x(0, 0), Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-12));
    CHECK_THAT(x(0, 1), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(x(1, 0), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(x(1, 1), Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-12));
    // Truncated-series oracle agrees.
    CHECK((x - series_oracle(p, 0.5)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("trw_direct matches the truncated-series oracle on random graphs") {
    for (std::uint64_t seed : {11, 12, 13}) {
        const Eigen::MatrixXd w = random_valid_weights(30, seed);
        auto [p, d] = transition_matrix(graph_from(w));
        for (double alpha : {0.3, 0.5, 0.9}) {
            const Eigen::MatrixXd x = trw_direct(p, alpha);
            CHECK((x - series_oracle(p, alpha)).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("resolvent identity holds per column") {
    const Eigen::MatrixXd w = random_valid_weights(40, 21);
    auto [p, d] = transition_matrix(graph_from(w));
    const double alpha = 0.5;
    const Eigen::MatrixXd x = trw_direct(p, alpha);
    Eigen::MatrixXd r =
        (Eigen::MatrixXd::Identity(40, 40) - alpha * p) * x -
        Eigen::MatrixXd::Identity(40, 40);
    for (int j = 0; j < 40; ++j)
        CHECK(r.col(j).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("spd route equals the direct route") {
    SECTION("two-node example") {
        Eigen::MatrixXd w(2, 2);
        w << 0, 1, 1, 0;
        auto [p, d] = transition_matrix(graph_from(w));
        const Eigen::MatrixXd x = trw_spd(w, d, 0.5);
        CHECK_THAT(x(0, 0), Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-12));
        CHECK_THAT(x(0, 1), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    }
    SECTION("random graphs, n=200") {
        const Eigen::MatrixXd w = random_valid_weights(200, 31);
        auto [p, d] = transition_matrix(graph_from(w));
        for (double alpha : {0.3, 0.5, 0.9}) {
            const Eigen::MatrixXd direct = trw_direct(p, alpha);
            const Eigen::MatrixXd spd = trw_spd(w, d, alpha);
            CHECK((direct - spd).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
}

TEST_CASE("R matrix is positive definite on random valid graphs") {
    for (std::uint64_t seed : {41, 42}) {
        const Eigen::MatrixXd w = random_valid_weights(60, seed);
        const Eigen::VectorXd deg = w.rowwise().sum();
        const Eigen::VectorXd dmh = deg.cwiseSqrt().cwiseInverse();
        Eigen::MatrixXd r = -0.9 * (dmh.asDiagonal() * w * dmh.asDiagonal());
        r.diagonal().array() += 1.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("symmetric_weights") {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 0.2, 0.6, 1.0;
    const Eigen::MatrixXd s = symmetric_weights(m);
    CHECK(s(0, 1) == 0.4);
    CHECK(s(1, 0) == 0.4);
    // Symmetric input is unchanged.
    const Eigen::MatrixXd s2 = symmetric_weights(s);
    CHECK((s2 - s).cwiseAbs().maxCoeff() == 0.0);
    // Output minus transpose is exactly zero.
    const Eigen::MatrixXd big = symmetric_weights(random_valid_weights(30, 9));
    CHECK((big - Eigen::MatrixXd(big.transpose())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ptrw diagonal is at least 1") {
    const Eigen::MatrixXd w = random_valid_weights(50, 77);
    auto [p, d] = transition_matrix(graph_from(w));
    const Eigen::MatrixXd x = trw_direct(p, 0.7);
    CHECK(x.diagonal().minCoeff() >= 1.0);
}

TEST_CASE("fit_trw builds a consistent model and round trips to disk") {
    const Dataset ds = split(make_synthetic("two-arcs", 40, 0.05, 3), {3, 3});
    GraphConfig gcfg;
    gcfg.sigma = 0.3;
    const ConstrainedGraph g = build_constrained_graph(ds, gcfg);
    TrwConfig tcfg;
    const TrwModel m = fit_trw(g, tcfg);
    CHECK(m.n() == ds.n());
    for (int i = 0; i < m.n(); ++i)
        CHECK_THAT(m.transition.row(i).sum(), Catch::Matchers::WithinAbs(1.0, 1e-10));

    const TrwModel md = fit_trw(g, TrwConfig{0.5, TrwRoute::direct, 1e-12});
    CHECK((m.ptrw - md.ptrw).cwiseAbs().maxCoeff() <= 1e-9);

    const auto path =
        (std::filesystem::temp_directory_path() / "mknn_model.bin").string();
    save_trw(m, path);
    const TrwModel re = load_trw(path);
    CHECK(re.config.alpha == m.config.alpha);
    CHECK((re.ptrw.array() == m.ptrw.array()).all());
    CHECK((re.sym_weights.array() == m.sym_weights.array()).all());
    CHECK((re.transition.array() == m.transition.array()).all());
    CHECK((re.degrees.array() == m.degrees.array()).all());

    CHECK_THROWS_AS(load_trw("/nonexistent/model.bin"), data_error);
}
