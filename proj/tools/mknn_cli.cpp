// Command-line harness: synthetic data generation, benchmark sweeps, online
// classification timing, reconstruction diagnostics, and parameter tuning.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mknn/mknn.hpp"

namespace fs = std::filesystem;
using namespace mknn;

namespace {

struct DatasetFlags {
    std::string data_path;
    std::string label_column = "label";
    std::string unlabeled_marker = "?";
    std::string kind = "two-arcs";
    int per_class = 500;
    double noise = 0.05;
    std::uint64_t gen_seed = 7;
    int bridge = -1;
    bool zscore = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", data_path, "CSV dataset path (overrides generator)");
        cmd->add_option("--label-column", label_column, "label column name or index");
        cmd->add_option("--unlabeled-marker", unlabeled_marker, "token for unlabeled rows");
        cmd->add_option("--kind", kind, "synthetic kind")
            ->check(CLI::IsMember({"two-arcs", "arch-and-s", "circles", "noisy-gap"}));
        cmd->add_option("--per-class", per_class, "synthetic points per class");
        cmd->add_option("--noise", noise, "synthetic Gaussian jitter");
        cmd->add_option("--gen-seed", gen_seed, "synthetic generator seed");
        cmd->add_option("--bridge", bridge, "bridging points per class (-1 = kind default)");
        cmd->add_flag("--standardize", zscore, "z-score features before fitting");
    }

    Dataset load() const {
        Dataset ds = data_path.empty()
                         ? make_synthetic(kind, per_class, noise, gen_seed, bridge)
                         : load_csv(data_path, label_column, unlabeled_marker);
        if (zscore) standardize(ds);
        return ds;
    }
};

// Atomic file write: temp file in the same directory, then rename.
void write_file(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw data_error("cannot write file: " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

std::string format(const char* fmt, ...) {
    char buf[256];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::strtod(tok.c_str(), nullptr));
    }
    return out;
}

int worker_count() {
    const char* env = std::getenv("MKNN_WORKERS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

// Deterministic parallel map: results land in slot order no matter which
// thread finishes first.
template <typename Fn>
void parallel_for(int count, Fn&& fn) {
    const int workers = std::min(worker_count(), count > 0 ? count : 1);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Error rate of a full prediction vector over unlabeled points with truth.
double score_unlabeled(const Dataset& ds, const std::vector<int>& pred) {
    std::vector<int> p, t;
    for (int i : ds.unlabeled_indices()) {
        if (ds.truth[i] != 0) {
            p.push_back(pred[i]);
            t.push_back(ds.truth[i]);
        }
    }
    if (p.empty()) return 0.0;
    return error_rate(p, t);
}

TuneGrid default_mknn_grid() {
    TuneGrid g;
    g.sigma_values = {0.05, 0.1, 0.2, 0.4, 0.8};
    g.alpha_values = {0.5};
    g.geo_neighbors_values = {3, 5, 8};
    return g;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
    std::string kind = "two-arcs";
    int per_class = 500;
    double noise = 0.05;
    std::uint64_t seed = 7;
    int bridge = -1;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    const Dataset ds = make_synthetic(a.kind, a.per_class, a.noise, a.seed, a.bridge);
    const fs::path tmp = fs::path(a.out).string() + ".tmp";
    if (fs::path(a.out).has_parent_path())
        fs::create_directories(fs::path(a.out).parent_path());
    save_csv(ds, tmp.string());
    fs::rename(tmp, a.out);
    std::printf("n=%d d=%d C=%d\n", ds.n(), ds.d(), ds.num_classes);
    return 0;
}

// ---------------------------------------------------------------- bench ----

struct BenchArgs {
    DatasetFlags data;
    std::string algorithms = "knn,wknn,gknn,mknn";
    int k_min = 1;
    int k_max = 10;
    int labels_per_class = 3;
    int seeds = 10;
    double sigma = 0.0;       // 0 = tune
    double alpha = 0.5;
    int geo_neighbors = 0;    // 0 = tune
    int tree_depth = 2;
    int tree_branch = 3;
    double theta_fraction = 0.1;
    std::string out_dir = "bench_out";
};

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

int cmd_bench(const BenchArgs& a) {
    const Dataset base = a.data.load();
    const std::vector<std::string> algs = split_list(a.algorithms);
    if (algs.empty()) throw data_error("no algorithms given");
    if (a.k_min < 1 || a.k_max < a.k_min) throw data_error("bad k sweep bounds");

    struct Row {
        std::string alg;
        int k;
        int seed;
        double error;
    };
    struct Task {
        std::string alg;
        int seed;
    };
    std::vector<Task> tasks;
    for (const auto& alg : algs)
        for (int s = 0; s < a.seeds; ++s) tasks.push_back({alg, s});

    std::vector<std::vector<Row>> results(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), [&](int ti) {
        const auto& task = tasks[ti];
        const Dataset ds =
            split(base, {a.labels_per_class, static_cast<std::uint64_t>(task.seed)});

        // Resolve parameters: fixed flags win, otherwise 2-fold CV tuning.
        double sigma = a.sigma;
        int geo = a.geo_neighbors;
        if (task.alg == "mknn" && sigma <= 0.0) {
            TuneGrid grid = default_mknn_grid();
            grid.alpha_values = {a.alpha};
            sigma = tune(ds, "mknn", grid, task.seed, std::min(a.k_max, ds.labeled_count()))
                        .sigma;
        }
        if (task.alg == "gknn" && geo <= 0) {
            geo = tune(ds, "gknn", default_mknn_grid(), task.seed,
                       std::min(a.k_max, ds.labeled_count()))
                      .geo_neighbors;
        }

        for (int k = a.k_min; k <= std::min(a.k_max, ds.labeled_count()); ++k) {
            std::vector<int> pred;
            if (task.alg == "mknn") {
                GraphConfig gcfg;
                gcfg.sigma = sigma;
                gcfg.tree_depth = a.tree_depth;
                gcfg.tree_branch = a.tree_branch;
                gcfg.theta_fraction = a.theta_fraction;
                TrwConfig tcfg;
                tcfg.alpha = a.alpha;
                pred = classify_all(fit_mknn(ds, gcfg, tcfg, k)).first;
            } else if (task.alg == "gknn") {
                pred = gknn_baseline(ds, k, geo);
            } else if (task.alg == "wknn") {
                pred = wknn_baseline(ds, k);
            } else if (task.alg == "knn") {
                pred = knn_baseline(ds, k);
            } else {
                throw data_error("unknown algorithm: " + task.alg);
            }
            results[ti].push_back({task.alg, k, task.seed, score_unlabeled(ds, pred)});
        }
    });

    std::string curve = "algorithm,k,labels_per_class,seed,error\n";
    for (const auto& rows : results)
        for (const auto& r : rows)
            curve += format("%s,%d,%d,%d,%.10f\n", r.alg.c_str(), r.k,
                            a.labels_per_class, r.seed, r.error);
    write_file((fs::path(a.out_dir) / "curves.csv").string(), curve);

    std::string summary;
    for (const auto& alg : algs) {
        for (int k = a.k_min; k <= a.k_max; ++k) {
            std::vector<double> errs;
            for (const auto& rows : results)
                for (const auto& r : rows)
                    if (r.alg == alg && r.k == k) errs.push_back(r.error);
            if (errs.empty()) continue;
            const ErrorReport rep = ErrorReport::from(errs, k);
            summary += format(
                "{\"algorithm\":\"%s\",\"k\":%d,\"labels_per_class\":%d,"
                "\"mean_error\":%.10f,\"stddev\":%.10f}\n",
                alg.c_str(), k, a.labels_per_class, rep.mean, rep.stddev);
        }
    }
    write_file((fs::path(a.out_dir) / "summary.jsonl").string(), summary);
    std::printf("wrote %s\n", (fs::path(a.out_dir) / "curves.csv").c_str());
    return 0;
}

// --------------------------------------------------------------- online ----

struct OnlineArgs {
    DatasetFlags data;
    int labels_per_class = 10;
    int online_count = 100;
    int refit_sample = 5;
    double sigma = 0.2;
    double alpha = 0.5;
    int k = 5;
    std::uint64_t seed = 1;
    std::string out_dir = "online_out";
};

int cmd_online(const OnlineArgs& a) {
    const Dataset full = a.data.load();
    if (a.online_count < 0 || a.online_count >= full.n())
        throw data_error("online count out of range");

    // Seeded partition into base and online sets.
    std::vector<int> order(full.n());
    for (int i = 0; i < full.n(); ++i) order[i] = i;
    Rng rng(a.seed);
    rng.shuffle(order);
    std::vector<int> online_idx(order.begin(), order.begin() + a.online_count);
    std::vector<int> base_idx(order.begin() + a.online_count, order.end());
    std::sort(online_idx.begin(), online_idx.end());
    std::sort(base_idx.begin(), base_idx.end());

    auto subset = [&](const std::vector<int>& idx) {
        Dataset out;
        out.samples.resize(idx.size(), full.d());
        out.labels.resize(idx.size());
        out.truth.resize(idx.size());
        out.num_classes = full.num_classes;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.samples.row(i) = full.samples.row(idx[i]);
            out.labels[i] = full.labels[idx[i]];
            out.truth[i] = full.truth[idx[i]];
        }
        return out;
    };

    const Dataset base = split(subset(base_idx), {a.labels_per_class, a.seed});
    GraphConfig gcfg;
    gcfg.sigma = a.sigma;
    TrwConfig tcfg;
    tcfg.alpha = a.alpha;

    const double fit_t0 = now_seconds();
    const MknnModel model = fit_mknn(base, gcfg, tcfg, a.k);
    const double fit_seconds = now_seconds() - fit_t0;

    if (a.online_count == 0) {
        write_file((fs::path(a.out_dir) / "online.csv").string(),
                   "point,seq_predicted,std_predicted,truth\n");
        write_file((fs::path(a.out_dir) / "summary.jsonl").string(),
                   "{\"online_count\":0}\n");
        write_file((fs::path(a.out_dir) / "timings.txt").string(),
                   format("fit_seconds=%.6f\n", fit_seconds));
        std::printf("fit_seconds=%.6f online_count=0\n", fit_seconds);
        return 0;
    }

    OnlineSession session(model);
    const Dataset online_ds = subset(online_idx);
    std::vector<Eigen::VectorXd> stream;
    for (int i = 0; i < online_ds.n(); ++i)
        stream.push_back(online_ds.samples.row(i).transpose());
    auto [results, seq_seconds] = batch_online(session, stream);

    // Standard mkNN: transductive refit with the online points included.
    Dataset joint = base;
    const int nb = base.n();
    joint.samples.conservativeResize(nb + online_ds.n(), base.d());
    for (int i = 0; i < online_ds.n(); ++i) {
        joint.samples.row(nb + i) = online_ds.samples.row(i);
        joint.labels.push_back(0);
        joint.truth.push_back(online_ds.truth[i]);
    }
    const MknnModel joint_model = fit_mknn(joint, gcfg, tcfg, a.k);
    const auto [joint_pred, joint_err] = classify_all(joint_model);
    (void)joint_err;

    // Estimate per-point refit cost by timing a few actual refits.
    const int sample = std::min(a.refit_sample, online_ds.n());
    double sampled_refit_seconds = 0.0;
    for (int i = 0; i < sample; ++i) {
        Dataset one = base;
        one.samples.conservativeResize(nb + 1, base.d());
        one.samples.row(nb) = online_ds.samples.row(i);
        one.labels.push_back(0);
        one.truth.push_back(online_ds.truth[i]);
        const double t0 = now_seconds();
        const MknnModel om = fit_mknn(one, gcfg, tcfg, a.k);
        classify_point(om, nb);
        sampled_refit_seconds += now_seconds() - t0;
    }
    const double est_standard_seconds =
        sample > 0 ? sampled_refit_seconds / sample * online_ds.n() : 0.0;

    int agree = 0;
    std::vector<int> seq_pred, std_pred, truth;
    std::string rows = "point,seq_predicted,std_predicted,truth\n";
    std::vector<double> latencies;
    for (int i = 0; i < online_ds.n(); ++i) {
        const int sp = results[i].predicted_class;
        const int jp = joint_pred[nb + i];
        agree += (sp == jp);
        seq_pred.push_back(sp);
        std_pred.push_back(jp);
        truth.push_back(online_ds.truth[i]);
        latencies.push_back(results[i].seconds);
        rows += format("%d,%d,%d,%d\n", i, sp, jp, online_ds.truth[i]);
    }
    write_file((fs::path(a.out_dir) / "online.csv").string(), rows);

    std::sort(latencies.begin(), latencies.end());
    auto pct = [&](double q) {
        const int i = std::min<int>(static_cast<int>(q * latencies.size()),
                                    static_cast<int>(latencies.size()) - 1);
        return latencies[i];
    };
    const double agreement = static_cast<double>(agree) / online_ds.n();
    const double err_seq = error_rate(seq_pred, truth);
    const double err_std = error_rate(std_pred, truth);
    // Seed-determined results only; wall-clock numbers go to timings.txt so
    // report files are byte-stable across reruns.
    const std::string summary = format(
        "{\"online_count\":%d,\"agreement\":%.6f,\"error_seq\":%.6f,"
        "\"error_std\":%.6f}\n",
        online_ds.n(), agreement, err_seq, err_std);
    write_file((fs::path(a.out_dir) / "summary.jsonl").string(), summary);
    write_file((fs::path(a.out_dir) / "timings.txt").string(),
               format("fit_seconds=%.6f\nseq_seconds=%.6f\n"
                      "refit_seconds_est=%.6f\nlatency_p50=%.9f\n"
                      "latency_p90=%.9f\nlatency_p99=%.9f\n",
                      fit_seconds, seq_seconds, est_standard_seconds,
                      pct(0.50), pct(0.90), pct(0.99)));
    std::printf("agreement=%.4f seq_seconds=%.4f refit_seconds_est=%.4f\n",
                agreement, seq_seconds, est_standard_seconds);
    return 0;
}

// ----------------------------------------------------------------- rmse ----

struct RmseArgs {
    DatasetFlags data;
    int labels_per_class = 3;
    int k = 5;
    double sigma = 0.2;
    double alpha = 0.5;
    std::uint64_t seed = 1;
    std::string out = "rmse.txt";
};

int cmd_rmse(const RmseArgs& a) {
    Dataset full = a.data.load();
    const Dataset ds = split(full, {a.labels_per_class, a.seed});
    GraphConfig gcfg;
    gcfg.sigma = a.sigma;
    TrwConfig tcfg;
    tcfg.alpha = a.alpha;
    const MknnModel m = fit_mknn(ds, gcfg, tcfg,
                                 std::min(a.k, ds.labeled_count()));
    const auto [rx, rw] = loo_reconstruction(m, a.k);
    write_file(a.out, format("rmse_x_percent=%.6f\nrmse_w_percent=%.6f\n", rx, rw));
    std::printf("rmse_x=%.6f%% rmse_w=%.6f%%\n", rx, rw);
    return 0;
}

// ----------------------------------------------------------------- tune ----

struct TuneArgs {
    DatasetFlags data;
    std::string algorithm = "mknn";
    std::string sigma_grid = "0.05,0.1,0.2,0.4,0.8";
    std::string alpha_grid = "0.5";
    std::string geo_grid = "3,5,8";
    int labels_per_class = 3;
    int k = 3;
    std::uint64_t seed = 1;
    std::string out = "best_params.txt";
};

int cmd_tune(const TuneArgs& a) {
    const Dataset ds = split(a.data.load(), {a.labels_per_class, a.seed});
    TuneGrid grid;
    grid.sigma_values = parse_grid(a.sigma_grid);
    grid.alpha_values = parse_grid(a.alpha_grid);
    for (double g : parse_grid(a.geo_grid))
        grid.geo_neighbors_values.push_back(static_cast<int>(g));
    const TuneResult r =
        tune(ds, a.algorithm, grid, a.seed, std::min(a.k, ds.labeled_count()));
    write_file(a.out, format("algorithm=%s\nsigma=%.10g\nalpha=%.10g\n"
                             "geo_neighbors=%d\ncv_error=%.10f\n",
                             a.algorithm.c_str(), r.sigma, r.alpha,
                             r.geo_neighbors, r.cv_error));
    std::printf("sigma=%.10g alpha=%.10g geo_neighbors=%d cv_error=%.6f\n",
                r.sigma, r.alpha, r.geo_neighbors, r.cv_error);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-based semi-supervised manifold kNN toolkit"};
    app.require_subcommand(1);
    app.set_config("--config");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset CSV");
    synth_cmd->add_option("--kind", synth.kind)
        ->required()
        ->check(CLI::IsMember({"two-arcs", "arch-and-s", "circles", "noisy-gap"}));
    synth_cmd->add_option("--per-class", synth.per_class);
    synth_cmd->add_option("--noise", synth.noise);
    synth_cmd->add_option("--seed", synth.seed);
    synth_cmd->add_option("--bridge", synth.bridge);
    synth_cmd->add_option("-o,--out", synth.out)->required();

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "k-sweep benchmark over seeds");
    bench.data.attach(bench_cmd);
    bench_cmd->add_option("--algorithms", bench.algorithms);
    bench_cmd->add_option("--k-min", bench.k_min);
    bench_cmd->add_option("--k-max", bench.k_max);
    bench_cmd->add_option("--labels-per-class", bench.labels_per_class);
    bench_cmd->add_option("--seeds", bench.seeds);
    bench_cmd->add_option("--sigma", bench.sigma, "fixed sigma (0 = tune)");
    bench_cmd->add_option("--alpha", bench.alpha);
    bench_cmd->add_option("--geo-neighbors", bench.geo_neighbors, "fixed gkNN graph degree (0 = tune)");
    bench_cmd->add_option("--tree-depth", bench.tree_depth);
    bench_cmd->add_option("--tree-branch", bench.tree_branch);
    bench_cmd->add_option("--theta-fraction", bench.theta_fraction);
    bench_cmd->add_option("-o,--out", bench.out_dir);

    OnlineArgs online;
    auto* online_cmd = app.add_subcommand("online", "sequential vs standard mkNN");
    online.data.attach(online_cmd);
    online_cmd->add_option("--labels-per-class", online.labels_per_class);
    online_cmd->add_option("--online-count", online.online_count);
    online_cmd->add_option("--refit-sample", online.refit_sample,
                           "refits actually timed for the estimate");
    online_cmd->add_option("--sigma", online.sigma);
    online_cmd->add_option("--alpha", online.alpha);
    online_cmd->add_option("--k", online.k);
    online_cmd->add_option("--seed", online.seed);
    online_cmd->add_option("-o,--out", online.out_dir);

    RmseArgs rmse_args;
    auto* rmse_cmd = app.add_subcommand("rmse", "leave-one-out reconstruction RMSE");
    rmse_args.data.attach(rmse_cmd);
    rmse_cmd->add_option("--labels-per-class", rmse_args.labels_per_class);
    rmse_cmd->add_option("--k", rmse_args.k);
    rmse_cmd->add_option("--sigma", rmse_args.sigma);
    rmse_cmd->add_option("--alpha", rmse_args.alpha);
    rmse_cmd->add_option("--seed", rmse_args.seed);
    rmse_cmd->add_option("-o,--out", rmse_args.out);

    TuneArgs tune_args;
    auto* tune_cmd = app.add_subcommand("tune", "grid-search by 2-fold CV");
    tune_args.data.attach(tune_cmd);
    tune_cmd->add_option("--algorithm", tune_args.algorithm);
    tune_cmd->add_option("--sigma-grid", tune_args.sigma_grid);
    tune_cmd->add_option("--alpha-grid", tune_args.alpha_grid);
    tune_cmd->add_option("--geo-grid", tune_args.geo_grid);
    tune_cmd->add_option("--labels-per-class", tune_args.labels_per_class);
    tune_cmd->add_option("--k", tune_args.k);
    tune_cmd->add_option("--seed", tune_args.seed);
    tune_cmd->add_option("-o,--out", tune_args.out);

    try {
        app.parse(argc, argv);
        if (synth_cmd->parsed()) return cmd_synth(synth);
        if (bench_cmd->parsed()) return cmd_bench(bench);
        if (online_cmd->parsed()) return cmd_online(online);
        if (rmse_cmd->parsed()) return cmd_rmse(rmse_args);
        if (tune_cmd->parsed()) return cmd_tune(tune_args);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
}
