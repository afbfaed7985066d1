#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mknn/errors.hpp"
#include "mknn/rng.hpp"

namespace mknn {

/// A sample matrix with (possibly partial) class labels.
///
/// `labels` is the working label vector used for fitting: 0 means unlabeled,
/// otherwise a class id in 1..num_classes. `truth` carries ground truth for
/// scoring and is kept separate so that evaluation of unlabeled points never
/// leaks labels into training.
struct Dataset {
    Eigen::MatrixXd samples;  // n x d, rows are points
    std::vector<int> labels;  // 0 = unlabeled
    std::vector<int> truth;   // 0 = unknown; used for scoring only
    int num_classes = 0;

    int n() const { return static_cast<int>(samples.rows()); }
    int d() const { return static_cast<int>(samples.cols()); }

    int labeled_count() const {
        int l = 0;
        for (int v : labels) l += (v != 0);
        return l;
    }

    std::vector<int> labeled_indices() const {
        std::vector<int> idx;
        for (int i = 0; i < n(); ++i)
            if (labels[i] != 0) idx.push_back(i);
        return idx;
    }

    std::vector<int> unlabeled_indices() const {
        std::vector<int> idx;
        for (int i = 0; i < n(); ++i)
            if (labels[i] == 0) idx.push_back(i);
        return idx;
    }

    void validate() const {
        if (n() == 0) throw data_error("empty dataset");
        if (!samples.allFinite()) throw data_error("non-finite sample values");
        if (static_cast<int>(labels.size()) != n() ||
            static_cast<int>(truth.size()) != n())
            throw data_error("label vector length mismatch");
        for (int v : labels)
            if (v < 0 || v > num_classes)
                throw data_error("label outside 1..C");
    }
};

struct SplitSpec {
    int labels_per_class = 3;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Load a CSV dataset. The label column is named (when the file has a header)
/// or given as a 0-based index. Fields equal to `unlabeled_marker` (or empty)
/// carry no label. C is inferred from the distinct label tokens, mapped to
/// 1..C in sorted order (numeric order when all tokens parse as numbers).
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        const std::string& unlabeled_marker = "?") {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(detail::split_fields(line));
    }
    if (rows.empty()) throw data_error("empty dataset: " + path);

    int label_idx = -1;
    {
        double v;
        if (detail::parse_double(label_column, v) &&
            label_column.find_first_not_of("0123456789") == std::string::npos)
            label_idx = static_cast<int>(v);
    }

    // Header detection: a first row with any non-numeric field that is not
    // the unlabeled marker is treated as a header. The label column (when
    // given by index) is exempt: class tokens may be arbitrary strings.
    bool has_header = false;
    for (std::size_t j = 0; j < rows[0].size(); ++j) {
        if (static_cast<int>(j) == label_idx) continue;
        const std::string& f = rows[0][j];
        double v;
        if (!detail::parse_double(f, v) && f != unlabeled_marker && !f.empty()) {
            has_header = true;
            break;
        }
    }
    // A label-column *name* only makes sense with a header present.
    if (label_idx < 0) {
        if (!has_header)
            throw data_error("label column name given but file has no header");
        for (std::size_t j = 0; j < rows[0].size(); ++j)
            if (rows[0][j] == label_column) label_idx = static_cast<int>(j);
        if (label_idx < 0)
            throw data_error("label column not found: " + label_column);
    }

    const std::size_t first_data = has_header ? 1 : 0;
    if (first_data >= rows.size()) throw data_error("no data rows: " + path);
    const int ncols = static_cast<int>(rows[first_data].size());
    if (label_idx < 0 || label_idx >= ncols)
        throw data_error("label column index out of range");

    const int n = static_cast<int>(rows.size() - first_data);
    const int d = ncols - 1;
    if (d <= 0) throw data_error("no feature columns");

    Dataset ds;
    ds.samples.resize(n, d);
    ds.labels.assign(n, 0);
    ds.truth.assign(n, 0);

    std::vector<std::string> raw_labels(n);
    for (int i = 0; i < n; ++i) {
        const auto& r = rows[first_data + i];
        const int file_row = static_cast<int>(first_data + i + 1);
        if (static_cast<int>(r.size()) != ncols)
            throw data_error("malformed row " + std::to_string(file_row) +
                             ": expected " + std::to_string(ncols) + " fields");
        int jj = 0;
        for (int j = 0; j < ncols; ++j) {
            if (j == label_idx) {
                raw_labels[i] = r[j];
                continue;
            }
            double v;
            if (!detail::parse_double(r[j], v))
                throw data_error("non-numeric feature at row " +
                                 std::to_string(file_row) + ", column " +
                                 std::to_string(j));
            ds.samples(i, jj++) = v;
        }
    }

    // Map distinct label tokens to 1..C.
    std::vector<std::string> tokens;
    for (const auto& t : raw_labels)
        if (!t.empty() && t != unlabeled_marker) tokens.push_back(t);
    if (tokens.empty()) throw data_error("no labeled samples in " + path);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    bool all_numeric = true;
    for (const auto& t : tokens) {
        double v;
        all_numeric = all_numeric && detail::parse_double(t, v);
    }
    if (all_numeric) {
        std::sort(tokens.begin(), tokens.end(), [](const auto& a, const auto& b) {
            return std::strtod(a.c_str(), nullptr) < std::strtod(b.c_str(), nullptr);
        });
    }
    std::map<std::string, int> code;
    for (std::size_t c = 0; c < tokens.size(); ++c)
        code[tokens[c]] = static_cast<int>(c + 1);

    for (int i = 0; i < n; ++i) {
        if (raw_labels[i].empty() || raw_labels[i] == unlabeled_marker) continue;
        ds.labels[i] = code[raw_labels[i]];
        ds.truth[i] = ds.labels[i];
    }
    ds.num_classes = static_cast<int>(tokens.size());
    ds.validate();
    return ds;
}

/// Write a dataset as CSV (features then a final `label` column; unlabeled
/// rows get the marker). Doubles are printed with enough digits to round
/// trip bit-exactly.
inline void save_csv(const Dataset& ds, const std::string& path,
                     const std::string& unlabeled_marker = "?") {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write file: " + path);
    for (int j = 0; j < ds.d(); ++j) out << "f" << j << ",";
    out << "label\n";
    char buf[64];
    for (int i = 0; i < ds.n(); ++i) {
        for (int j = 0; j < ds.d(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.samples(i, j));
            out << buf << ",";
        }
        if (ds.labels[i] == 0)
            out << unlabeled_marker << "\n";
        else
            out << ds.labels[i] << "\n";
    }
    if (!out) throw data_error("write failed: " + path);
}

namespace detail {

inline void curve_point(const std::string& kind, int cls, double t,
                        double& x, double& y) {
    if (kind == "circles") {
        const double r = (cls == 1) ? 1.0 : 2.0;
        x = r * std::cos(2.0 * M_PI * t);
        y = r * std::sin(2.0 * M_PI * t);
    } else if (kind == "arch-and-s") {
        if (cls == 1) {  // outer arch
            x = 2.0 * std::cos(M_PI * t);
            y = 2.0 * std::sin(M_PI * t);
        } else {  // interior reflected S
            x = 0.7 * std::sin(3.0 * M_PI * t);
            y = 1.6 * t;
        }
    } else {  // two-arcs / noisy-gap: two interleaved half moons
        if (cls == 1) {
            x = std::cos(M_PI * t);
            y = std::sin(M_PI * t);
        } else {
            x = 1.0 - std::cos(M_PI * t);
            y = 0.5 - std::sin(M_PI * t);
        }
    }
}

inline void bridge_box(const std::string& kind, double& x0, double& x1,
                       double& y0, double& y1) {
    if (kind == "circles") {
        x0 = -1.5; x1 = 1.5; y0 = -1.5; y1 = 1.5;  // annulus band, roughly
    } else if (kind == "arch-and-s") {
        x0 = -1.2; x1 = 1.2; y0 = 0.2; y1 = 1.4;
    } else {
        x0 = -0.2; x1 = 1.2; y0 = 0.0; y1 = 0.5;
    }
}

}  // namespace detail

/// Generate a 2-class, 2-D synthetic manifold dataset, fully labeled.
/// Each class gets exactly `points_per_class` rows; when `bridge_per_class`
/// is positive, that many of them are ambiguous points placed uniformly in
/// the inter-class gap rather than on the class curve. `bridge_per_class`
/// of -1 picks the kind's default (0, except `noisy-gap`).
inline Dataset make_synthetic(const std::string& kind, int points_per_class,
                              double noise, std::uint64_t seed,
                              int bridge_per_class = -1) {
    static const char* kinds[] = {"two-arcs", "arch-and-s", "circles", "noisy-gap"};
    if (std::find_if(std::begin(kinds), std::end(kinds),
                     [&](const char* k) { return kind == k; }) == std::end(kinds))
        throw data_error("unknown synthetic kind: " + kind);
    if (points_per_class < 10)
        throw data_error("points_per_class must be >= 10");
    if (noise < 0.0) throw data_error("noise must be nonnegative");

    if (bridge_per_class < 0)
        bridge_per_class = (kind == "noisy-gap")
                               ? std::max(10, points_per_class / 20)
                               : 0;
    if (bridge_per_class >= points_per_class)
        throw data_error("bridge_per_class must be < points_per_class");

    const std::string curve_kind = (kind == "noisy-gap") ? "two-arcs" : kind;
    const int n = 2 * points_per_class;
    Dataset ds;
    ds.samples.resize(n, 2);
    ds.labels.assign(n, 0);
    ds.truth.assign(n, 0);
    ds.num_classes = 2;

    Rng rng(seed);
    double bx0, bx1, by0, by1;
    detail::bridge_box(curve_kind, bx0, bx1, by0, by1);

    int row = 0;
    for (int cls = 1; cls <= 2; ++cls) {
        const int on_curve = points_per_class - bridge_per_class;
        for (int i = 0; i < on_curve; ++i) {
            const double t = rng.uniform();
            double x, y;
            detail::curve_point(curve_kind, cls, t, x, y);
            if (noise > 0.0) {
                x += noise * rng.normal();
                y += noise * rng.normal();
            }
            ds.samples(row, 0) = x;
            ds.samples(row, 1) = y;
            ds.labels[row] = cls;
            ds.truth[row] = cls;
            ++row;
        }
        for (int i = 0; i < bridge_per_class; ++i) {
            ds.samples(row, 0) = rng.uniform(bx0, bx1);
            ds.samples(row, 1) = rng.uniform(by0, by1);
            ds.labels[row] = cls;
            ds.truth[row] = cls;
            ++row;
        }
    }
    ds.validate();
    return ds;
}

/// Keep exactly `labels_per_class` labels per class (chosen by seeded draw)
/// and clear the rest; ground truth for every row is retained in `truth`.
inline Dataset split(const Dataset& ds, const SplitSpec& spec) {
    if (spec.labels_per_class < 1)
        throw data_error("labels_per_class must be >= 1");
    Dataset out = ds;
    // Truth is the full label knowledge we have before hiding labels.
    for (int i = 0; i < ds.n(); ++i)
        out.truth[i] = ds.labels[i] != 0 ? ds.labels[i] : ds.truth[i];
    std::fill(out.labels.begin(), out.labels.end(), 0);

    Rng rng(spec.seed);
    for (int c = 1; c <= ds.num_classes; ++c) {
        std::vector<int> members;
        for (int i = 0; i < ds.n(); ++i)
            if (ds.labels[i] == c) members.push_back(i);
        if (static_cast<int>(members.size()) < spec.labels_per_class)
            throw data_error("class " + std::to_string(c) + " has only " +
                             std::to_string(members.size()) + " samples, need " +
                             std::to_string(spec.labels_per_class));
        rng.shuffle(members);
        for (int i = 0; i < spec.labels_per_class; ++i)
            out.labels[members[i]] = c;
    }
    return out;
}

/// In-place z-score standardization of each feature column. Columns with
/// zero variance are left centered only.
inline void standardize(Dataset& ds) {
    for (int j = 0; j < ds.d(); ++j) {
        const double mean = ds.samples.col(j).mean();
        ds.samples.col(j).array() -= mean;
        const double sd = std::sqrt(ds.samples.col(j).squaredNorm() / ds.n());
        if (sd > 0.0) ds.samples.col(j) /= sd;
    }
}

}  // namespace mknn
