// Synthetic open-world datasets, CSV ingestion, and the known/novel +
// labeled/unlabeled split. A dataset always carries ground-truth labels for
// evaluation; the masks say what the trainer is allowed to see.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"
#include "openncd/rng.hpp"

namespace openncd {

struct Dataset {
    Matrix features;                  // N x dim
    std::vector<int> labels;          // ground-truth class ids
    std::vector<uint8_t> is_labeled;  // visible to the trainer
    std::vector<uint8_t> is_known;    // class-level known membership

    int size() const { return features.rows(); }
    int dim() const { return features.cols(); }

    std::vector<int> class_ids() const {
        std::vector<int> ids(labels);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }

    long labeled_count() const {
        long m = 0;
        for (uint8_t b : is_labeled) m += b;
        return m;
    }

    void validate() const {
        const size_t n = static_cast<size_t>(size());
        if (labels.size() != n || is_labeled.size() != n || is_known.size() != n)
            throw ContractViolation("Dataset: mask/label lengths must match the feature rows");
        for (size_t i = 0; i < n; ++i)
            if (is_labeled[i] && !is_known[i])
                throw ContractViolation("Dataset: labeled instances must belong to known classes");
    }
};

struct SplitConfig {
    double known_class_fraction = 0.5;
    double label_fraction = 0.1;
    uint64_t seed = 1;

    void validate() const {
        if (!(known_class_fraction > 0.0 && known_class_fraction <= 1.0))
            throw ConfigError("split: known_class_fraction must be in (0, 1]");
        if (!(label_fraction > 0.0 && label_fraction <= 1.0))
            throw ConfigError("split: label_fraction must be in (0, 1]");
    }
};

// Gaussian blobs: class means drawn on a sphere of radius `separation`,
// re-drawn until all pairwise mean distances reach `separation`; instances
// are mean + isotropic noise of std `spread`. Deterministic per seed.
inline Dataset generate_blobs(int num_classes, int per_class, int dim, double separation,
                              double spread, uint64_t seed) {
    if (num_classes < 1 || per_class < 1 || dim < 1)
        throw ContractViolation("generate_blobs: counts and dim must be positive");
    if (!(separation > 0.0) || !(spread > 0.0))
        throw ContractViolation("generate_blobs: separation and spread must be positive");

    Rng rng(seed);
    std::vector<std::vector<double>> means;
    const int budget = 1000 * num_classes;
    int attempts = 0;
    while (static_cast<int>(means.size()) < num_classes) {
        if (++attempts > budget)
            throw GenerationError(
                "generate_blobs: could not place well-separated class means; "
                "increase dim or reduce num_classes");
        auto candidate = rng.unit_sphere(dim);
        for (double& x : candidate) x *= separation;
        bool ok = true;
        for (const auto& m : means) {
            double d2 = 0.0;
            for (int j = 0; j < dim; ++j) d2 += (candidate[j] - m[j]) * (candidate[j] - m[j]);
            if (d2 < separation * separation) {
                ok = false;
                break;
            }
        }
        if (ok) means.push_back(std::move(candidate));
    }

    Dataset ds;
    ds.features = Matrix(num_classes * per_class, dim);
    ds.labels.resize(num_classes * per_class);
    ds.is_labeled.assign(ds.labels.size(), 0);
    ds.is_known.assign(ds.labels.size(), 0);
    int row = 0;
    for (int c = 0; c < num_classes; ++c)
        for (int i = 0; i < per_class; ++i, ++row) {
            ds.labels[row] = c;
            for (int j = 0; j < dim; ++j) ds.features(row, j) = means[c][j] + spread * rng.gaussian();
        }
    return ds;
}

// Marks the lowest ceil(known_class_fraction * C) class ids as known and a
// seeded ceil(label_fraction * count) choice within each known class as
// labeled. Everything else stays unlabeled.
inline Dataset apply_split(Dataset dataset, const SplitConfig& cfg) {
    cfg.validate();
    dataset.validate();
    const auto ids = dataset.class_ids();
    const int num_known = static_cast<int>(
        std::ceil(cfg.known_class_fraction * static_cast<double>(ids.size())));
    if (num_known < 1) throw SplitError("apply_split: no known classes");

    std::fill(dataset.is_labeled.begin(), dataset.is_labeled.end(), 0);
    std::fill(dataset.is_known.begin(), dataset.is_known.end(), 0);
    std::vector<int> known_ids(ids.begin(), ids.begin() + num_known);
    for (int i = 0; i < dataset.size(); ++i)
        if (std::binary_search(known_ids.begin(), known_ids.end(), dataset.labels[i]))
            dataset.is_known[i] = 1;

    Rng rng(cfg.seed);
    for (int cls : known_ids) {
        std::vector<int> members;
        for (int i = 0; i < dataset.size(); ++i)
            if (dataset.labels[i] == cls) members.push_back(i);
        const long want =
            static_cast<long>(std::ceil(cfg.label_fraction * static_cast<double>(members.size())));
        if (want < 1)
            throw SplitError("apply_split: label_fraction yields no labels for class " +
                             std::to_string(cls));
        rng.shuffle(members);
        for (long i = 0; i < want; ++i) dataset.is_labeled[members[i]] = 1;
    }
    return dataset;
}

namespace detail {

inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& cell, long line_no) {
    double out = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    const auto res = std::from_chars(begin, end, out);
    if (res.ec != std::errc() || res.ptr != end)
        throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + cell + "'",
                         line_no);
    return out;
}

inline std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace detail

// Rows are `label,feat_0,...,feat_{d-1}` with a constant width; labels are
// non-negative integers. Loaded instances start unlabeled/unknown until a
// split or mask sidecar is applied.
inline Dataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    Dataset ds;
    std::vector<double> values;
    std::string line;
    long line_no = 0;
    int width = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && has_header) continue;
        if (line.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty row", line_no);
        const auto cells = detail::split_cells(line);
        if (width == -1) {
            width = static_cast<int>(cells.size());
            if (width < 2)
                throw ParseError("line " + std::to_string(line_no) + ": need a label and features",
                                 line_no);
        } else if (static_cast<int>(cells.size()) != width) {
            throw ParseError("line " + std::to_string(line_no) + ": ragged row (" +
                                 std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(width) + ")",
                             line_no);
        }
        const double label = detail::parse_double(cells[0], line_no);
        if (label < 0 || label != std::floor(label))
            throw ParseError("line " + std::to_string(line_no) + ": label must be a non-negative integer",
                             line_no);
        ds.labels.push_back(static_cast<int>(label));
        for (int j = 1; j < width; ++j) values.push_back(detail::parse_double(cells[j], line_no));
    }
    if (ds.labels.empty()) throw ParseError("'" + path + "' has no data rows");
    const int dim = width - 1;
    ds.features = Matrix(static_cast<int>(ds.labels.size()), dim);
    std::copy(values.begin(), values.end(), ds.features.data().begin());
    ds.is_labeled.assign(ds.labels.size(), 0);
    ds.is_known.assign(ds.labels.size(), 0);
    return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path, bool header = false) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    if (header) {
        out << "label";
        for (int j = 0; j < ds.dim(); ++j) out << ",feat_" << j;
        out << "\n";
    }
    for (int i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (int j = 0; j < ds.dim(); ++j) out << ',' << detail::format_double(ds.features(i, j));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Mask sidecar: `index,is_known,is_labeled` with 0/1 flags.
inline void load_masks(Dataset& ds, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_cells(line);
        if (cells.size() != 3)
            throw ParseError("line " + std::to_string(line_no) + ": expected index,is_known,is_labeled",
                             line_no);
        const long idx = static_cast<long>(detail::parse_double(cells[0], line_no));
        if (idx < 0 || idx >= ds.size())
            throw ParseError("line " + std::to_string(line_no) + ": index out of range", line_no);
        ds.is_known[idx] = detail::parse_double(cells[1], line_no) != 0.0;
        ds.is_labeled[idx] = detail::parse_double(cells[2], line_no) != 0.0;
    }
    ds.validate();
}

inline void save_masks(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (int i = 0; i < ds.size(); ++i)
        out << i << ',' << int(ds.is_known[i]) << ',' << int(ds.is_labeled[i]) << "\n";
}

// The augmentation: seeded isotropic Gaussian noise on the raw features.
inline Matrix make_views(const Matrix& batch, double noise_std, Rng& rng) {
    if (noise_std < 0.0) throw ContractViolation("make_views: noise_std must be non-negative");
    Matrix out = batch;
    if (noise_std == 0.0) return out;
    for (double& x : out.data()) x += noise_std * rng.gaussian();
    return out;
}

}  // namespace openncd
