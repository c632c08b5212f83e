#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divst/matrix.hpp"

namespace divst {

struct Dataset {
    Matrix features;              // n × d
    std::vector<int> labels;      // in [0, class_count)
    int class_count = 0;
    std::string name;
    bool standardized = false;
    std::vector<double> feat_mean; // recorded by standardize()
    std::vector<double> feat_std;
    std::vector<std::string> label_map; // class id -> original label token
};

enum class DataFormat { Csv, LibsvmText };

// CSV (label column configurable, default last; optional header row) or
// sparse libsvm text ("<label> <idx>:<val> ...", 1-based indices, densified).
// Original label tokens are mapped to [0,C) by sorted order (numeric when
// every token parses as a number, lexicographic otherwise); the mapping is
// recorded in label_map. Malformed rows raise ParseError with a line number.
Dataset load_dataset(const std::string& path, DataFormat format, bool has_header = false,
                     int label_column = -1);

// CSV writer (features at full precision, original label tokens), for
// round-trips and synthetic dataset emission.
void save_dataset_csv(const Dataset& ds, const std::string& path);

// Per-column z-scoring: mean/std fit on fit_indices only, applied to all
// rows. Columns with std < 1e-12 are zeroed. Population (1/n) std.
Dataset standardize(const Dataset& ds, const std::vector<int>& fit_indices);

struct SplitResult {
    std::vector<int> labeled;   // draw order, grouped by class
    std::vector<int> unlabeled;
    std::vector<int> test;
    std::string provenance;     // JSON: spec + seed trail
};

// Stratified split; labeled comes back empty and the whole training portion
// sits in `unlabeled` until a labeler runs. Per-class test quotas: floor,
// remainder to the largest classes (ties to the lower class id), never
// emptying a class's training side.
SplitResult split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed);

// Labeling procedures. Each consumes the training portion of `split`
// (labeled ∪ unlabeled) and returns a new partition with n_labeled examples
// labeled, class quotas proportional to training class frequencies
// (largest-remainder rounding). All are per-class sequential weighted draws
// without replacement (renormalizing after each draw) with per-draw weights
//   w_i = (1-alpha)/|T_c| + alpha * exp(r|proj_1(x_i)|)/beta,
// so label_iid is exactly alpha=0 and label_ssb exactly alpha=1 (the
// interpolated family of the bias-strength experiments). proj_1 is the
// class-wise centered first-principal-component projection.
SplitResult label_iid(const Dataset& ds, const SplitResult& split, int n_labeled,
                      std::uint64_t seed);
SplitResult label_ssb(const Dataset& ds, const SplitResult& split, int n_labeled, double r,
                      std::uint64_t seed);
SplitResult label_interpolated(const Dataset& ds, const SplitResult& split, int n_labeled,
                               double r, double alpha, std::uint64_t seed);

// JSON split manifests (index arrays + provenance) for exact reproducibility.
std::string split_to_json(const SplitResult& split);
SplitResult split_from_json(const std::string& text);

// Row gather: rows of ds.features at the given indices.
Matrix gather_rows(const Matrix& m, const std::vector<int>& indices);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& indices);

// Largest-remainder per-class quotas summing to n_labeled exactly
// (exposed for tests; ConfigError when infeasible).
std::vector<int> largest_remainder_quotas(const std::vector<int>& class_counts, int n_labeled);

} // namespace divst
