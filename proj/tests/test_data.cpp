#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "divst/data.hpp"
#include "divst/errors.hpp"
#include "divst/linalg.hpp"
#include "divst/synth.hpp"

using namespace divst;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::filesystem::path p = std::filesystem::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    out.close();
    return p.string();
}

// Three collinear class-0 points with centered projections {-1, 0, +1} and a
// two-point class 1 far away; n_labeled=2 gives both classes quota 1 and the
// first drawn index overall is class 0's first draw.
Dataset three_point_dataset() {
    Dataset ds;
    ds.features = Matrix{{-1, 0}, {0, 0}, {1, 0}, {10, 5}, {10, -5}};
    ds.labels = {0, 0, 0, 1, 1};
    ds.class_count = 2;
    ds.name = "three-point";
    ds.label_map = {"0", "1"};
    return ds;
}

SplitResult all_training_split(const Dataset& ds) {
    SplitResult split;
    split.unlabeled.resize(ds.features.rows());
    for (std::size_t i = 0; i < ds.features.rows(); ++i) split.unlabeled[i] = static_cast<int>(i);
    split.provenance = "{}";
    return split;
}

} // namespace

TEST_CASE("csv loader: two rows with a trailing label column") {
    std::string path = write_temp("divst_test_basic.csv", "1.0,2.0,A\n3.0,4.0,B\n");
    Dataset ds = load_dataset(path, DataFormat::Csv);
    REQUIRE(ds.features.rows() == 2);
    REQUIRE(ds.features.cols() == 2);
    CHECK(ds.features(0, 0) == 1.0);
    CHECK(ds.features(1, 1) == 4.0);
    CHECK(ds.labels == std::vector<int>{0, 1});
    CHECK(ds.class_count == 2);
    REQUIRE(ds.label_map.size() == 2);
    CHECK(ds.label_map[0] == "A");
    CHECK(ds.label_map[1] == "B");
    std::remove(path.c_str());
}

TEST_CASE("csv loader: numeric labels sort numerically") {
    std::string path = write_temp("divst_test_numeric.csv", "1,10\n2,2\n3,10\n");
    Dataset ds = load_dataset(path, DataFormat::Csv);
    // tokens {10, 2} sort numerically: class 0 is "2", class 1 is "10"
    CHECK(ds.label_map[0] == "2");
    CHECK(ds.label_map[1] == "10");
    CHECK(ds.labels == std::vector<int>{1, 0, 1});
    std::remove(path.c_str());
}

TEST_CASE("csv loader: ragged row raises ParseError") {
    std::string path = write_temp("divst_test_ragged.csv", "1.0,2.0,A\n3.0,B\n");
    CHECK_THROWS_AS(load_dataset(path, DataFormat::Csv), ParseError);
    std::remove(path.c_str());
}

TEST_CASE("libsvm loader densifies sparse rows") {
    std::string path = write_temp("divst_test_sparse.txt", "1 1:0.5 3:2.0\n2 2:1.0\n");
    Dataset ds = load_dataset(path, DataFormat::LibsvmText);
    REQUIRE(ds.features.rows() == 2);
    REQUIRE(ds.features.cols() == 3);
    CHECK(ds.features(0, 0) == 0.5);
    CHECK(ds.features(0, 1) == 0.0);
    CHECK(ds.features(0, 2) == 2.0);
    CHECK(ds.features(1, 1) == 1.0);
    CHECK(ds.class_count == 2);
    std::remove(path.c_str());
}

TEST_CASE("dataset csv round-trip preserves features and labels") {
    Dataset ds = make_two_gaussians(40, 2.0, 77);
    std::filesystem::path p = std::filesystem::temp_directory_path() / "divst_test_roundtrip.csv";
    save_dataset_csv(ds, p.string());
    Dataset back = load_dataset(p.string(), DataFormat::Csv);
    REQUIRE(back.features.rows() == ds.features.rows());
    REQUIRE(back.features.cols() == ds.features.cols());
    for (std::size_t i = 0; i < ds.features.rows(); ++i)
        for (std::size_t j = 0; j < ds.features.cols(); ++j)
            CHECK(back.features(i, j) == ds.features(i, j));
    CHECK(back.labels == ds.labels);
    std::remove(p.string().c_str());
}

TEST_CASE("standardize: two-value column becomes minus one and plus one") {
    Dataset ds;
    ds.features = Matrix{{0.0}, {2.0}};
    ds.labels = {0, 1};
    ds.class_count = 2;
    Dataset out = standardize(ds, {0, 1});
    CHECK(out.features(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.features(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.standardized);
}

TEST_CASE("standardize zeroes constant columns") {
    Dataset ds;
    ds.features = Matrix{{5.0, 1.0}, {5.0, 3.0}};
    ds.labels = {0, 1};
    ds.class_count = 2;
    Dataset out = standardize(ds, {0, 1});
    CHECK(out.features(0, 0) == 0.0);
    CHECK(out.features(1, 0) == 0.0);
}

TEST_CASE("standardize fits on the fit rows only and lands them at mean zero, unit std") {
    Dataset ds = make_two_gaussians(60, 2.0, 31);
    std::vector<int> fit;
    for (int i = 0; i < 30; ++i) fit.push_back(i);
    Dataset out = standardize(ds, fit);
    for (std::size_t j = 0; j < out.features.cols(); ++j) {
        double mean = 0.0;
        for (int i : fit) mean += out.features(i, j);
        mean /= fit.size();
        double var = 0.0;
        for (int i : fit) var += (out.features(i, j) - mean) * (out.features(i, j) - mean);
        var /= fit.size(); // population convention
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("split quotas: 100 balanced examples put 13 and 12 per class in test") {
    Dataset ds;
    ds.features = Matrix(100, 1);
    ds.labels.resize(100);
    for (int i = 0; i < 100; ++i) {
        ds.features(i, 0) = i;
        ds.labels[i] = i % 2;
    }
    ds.class_count = 2;
    SplitResult split = split_train_test(ds, 0.25, 3);
    REQUIRE(split.test.size() == 25);
    int per_class[2] = {0, 0};
    for (int idx : split.test) per_class[ds.labels[idx]]++;
    // floor(12.5) each, remainder to the largest class, ties to class 0
    CHECK(per_class[0] == 13);
    CHECK(per_class[1] == 12);
}

TEST_CASE("split is deterministic per seed and partitions the dataset") {
    Dataset ds = make_two_gaussians(101, 2.0, 5);
    SplitResult a = split_train_test(ds, 0.25, 9);
    SplitResult b = split_train_test(ds, 0.25, 9);
    CHECK(a.test == b.test);
    CHECK(a.unlabeled == b.unlabeled);
    CHECK(a.labeled.empty());

    std::set<int> all(a.unlabeled.begin(), a.unlabeled.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 101); // disjoint and exhaustive

    SplitResult c = split_train_test(ds, 0.25, 10);
    CHECK(a.test != c.test); // different seed reshuffles
}

TEST_CASE("labeling the whole training pool empties the unlabeled side") {
    Dataset ds = three_point_dataset();
    SplitResult split = all_training_split(ds);
    SplitResult out = label_iid(ds, split, 5, 1);
    CHECK(out.labeled.size() == 5);
    CHECK(out.unlabeled.empty());
}

TEST_CASE("iid labeling splits a balanced pool evenly") {
    Dataset ds;
    ds.features = Matrix(20, 1);
    ds.labels.resize(20);
    for (int i = 0; i < 20; ++i) {
        ds.features(i, 0) = i;
        ds.labels[i] = i % 2;
    }
    ds.class_count = 2;
    SplitResult split = all_training_split(ds);
    SplitResult out = label_iid(ds, split, 10, 4);
    int per_class[2] = {0, 0};
    for (int idx : out.labeled) per_class[ds.labels[idx]]++;
    CHECK(per_class[0] == 5);
    CHECK(per_class[1] == 5);

    // labeled and unlabeled partition the pool
    std::set<int> all(out.labeled.begin(), out.labeled.end());
    all.insert(out.unlabeled.begin(), out.unlabeled.end());
    CHECK(all.size() == 20);
}

TEST_CASE("iid labeling frequency of a fixed point matches quota over class size") {
    Dataset ds = three_point_dataset();
    SplitResult split = all_training_split(ds);
    // class 0 quota is 1 over 3 candidates: p = 1/3 for each point
    const int trials = 10000;
    int hits = 0;
    for (int s = 1; s <= trials; ++s) {
        SplitResult out = label_iid(ds, split, 2, static_cast<std::uint64_t>(s));
        if (out.labeled[0] == 0) ++hits;
    }
    double p = 1.0 / 3.0;
    double sigma = std::sqrt(trials * p * (1 - p));
    CHECK(std::fabs(hits - trials * p) <= 3.0 * sigma);
}

TEST_CASE("ssb first-draw distribution follows the exponential-projection weights") {
    Dataset ds = three_point_dataset();
    SplitResult split = all_training_split(ds);
    // projections {-1, 0, 1}, r = ln 2 -> weights {2, 1, 2} -> probs {.4, .2, .4}
    const double r = std::log(2.0);
    const int trials = 20000;
    int counts[3] = {0, 0, 0};
    for (int s = 1; s <= trials; ++s) {
        SplitResult out = label_ssb(ds, split, 2, r, static_cast<std::uint64_t>(s));
        REQUIRE(out.labeled[0] <= 2); // class 0 is drawn first
        counts[out.labeled[0]]++;
    }
    const double expect[3] = {0.4, 0.2, 0.4};
    for (int i = 0; i < 3; ++i) {
        double sigma = std::sqrt(trials * expect[i] * (1 - expect[i]));
        CHECK(std::fabs(counts[i] - trials * expect[i]) <= 3.0 * sigma);
    }
}

TEST_CASE("ssb at r = 0 degenerates to the iid draw stream") {
    Dataset ds = three_point_dataset();
    SplitResult split = all_training_split(ds);
    for (std::uint64_t s = 1; s <= 20; ++s) {
        SplitResult a = label_ssb(ds, split, 3, 0.0, s);
        SplitResult b = label_iid(ds, split, 3, s);
        CHECK(a.labeled == b.labeled);
    }
}

TEST_CASE("interpolated labeling coincides exactly with iid at alpha 0 and ssb at alpha 1") {
    Dataset ds = make_two_gaussians(60, 2.0, 21);
    SplitResult split = split_train_test(ds, 0.25, 21);
    for (std::uint64_t s = 1; s <= 10; ++s) {
        SplitResult iid = label_iid(ds, split, 8, s);
        SplitResult a0 = label_interpolated(ds, split, 8, 2.0, 0.0, s);
        CHECK(a0.labeled == iid.labeled);
        CHECK(a0.unlabeled == iid.unlabeled);

        SplitResult ssb = label_ssb(ds, split, 8, 2.0, s);
        SplitResult a1 = label_interpolated(ds, split, 8, 2.0, 1.0, s);
        CHECK(a1.labeled == ssb.labeled);
    }
}

TEST_CASE("interpolated first-draw weights average the iid and ssb distributions") {
    Dataset ds = three_point_dataset();
    SplitResult split = all_training_split(ds);
    // alpha = .5, r = ln 2: w_i = .5/3 + .5*{.4,.2,.4} -> probs {11/30, 8/30, 11/30}
    const double r = std::log(2.0);
    const int trials = 20000;
    int counts[3] = {0, 0, 0};
    for (int s = 1; s <= trials; ++s) {
        SplitResult out = label_interpolated(ds, split, 2, r, 0.5, static_cast<std::uint64_t>(s));
        counts[out.labeled[0]]++;
    }
    const double expect[3] = {11.0 / 30.0, 8.0 / 30.0, 11.0 / 30.0};
    for (int i = 0; i < 3; ++i) {
        double sigma = std::sqrt(trials * expect[i] * (1 - expect[i]));
        CHECK(std::fabs(counts[i] - trials * expect[i]) <= 3.0 * sigma);
    }
}

TEST_CASE("labeling rejects bad parameters") {
    Dataset ds = three_point_dataset();
    SplitResult split = all_training_split(ds);
    CHECK_THROWS_AS(label_iid(ds, split, 0, 1), ConfigError);
    CHECK_THROWS_AS(label_iid(ds, split, 6, 1), ConfigError); // pool has 5
    CHECK_THROWS_AS(label_interpolated(ds, split, 2, 2.0, 1.5, 1), ConfigError);
    CHECK_THROWS_AS(label_ssb(ds, split, 2, -1.0, 1), ConfigError);
}

TEST_CASE("split manifest JSON round-trips") {
    Dataset ds = make_two_gaussians(50, 2.0, 13);
    SplitResult split = split_train_test(ds, 0.25, 13);
    SplitResult labeled = label_ssb(ds, split, 6, 2.0, 13);
    SplitResult back = split_from_json(split_to_json(labeled));
    CHECK(back.labeled == labeled.labeled);
    CHECK(back.unlabeled == labeled.unlabeled);
    CHECK(back.test == labeled.test);
    CHECK(back.provenance == labeled.provenance);
    CHECK_THROWS_AS(split_from_json("nonsense"), ParseError);
}

TEST_CASE("gather_rows and gather_labels pick the requested entries in order") {
    Matrix m{{0, 1}, {10, 11}, {20, 21}};
    Matrix g = gather_rows(m, {2, 0});
    CHECK(g(0, 0) == 20.0);
    CHECK(g(1, 1) == 1.0);
    std::vector<int> labels{5, 6, 7};
    CHECK(gather_labels(labels, {2, 0}) == std::vector<int>{7, 5});
}

TEST_CASE("largest-remainder quotas sum exactly and follow the remainders") {
    CHECK(largest_remainder_quotas({50, 50}, 10) == std::vector<int>{5, 5});
    CHECK(largest_remainder_quotas({3, 2}, 3) == std::vector<int>{2, 1});
    CHECK(largest_remainder_quotas({1, 1, 1}, 2) == std::vector<int>{1, 1, 0});
    CHECK_THROWS_AS(largest_remainder_quotas({2, 2}, 5), ConfigError);
}

TEST_CASE("two-gaussian generator is balanced, 2-d, and deterministic") {
    Dataset a = make_two_gaussians(200, 2.0, 55);
    Dataset b = make_two_gaussians(200, 2.0, 55);
    REQUIRE(a.features.rows() == 200);
    REQUIRE(a.features.cols() == 2);
    CHECK(a.class_count == 2);
    int c0 = static_cast<int>(std::count(a.labels.begin(), a.labels.end(), 0));
    CHECK(c0 == 100);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);

    // classes are separated along the first axis
    double m0 = 0.0, m1 = 0.0;
    for (int i = 0; i < 200; ++i)
        (a.labels[i] == 0 ? m0 : m1) += a.features(i, 0);
    CHECK(m0 / 100 < m1 / 100);
}

TEST_CASE("categorical benchmark generator has its fixed shape and is one-hot") {
    std::vector<int> ranks;
    std::vector<char> flipped;
    Dataset ds = make_mushrooms_like(8124, &ranks, &flipped);
    REQUIRE(ds.features.rows() == 8124);
    REQUIRE(ds.features.cols() == 52);
    CHECK(ds.class_count == 2);
    int c0 = static_cast<int>(std::count(ds.labels.begin(), ds.labels.end(), 0));
    CHECK(c0 == 4208);
    REQUIRE(ranks.size() == 8124);
    REQUIRE(flipped.size() == 8124);

    for (std::size_t i = 0; i < 200; ++i) { // spot-check one-hot structure
        double sum = 0.0;
        for (std::size_t j = 0; j < 52; ++j) {
            CHECK((ds.features(i, j) == 0.0 || ds.features(i, j) == 1.0));
            sum += ds.features(i, j);
        }
        CHECK(sum == 22.0); // one active category per attribute
    }
    for (int r : ranks) {
        CHECK(r >= 0);
        CHECK(r <= 5);
    }
    // flipped rows only occur in middle ranks
    for (std::size_t i = 0; i < flipped.size(); ++i) {
        if (flipped[i]) CHECK((ranks[i] == 2 || ranks[i] == 3));
    }

    Dataset again = make_mushrooms_like(8124);
    CHECK(again.features == ds.features);
}
