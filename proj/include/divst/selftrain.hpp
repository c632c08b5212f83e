#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "divst/confidence.hpp"
#include "divst/matrix.hpp"

namespace divst {

enum class PolicyKind { None, FixedThreshold, Curriculum, Transductive };
enum class ConfidenceSource { Softmax, TSimilarity };
enum class QuantileMode { Empirical, Pareto };

struct PolicyConfig {
    PolicyKind kind = PolicyKind::FixedThreshold;
    double theta = 0.8;  // fixed-threshold policy, in (0,1)
    double delta = 0.4;  // curriculum step, in (0,1)
    ConfidenceSource confidence_source = ConfidenceSource::TSimilarity;
    QuantileMode quantile_mode = QuantileMode::Empirical;
};

struct TrainConfig {
    int epochs = 5;
    int iters_per_epoch = 100;
    double lr = 1e-3;
    int batch_labeled = 32;    // actual batch = min(this, n_labeled)
    int batch_unlabeled = 256; // actual batch = min(this, n_unlabeled)
    int self_train_iters = 5;  // N of the wrapper loop
    bool warm_start = false;   // keep parameters across self-train iterations
    std::uint64_t seed = 1;
};

// Select indices with score strictly above theta.
std::vector<int> policy_fixed_threshold(const std::vector<double>& scores, double theta);

// Curriculum selection at wrapper iteration t >= 1: threshold is the
// confidence quantile at level max(0, 1 - t*delta); level 0 selects all.
// Empirical mode uses the nearest-rank quantile (1-based ceil on the sorted
// array); Pareto mode fits a one-parameter Pareto by maximum likelihood and
// uses its quantile instead.
std::vector<int> policy_curriculum(const std::vector<double>& scores, double delta, int t,
                                   QuantileMode mode = QuantileMode::Empirical);

struct TransductiveSelection {
    std::vector<int> selected;
    std::vector<double> thresholds; // per class; 1.0 for classes with no candidates
};

// Per-class thresholds minimizing (proxy error of the selection)/(fraction
// selected) == mean(1 - confidence) over the selected set, searched over the
// observed confidence values; ties prefer the larger selection. Empty
// selection has ratio +inf.
TransductiveSelection policy_transductive(const std::vector<double>& scores,
                                          const std::vector<int>& class_predictions,
                                          int class_count);

struct SelfTrainData {
    Matrix x_labeled;
    std::vector<int> y_labeled;
    Matrix x_unlabeled;
    std::vector<int> y_unlabeled_hidden; // optional ground truth for logging
    Matrix x_test;                       // optional
    std::vector<int> y_test;
};

struct IterationLog {
    int t = 0;
    int n_selected = 0;
    int n_labeled_total = 0;
    double pseudo_label_accuracy = 0; // NaN when unavailable
    double test_accuracy_after_iter = 0; // NaN when unavailable
};

struct SelfTrainResult {
    DiverseHeadNetwork net;
    std::vector<IterationLog> log;
    std::vector<int> pseudo_labeled_indices; // into x_unlabeled, in move order
    std::vector<int> pseudo_labels;          // parallel to the above
    std::vector<int> remaining_unlabeled;    // into x_unlabeled
};

using NetFactory = std::function<DiverseHeadNetwork(std::uint64_t)>;

// One (re-)training: epochs*iters_per_epoch steps of the routed total loss,
// minibatches sampled with replacement from Rng(cfg.seed, "batch",
// stream_index). An empty unlabeled set trains the supervised path only.
void train_network(DiverseHeadNetwork& net, const Matrix& x_l, const std::vector<int>& y_l,
                   const Matrix& x_u, const TrainConfig& cfg, std::uint64_t stream_index);

// The wrapper loop: train -> score -> select -> pseudo-label -> move, for
// self_train_iters iterations or until the unlabeled pool empties. The
// network is rebuilt from net_factory each iteration unless warm_start.
// Pseudo-labels are prediction-head argmaxes. An empty selection logs an
// empty iteration and continues.
SelfTrainResult run_self_training(const SelfTrainData& data, const NetFactory& net_factory,
                                  const PolicyConfig& policy, const TrainConfig& cfg);

// JSON-lines rendering of the iteration log:
// {"t":..,"n_selected":..,"n_labeled_total":..,"pseudo_label_accuracy":..,
//  "test_accuracy_after_iter":..} with null for unavailable metrics.
std::string iteration_log_jsonl(const std::vector<IterationLog>& log);

} // namespace divst
