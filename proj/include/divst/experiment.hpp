#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divst/data.hpp"
#include "divst/eval.hpp"
#include "divst/selftrain.hpp"

namespace divst {

// Flat key=value experiment description; every field has a CLI override.
struct ExperimentConfig {
    // data source: a built-in generator name ("mushrooms-like",
    // "two-gaussians") or a file path
    std::string dataset = "mushrooms-like";
    std::string format = "csv"; // csv | libsvm, for file datasets
    bool has_header = false;
    std::uint64_t synth_seed = 8124;
    int two_gaussians_n = 2000;
    double two_gaussians_separation = 2.0;
    bool standardize_features = true;
    double test_fraction = 0.25;

    // labeling
    std::string label_mode = "ssb"; // iid | ssb | interpolated
    int n_labeled = 79;
    double label_r = 2.0;
    double label_alpha = 1.0;

    // pseudo-labeling policy
    std::string policy = "curriculum"; // none | threshold | curriculum | transductive
    double theta = 0.8;
    double delta = 0.4;
    std::string quantile = "empirical"; // empirical | pareto
    std::string confidence = "tsim";    // tsim | softmax

    // network
    int m_heads = 5;
    double gamma = 1.0;
    int hidden = 128;

    // training
    int epochs = 5;
    int iters_per_epoch = 100;
    double lr = 1e-3;
    int batch_labeled = 32;
    int batch_unlabeled = 256;
    int self_train_iters = 5;
    bool warm_start = false;

    // runner
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string out_dir = "out";
    int workers = 1;
    std::string sweep;                // "" | gamma | alpha
    std::vector<double> sweep_values; // required when sweep is set
};

ExperimentConfig parse_config_file(const std::string& path);
// key=value override; unknown keys are a configuration error
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

struct CellResult {
    std::uint64_t seed = 0;
    double sweep_value = 0.0; // NaN when the run has no sweep
    double test_accuracy = 0.0;
    double ece_tsim = 0.0;      // final net, T-similarity confidence, unlabeled pool
    double ece_softmax = 0.0;   // final net, softmax confidence, unlabeled pool
    std::vector<IterationLog> iterations;
    HistogramTable hist_tsim;
    HistogramTable hist_softmax;
    std::string error; // nonempty when this cell failed
};

struct ExperimentRecord {
    ExperimentConfig config;
    std::vector<CellResult> cells;
    std::vector<MetricSummary> aggregates; // test accuracy per sweep value (or overall)
    double wall_seconds = 0.0;
    int version = 1;
};

// The experiment pipeline: per (sweep value ×) seed, split -> standardize ->
// label -> self-train -> evaluate. A failing cell records its error and the
// run continues. Splits and labelings depend only on (dataset, seed,
// labeling config), so runs differing in policy/confidence/γ are paired.
ExperimentRecord run_experiment(const ExperimentConfig& cfg);

std::string record_to_json(const ExperimentRecord& record);
ExperimentRecord record_from_json(const std::string& text);
std::string summary_csv(const ExperimentRecord& record);

// Tidy plot tables derived from a record:
//   calibration_vs_gamma: gamma,seed,ece_tsim,ece_softmax,test_accuracy
//   ablation:             gamma,seed,test_accuracy
//   bias_strength:        alpha,seed,test_accuracy
//   histograms:           source,group,bin_lo,bin_hi,count,mean_conf
// A record lacking the required sweep is a configuration error.
std::string plot_data_csv(const ExperimentRecord& record, const std::string& kind);

// {policy × confidence} grid sharing splits; one row per dataset, one
// column per (policy, confidence) pair, cells "mean ± std".
std::string method_grid_csv(const ExperimentConfig& base,
                            const std::vector<std::string>& policies,
                            const std::vector<std::string>& confidences);

// Leave-one-out over the labeled pool of each seed's split+labeling.
struct LooResult {
    MetricSummary summary;
    std::string csv; // seed,loo_accuracy
};
LooResult run_loo(const ExperimentConfig& cfg);

// Split manifest (JSON) for one seed of this config's split+labeling.
std::string make_split_manifest(const ExperimentConfig& cfg, std::uint64_t seed);

// Theory verification battery over seeded random instances. Returns the
// number of failed checks and renders a JSON report (one entry per check).
// inject_gradient_fault deliberately mis-scales the analytic gradient so the
// finite-difference check must fail (self-test of the battery).
int verify_battery(std::uint64_t seed, bool inject_gradient_fault, std::string* json_report);

// Materialize the configured dataset (generator or file).
Dataset load_configured_dataset(const ExperimentConfig& cfg);

} // namespace divst
