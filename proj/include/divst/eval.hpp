#pragma once

#include <string>
#include <vector>

#include "divst/matrix.hpp"
#include "divst/selftrain.hpp"

namespace divst {

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
    double mean_conf = 0.0; // 0 for empty bins
    double accuracy = 0.0;  // 0 for empty bins
};

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
    int n = 0;
};

// Fraction of matching entries; empty or mismatched input is an error.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& truth);

// Expected Calibration Error over equal-width right-inclusive bins on [0,1]
// (confidence exactly 0 falls in bin 0); empty bins contribute nothing.
// Confidences outside [0,1] are an input error.
CalibrationReport ece(const std::vector<double>& confidences,
                      const std::vector<char>& correct, int bins = 10);

struct HistogramTable {
    std::vector<CalibrationBin> correct_bins; // accuracy column = 1
    std::vector<CalibrationBin> wrong_bins;   // accuracy column = 0
};

// Confidence histograms of correctly and wrongly predicted examples,
// 20 equal-width bins by default. Out-of-range scores clamp into the end
// bins (this op never throws on values).
HistogramTable confidence_histograms(const std::vector<double>& scores,
                                     const std::vector<char>& correct, int bins = 20);

// Leave-one-out accuracy of the supervised path: one full training per held-
// out point (fold f seeds its batches with stream index f and its network
// init from Rng(cfg.seed, "loo-init", f)); prediction-head argmax on the
// held-out point, averaged. The ensemble heads cannot influence the result
// (stop-gradient), so folds train without unlabeled data.
double leave_one_out_accuracy(const Matrix& x, const std::vector<int>& y,
                              const NetFactory& net_factory, const TrainConfig& cfg);

struct MetricSummary {
    std::string id;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation (n-1)
};

MetricSummary summarize(const std::string& id, const std::vector<double>& per_seed);

// CSV with header bin_lo,bin_hi,count,mean_conf,accuracy.
std::string calibration_to_csv(const CalibrationReport& report);
std::string histograms_to_csv(const HistogramTable& table);
std::string calibration_to_json(const CalibrationReport& report);

} // namespace divst
