#include "divst/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "divst/errors.hpp"
#include "divst/rng.hpp"
#include "json.hpp"

namespace divst {

namespace {

// right-inclusive equal-width binning: (b-1)/B < c <= b/B, with 0 in bin 0
int bin_of(double c, int bins) {
    int b = static_cast<int>(std::ceil(c * bins)) - 1;
    return std::clamp(b, 0, bins - 1);
}

std::vector<CalibrationBin> empty_bins(int bins) {
    std::vector<CalibrationBin> out(bins);
    for (int b = 0; b < bins; ++b) {
        out[b].lo = static_cast<double>(b) / bins;
        out[b].hi = static_cast<double>(b + 1) / bins;
    }
    return out;
}

void append_bin_rows(std::ostringstream& os, const std::vector<CalibrationBin>& bins) {
    char buf[160];
    for (const CalibrationBin& b : bins) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d,%.10g,%.10g\n", b.lo, b.hi, b.count,
                      b.mean_conf, b.accuracy);
        os << buf;
    }
}

} // namespace

double accuracy(const std::vector<int>& predictions, const std::vector<int>& truth) {
    if (predictions.empty()) throw InputError("accuracy of an empty prediction set");
    if (predictions.size() != truth.size()) throw InputError("prediction/truth length mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

CalibrationReport ece(const std::vector<double>& confidences, const std::vector<char>& correct,
                      int bins) {
    if (bins < 1) throw ConfigError("need at least one bin");
    if (confidences.size() != correct.size()) throw InputError("confidence/flag length mismatch");
    for (double c : confidences) {
        if (!(c >= 0.0 && c <= 1.0)) throw InputError("confidence outside [0,1]");
    }

    CalibrationReport rep;
    rep.bins = empty_bins(bins);
    rep.n = static_cast<int>(confidences.size());
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<int> correct_sum(bins, 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        int b = bin_of(confidences[i], bins);
        ++rep.bins[b].count;
        conf_sum[b] += confidences[i];
        correct_sum[b] += correct[i] ? 1 : 0;
    }
    for (int b = 0; b < bins; ++b) {
        if (rep.bins[b].count == 0) continue;
        double cnt = rep.bins[b].count;
        rep.bins[b].mean_conf = conf_sum[b] / cnt;
        rep.bins[b].accuracy = correct_sum[b] / cnt;
        rep.ece += cnt / static_cast<double>(rep.n) *
                   std::fabs(rep.bins[b].accuracy - rep.bins[b].mean_conf);
    }
    return rep;
}

HistogramTable confidence_histograms(const std::vector<double>& scores,
                                     const std::vector<char>& correct, int bins) {
    if (bins < 1) throw ConfigError("need at least one bin");
    if (scores.empty()) throw InputError("histogram of an empty score set");
    if (scores.size() != correct.size()) throw InputError("score/flag length mismatch");

    HistogramTable table;
    table.correct_bins = empty_bins(bins);
    table.wrong_bins = empty_bins(bins);
    std::vector<double> sums_c(bins, 0.0), sums_w(bins, 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double s = std::clamp(scores[i], 0.0, 1.0);
        int b = bin_of(s, bins);
        if (correct[i]) {
            ++table.correct_bins[b].count;
            sums_c[b] += s;
        } else {
            ++table.wrong_bins[b].count;
            sums_w[b] += s;
        }
    }
    for (int b = 0; b < bins; ++b) {
        if (table.correct_bins[b].count > 0) {
            table.correct_bins[b].mean_conf = sums_c[b] / table.correct_bins[b].count;
            table.correct_bins[b].accuracy = 1.0;
        }
        if (table.wrong_bins[b].count > 0) {
            table.wrong_bins[b].mean_conf = sums_w[b] / table.wrong_bins[b].count;
            table.wrong_bins[b].accuracy = 0.0;
        }
    }
    return table;
}

double leave_one_out_accuracy(const Matrix& x, const std::vector<int>& y,
                              const NetFactory& net_factory, const TrainConfig& cfg) {
    const std::size_t n = x.rows();
    if (n < 2) throw ConfigError("leave-one-out needs at least 2 points");
    if (y.size() != n) throw ShapeError("label count mismatch");

    const std::size_t d = x.cols();
    Matrix fold_x(n - 1, d);
    std::vector<int> fold_y(n - 1);
    Matrix holdout(1, d);
    Matrix empty_u;
    int correct = 0;
    for (std::size_t f = 0; f < n; ++f) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == f) continue;
            const double* src = x.row(i);
            std::copy(src, src + d, fold_x.row(k));
            fold_y[k] = y[i];
            ++k;
        }
        const double* src = x.row(f);
        std::copy(src, src + d, holdout.row(0));

        DiverseHeadNetwork net = net_factory(Rng(cfg.seed, "loo-init", f).next_u64());
        train_network(net, fold_x, fold_y, empty_u, cfg, f);
        Matrix probs = net.pred_probs(holdout);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < probs.cols(); ++j) {
            if (probs(0, j) > probs(0, arg)) arg = j;
        }
        if (static_cast<int>(arg) == y[f]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

MetricSummary summarize(const std::string& id, const std::vector<double>& per_seed) {
    if (per_seed.empty()) throw InputError("summary of an empty metric array");
    MetricSummary s;
    s.id = id;
    s.per_seed = per_seed;
    for (double v : per_seed) s.mean += v;
    s.mean /= static_cast<double>(per_seed.size());
    if (per_seed.size() > 1) {
        double acc = 0.0;
        for (double v : per_seed) acc += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(per_seed.size() - 1));
    }
    return s;
}

std::string calibration_to_csv(const CalibrationReport& report) {
    std::ostringstream os;
    os << "bin_lo,bin_hi,count,mean_conf,accuracy\n";
    append_bin_rows(os, report.bins);
    return os.str();
}

std::string histograms_to_csv(const HistogramTable& table) {
    std::ostringstream os;
    os << "bin_lo,bin_hi,count,mean_conf,accuracy\n";
    append_bin_rows(os, table.correct_bins);
    append_bin_rows(os, table.wrong_bins);
    return os.str();
}

std::string calibration_to_json(const CalibrationReport& report) {
    nlohmann::json j;
    j["ece"] = report.ece;
    j["n"] = report.n;
    j["bins"] = nlohmann::json::array();
    for (const CalibrationBin& b : report.bins) {
        j["bins"].push_back({{"lo", b.lo},
                             {"hi", b.hi},
                             {"count", b.count},
                             {"mean_conf", b.mean_conf},
                             {"accuracy", b.accuracy}});
    }
    return j.dump(2);
}

} // namespace divst
