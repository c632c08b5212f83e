#include "divst/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "divst/data.hpp"
#include "divst/errors.hpp"
#include "divst/rng.hpp"
#include "json.hpp"

namespace divst {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_scores(const std::vector<double>& scores) {
    for (double s : scores) {
        if (!std::isfinite(s)) throw InputError("non-finite confidence score");
    }
}

double empirical_quantile(std::vector<double> sorted_scores, double level) {
    // nearest-rank: 1-based index ceil(level*n) on the ascending array
    std::size_t n = sorted_scores.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return sorted_scores[rank - 1];
}

double pareto_quantile(const std::vector<double>& scores, double level) {
    // One-parameter Pareto over [x_m, inf): alpha-hat = n / sum log(x_i/x_m),
    // quantile F^-1(q) = x_m * (1-q)^(-1/alpha-hat).
    double x_m = *std::min_element(scores.begin(), scores.end());
    x_m = std::max(x_m, 1e-12);
    double log_sum = 0.0;
    for (double s : scores) log_sum += std::log(std::max(s, x_m) / x_m);
    if (log_sum <= 0.0) return x_m; // degenerate: all scores equal
    double alpha = static_cast<double>(scores.size()) / log_sum;
    return x_m * std::pow(1.0 - level, -1.0 / alpha);
}

} // namespace

std::vector<int> policy_fixed_threshold(const std::vector<double>& scores, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta must lie in (0,1)");
    check_scores(scores);
    std::vector<int> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > theta) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> policy_curriculum(const std::vector<double>& scores, double delta, int t,
                                   QuantileMode mode) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (t < 1) throw ConfigError("curriculum iteration must be >= 1");
    check_scores(scores);
    if (scores.empty()) return {};

    double level = 1.0 - static_cast<double>(t) * delta;
    if (level <= 0.0) {
        std::vector<int> all(scores.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    double threshold;
    if (mode == QuantileMode::Empirical) {
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        threshold = empirical_quantile(std::move(sorted), level);
    } else {
        threshold = pareto_quantile(scores, level);
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > threshold) out.push_back(static_cast<int>(i));
    }
    return out;
}

TransductiveSelection policy_transductive(const std::vector<double>& scores,
                                          const std::vector<int>& class_predictions,
                                          int class_count) {
    if (scores.size() != class_predictions.size()) {
        throw ShapeError("scores/predictions length mismatch");
    }
    if (class_count < 1) throw ConfigError("class_count must be positive");
    check_scores(scores);
    for (int c : class_predictions) {
        if (c < 0 || c >= class_count) throw InputError("prediction out of class range");
    }

    TransductiveSelection out;
    out.thresholds.assign(class_count, 1.0);
    if (scores.empty()) return out;

    // The per-example cost (1 - confidence) does not depend on the class, so
    // the joint per-class argmin is realized by one global confidence cut:
    // minimizing mean(1 - conf) over the selected set. Enumerate all cuts at
    // the distinct observed values plus select-all; ties prefer the larger
    // selection (the lower cut).
    std::vector<double> cuts = scores;
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.insert(cuts.begin(), -1.0); // select everything

    double best_ratio = std::numeric_limits<double>::infinity();
    double best_cut = 1.0;
    for (double cut : cuts) {
        double sum = 0.0;
        std::size_t count = 0;
        for (double s : scores) {
            if (s > cut) {
                sum += 1.0 - s;
                ++count;
            }
        }
        if (count == 0) continue; // empty selection: ratio +inf, never optimal
        double ratio = sum / static_cast<double>(count);
        if (ratio < best_ratio - 1e-15) {
            best_ratio = ratio;
            best_cut = cut;
        }
        // equal ratio at a higher cut would shrink the selection; keep the
        // first (lowest) cut achieving the minimum
    }

    std::vector<char> class_seen(class_count, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        class_seen[class_predictions[i]] = 1;
        if (scores[i] > best_cut) out.selected.push_back(static_cast<int>(i));
    }
    for (int c = 0; c < class_count; ++c) {
        if (class_seen[c]) out.thresholds[c] = best_cut;
    }
    return out;
}

void train_network(DiverseHeadNetwork& net, const Matrix& x_l, const std::vector<int>& y_l,
                   const Matrix& x_u, const TrainConfig& cfg, std::uint64_t stream_index) {
    if (x_l.rows() == 0) throw ConfigError("training needs a nonempty labeled set");
    if (y_l.size() != x_l.rows()) throw ShapeError("labeled batch size mismatch");
    if (cfg.epochs < 1 || cfg.iters_per_epoch < 1) throw ConfigError("bad epoch/iteration count");

    Adam adam(cfg.lr);
    adam.attach(net.param_refs());
    Rng rng(cfg.seed, "batch", stream_index);

    const std::size_t n_l = x_l.rows();
    const std::size_t n_u = x_u.rows();
    const std::size_t bl = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_labeled), n_l);
    const std::size_t bu =
        n_u == 0 ? 0 : std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_unlabeled), n_u);

    Matrix xb_l(bl, x_l.cols());
    std::vector<int> yb(bl);
    Matrix xb_u(bu, x_l.cols());

    const int steps = cfg.epochs * cfg.iters_per_epoch;
    for (int s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < bl; ++i) {
            std::size_t pick = rng.below(n_l);
            yb[i] = y_l[pick];
            const double* src = x_l.row(pick);
            std::copy(src, src + x_l.cols(), xb_l.row(i));
        }
        for (std::size_t i = 0; i < bu; ++i) {
            std::size_t pick = rng.below(n_u);
            const double* src = x_u.row(pick);
            std::copy(src, src + x_u.cols(), xb_u.row(i));
        }
        total_loss_step(net, xb_l, yb, xb_u, adam);
    }
}

SelfTrainResult run_self_training(const SelfTrainData& data, const NetFactory& net_factory,
                                  const PolicyConfig& policy, const TrainConfig& cfg) {
    if (data.x_labeled.rows() == 0) throw ConfigError("self-training needs labeled data");
    if (data.y_labeled.size() != data.x_labeled.rows()) {
        throw ShapeError("labeled pool size mismatch");
    }
    if (cfg.self_train_iters < 1) throw ConfigError("need at least one self-training iteration");
    if (!data.y_unlabeled_hidden.empty() &&
        data.y_unlabeled_hidden.size() != data.x_unlabeled.rows()) {
        throw ShapeError("hidden-label count mismatch");
    }

    const std::size_t d = data.x_labeled.cols();
    Matrix pool_x = data.x_labeled;
    std::vector<int> pool_y = data.y_labeled;
    std::vector<int> remaining(data.x_unlabeled.rows());
    std::iota(remaining.begin(), remaining.end(), 0);

    SelfTrainResult result{net_factory(Rng(cfg.seed, "reinit", 1).next_u64()), {}, {}, {}, {}};
    for (int t = 1; t <= cfg.self_train_iters; ++t) {
        if (t > 1 && !cfg.warm_start) {
            result.net = net_factory(Rng(cfg.seed, "reinit", static_cast<std::uint64_t>(t))
                                         .next_u64());
        }
        Matrix x_u_rem = gather_rows(data.x_unlabeled, remaining);
        train_network(result.net, pool_x, pool_y, x_u_rem, cfg, static_cast<std::uint64_t>(t));

        IterationLog entry;
        entry.t = t;
        entry.pseudo_label_accuracy = kNan;
        entry.test_accuracy_after_iter = kNan;

        std::vector<int> selected;
        std::vector<int> new_labels;
        if (!remaining.empty() && policy.kind != PolicyKind::None) {
            ConfidenceScores scores = score_unlabeled(result.net, x_u_rem);
            const std::vector<double>& conf =
                policy.confidence_source == ConfidenceSource::Softmax ? scores.softmax_max
                                                                      : scores.s_t;
            switch (policy.kind) {
            case PolicyKind::FixedThreshold:
                selected = policy_fixed_threshold(conf, policy.theta);
                break;
            case PolicyKind::Curriculum:
                selected = policy_curriculum(conf, policy.delta, t, policy.quantile_mode);
                break;
            case PolicyKind::Transductive:
                selected = policy_transductive(conf, scores.predicted_class,
                                               static_cast<int>(result.net.cfg.classes))
                               .selected;
                break;
            case PolicyKind::None:
                break;
            }
            if (!selected.empty()) {
                int correct = 0, known = 0;
                for (int local : selected) new_labels.push_back(scores.predicted_class[local]);
                for (std::size_t k = 0; k < selected.size(); ++k) {
                    int orig = remaining[selected[k]];
                    if (!data.y_unlabeled_hidden.empty()) {
                        ++known;
                        if (new_labels[k] == data.y_unlabeled_hidden[orig]) ++correct;
                    }
                }
                if (known > 0) {
                    entry.pseudo_label_accuracy =
                        static_cast<double>(correct) / static_cast<double>(known);
                }
            }
        }

        // move: append selected rows to the labeled pool, shrink the pool
        if (!selected.empty()) {
            Matrix grown(pool_x.rows() + selected.size(), d);
            for (std::size_t i = 0; i < pool_x.rows(); ++i) {
                const double* src = pool_x.row(i);
                std::copy(src, src + d, grown.row(i));
            }
            std::vector<char> drop(remaining.size(), 0);
            for (std::size_t k = 0; k < selected.size(); ++k) {
                int local = selected[k];
                int orig = remaining[local];
                drop[local] = 1;
                const double* src = data.x_unlabeled.row(orig);
                std::copy(src, src + d, grown.row(pool_x.rows() + k));
                pool_y.push_back(new_labels[k]);
                result.pseudo_labeled_indices.push_back(orig);
                result.pseudo_labels.push_back(new_labels[k]);
            }
            pool_x = std::move(grown);
            std::vector<int> kept;
            kept.reserve(remaining.size() - selected.size());
            for (std::size_t i = 0; i < remaining.size(); ++i) {
                if (!drop[i]) kept.push_back(remaining[i]);
            }
            remaining = std::move(kept);
        }

        entry.n_selected = static_cast<int>(selected.size());
        entry.n_labeled_total = static_cast<int>(pool_x.rows());
        if (data.x_test.rows() > 0 && data.y_test.size() == data.x_test.rows()) {
            Matrix probs = result.net.pred_probs(data.x_test);
            int correct = 0;
            for (std::size_t i = 0; i < probs.rows(); ++i) {
                std::size_t arg = 0;
                for (std::size_t j = 1; j < probs.cols(); ++j) {
                    if (probs(i, j) > probs(i, arg)) arg = j;
                }
                if (static_cast<int>(arg) == data.y_test[i]) ++correct;
            }
            entry.test_accuracy_after_iter =
                static_cast<double>(correct) / static_cast<double>(probs.rows());
        }
        result.log.push_back(entry);
        if (remaining.empty()) break;
    }
    result.remaining_unlabeled = std::move(remaining);
    return result;
}

std::string iteration_log_jsonl(const std::vector<IterationLog>& log) {
    std::ostringstream out;
    for (const IterationLog& e : log) {
        nlohmann::json j;
        j["t"] = e.t;
        j["n_selected"] = e.n_selected;
        j["n_labeled_total"] = e.n_labeled_total;
        if (std::isnan(e.pseudo_label_accuracy)) {
            j["pseudo_label_accuracy"] = nullptr;
        } else {
            j["pseudo_label_accuracy"] = e.pseudo_label_accuracy;
        }
        if (std::isnan(e.test_accuracy_after_iter)) {
            j["test_accuracy_after_iter"] = nullptr;
        } else {
            j["test_accuracy_after_iter"] = e.test_accuracy_after_iter;
        }
        out << j.dump() << '\n';
    }
    return out.str();
}

} // namespace divst
