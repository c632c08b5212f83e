#include "divst/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "divst/confidence.hpp"
#include "divst/errors.hpp"
#include "divst/linalg.hpp"
#include "divst/rng.hpp"
#include "divst/synth.hpp"
#include "divst/theory.hpp"
#include "json.hpp"

namespace divst {
namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an unsigned integer: '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw ConfigError("config key '" + key + "': not a boolean: '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

PolicyConfig policy_from_config(const ExperimentConfig& cfg) {
    PolicyConfig p;
    if (cfg.policy == "none") p.kind = PolicyKind::None;
    else if (cfg.policy == "threshold") p.kind = PolicyKind::FixedThreshold;
    else if (cfg.policy == "curriculum") p.kind = PolicyKind::Curriculum;
    else if (cfg.policy == "transductive") p.kind = PolicyKind::Transductive;
    else throw ConfigError("unknown policy: '" + cfg.policy + "'");
    p.theta = cfg.theta;
    p.delta = cfg.delta;
    if (cfg.confidence == "tsim") p.confidence_source = ConfidenceSource::TSimilarity;
    else if (cfg.confidence == "softmax") p.confidence_source = ConfidenceSource::Softmax;
    else throw ConfigError("unknown confidence source: '" + cfg.confidence + "'");
    if (cfg.quantile == "empirical") p.quantile_mode = QuantileMode::Empirical;
    else if (cfg.quantile == "pareto") p.quantile_mode = QuantileMode::Pareto;
    else throw ConfigError("unknown quantile mode: '" + cfg.quantile + "'");
    return p;
}

TrainConfig train_from_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.iters_per_epoch = cfg.iters_per_epoch;
    t.lr = cfg.lr;
    t.batch_labeled = cfg.batch_labeled;
    t.batch_unlabeled = cfg.batch_unlabeled;
    t.self_train_iters = cfg.self_train_iters;
    t.warm_start = cfg.warm_start;
    t.seed = seed;
    return t;
}

struct SeedSetup {
    Dataset ds; // standardized copy
    SplitResult split;
    SelfTrainData data;
};

// Shared preprocessing for every entry point: the split and the labeling
// depend only on (dataset, seed, labeling config), never on the policy or
// the confidence source, which is what makes runs paired across methods.
SeedSetup prepare_seed(const ExperimentConfig& cfg, const Dataset& base, std::uint64_t seed,
                       double alpha_override = std::numeric_limits<double>::quiet_NaN()) {
    SeedSetup s;
    s.ds = base;
    s.split = split_train_test(s.ds, cfg.test_fraction, seed);
    if (cfg.standardize_features) {
        standardize(s.ds, s.split.unlabeled); // entire training side; labeling happens next
    }
    if (!std::isnan(alpha_override)) {
        s.split = label_interpolated(s.ds, s.split, cfg.n_labeled, cfg.label_r, alpha_override, seed);
    } else if (cfg.label_mode == "iid") {
        s.split = label_iid(s.ds, s.split, cfg.n_labeled, seed);
    } else if (cfg.label_mode == "ssb") {
        s.split = label_ssb(s.ds, s.split, cfg.n_labeled, cfg.label_r, seed);
    } else if (cfg.label_mode == "interpolated") {
        s.split = label_interpolated(s.ds, s.split, cfg.n_labeled, cfg.label_r, cfg.label_alpha, seed);
    } else {
        throw ConfigError("unknown label mode: '" + cfg.label_mode + "'");
    }
    s.data.x_labeled = gather_rows(s.ds.features, s.split.labeled);
    s.data.y_labeled = gather_labels(s.ds.labels, s.split.labeled);
    s.data.x_unlabeled = gather_rows(s.ds.features, s.split.unlabeled);
    s.data.y_unlabeled_hidden = gather_labels(s.ds.labels, s.split.unlabeled);
    s.data.x_test = gather_rows(s.ds.features, s.split.test);
    s.data.y_test = gather_labels(s.ds.labels, s.split.test);
    return s;
}

NetConfig net_from_config(const ExperimentConfig& cfg, int input_dim, int classes,
                          double gamma_value) {
    NetConfig nc;
    nc.input_dim = input_dim;
    nc.hidden = cfg.hidden;
    nc.classes = classes;
    nc.M = cfg.m_heads;
    nc.gamma = gamma_value;
    return nc;
}

CellResult run_one_cell(const ExperimentConfig& cfg, const Dataset& base, std::uint64_t seed,
                        double sweep_value) {
    CellResult cell;
    cell.seed = seed;
    cell.sweep_value = sweep_value;
    double gamma_value = cfg.gamma;
    double alpha_override = std::numeric_limits<double>::quiet_NaN();
    if (cfg.sweep == "gamma" && !std::isnan(sweep_value)) gamma_value = sweep_value;
    if (cfg.sweep == "alpha" && !std::isnan(sweep_value)) alpha_override = sweep_value;

    SeedSetup s = prepare_seed(cfg, base, seed, alpha_override);
    NetConfig nc = net_from_config(cfg, s.ds.features.cols(), s.ds.class_count, gamma_value);
    NetFactory factory = [nc](std::uint64_t init_seed) {
        return DiverseHeadNetwork(nc, init_seed);
    };
    PolicyConfig policy = policy_from_config(cfg);
    TrainConfig train = train_from_config(cfg, seed);

    SelfTrainResult result = run_self_training(s.data, factory, policy, train);
    cell.iterations = result.log;

    // test accuracy of the final network
    std::vector<int> pred;
    pred.reserve(s.data.x_test.rows());
    Matrix probs = result.net.pred_probs(s.data.x_test);
    for (int i = 0; i < probs.rows(); ++i) {
        int arg = 0;
        for (int c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, arg)) arg = c;
        pred.push_back(arg);
    }
    cell.test_accuracy = accuracy(pred, s.data.y_test);

    // calibration of both confidence measures on the full unlabeled pool
    if (s.data.x_unlabeled.rows() > 0) {
        ConfidenceScores scores = score_unlabeled(result.net, s.data.x_unlabeled);
        std::vector<char> correct(scores.predicted_class.size());
        for (std::size_t i = 0; i < correct.size(); ++i)
            correct[i] = scores.predicted_class[i] == s.data.y_unlabeled_hidden[i] ? 1 : 0;
        cell.ece_tsim = ece(scores.s_t, correct, 10).ece;
        cell.ece_softmax = ece(scores.softmax_max, correct, 10).ece;
        cell.hist_tsim = confidence_histograms(scores.s_t, correct, 20);
        cell.hist_softmax = confidence_histograms(scores.softmax_max, correct, 20);
    } else {
        cell.ece_tsim = cell.ece_softmax = 0.0;
    }
    return cell;
}

json bins_to_json(const std::vector<CalibrationBin>& bins) {
    json arr = json::array();
    for (const auto& b : bins) {
        arr.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count},
                       {"mean_conf", b.mean_conf}});
    }
    return arr;
}

std::vector<CalibrationBin> bins_from_json(const json& arr) {
    std::vector<CalibrationBin> bins;
    for (const auto& b : arr) {
        CalibrationBin cb;
        cb.lo = b.at("lo").get<double>();
        cb.hi = b.at("hi").get<double>();
        cb.count = b.at("count").get<int>();
        cb.mean_conf = b.at("mean_conf").get<double>();
        bins.push_back(cb);
    }
    return bins;
}

json number_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

double number_from(const json& v) {
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return v.get<double>();
}

} // namespace

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + t + "'");
        }
        apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "dataset") cfg.dataset = value;
    else if (key == "format") cfg.format = value;
    else if (key == "has_header") cfg.has_header = parse_bool(key, value);
    else if (key == "synth_seed") cfg.synth_seed = parse_u64(key, value);
    else if (key == "two_gaussians_n") cfg.two_gaussians_n = parse_int(key, value);
    else if (key == "two_gaussians_separation") cfg.two_gaussians_separation = parse_double(key, value);
    else if (key == "standardize") cfg.standardize_features = parse_bool(key, value);
    else if (key == "test_fraction") cfg.test_fraction = parse_double(key, value);
    else if (key == "label_mode") cfg.label_mode = value;
    else if (key == "n_labeled") cfg.n_labeled = parse_int(key, value);
    else if (key == "label_r") cfg.label_r = parse_double(key, value);
    else if (key == "label_alpha") cfg.label_alpha = parse_double(key, value);
    else if (key == "policy") cfg.policy = value;
    else if (key == "theta") cfg.theta = parse_double(key, value);
    else if (key == "delta") cfg.delta = parse_double(key, value);
    else if (key == "quantile") cfg.quantile = value;
    else if (key == "confidence") cfg.confidence = value;
    else if (key == "m_heads") cfg.m_heads = parse_int(key, value);
    else if (key == "gamma") cfg.gamma = parse_double(key, value);
    else if (key == "hidden") cfg.hidden = parse_int(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "iters_per_epoch") cfg.iters_per_epoch = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "batch_labeled") cfg.batch_labeled = parse_int(key, value);
    else if (key == "batch_unlabeled") cfg.batch_unlabeled = parse_int(key, value);
    else if (key == "self_train_iters") cfg.self_train_iters = parse_int(key, value);
    else if (key == "warm_start") cfg.warm_start = parse_bool(key, value);
    else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& s : split_list(value)) cfg.seeds.push_back(parse_u64(key, s));
        if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty list");
    } else if (key == "out") cfg.out_dir = value;
    else if (key == "workers") cfg.workers = parse_int(key, value);
    else if (key == "sweep") cfg.sweep = value;
    else if (key == "sweep_values") {
        cfg.sweep_values.clear();
        for (const auto& s : split_list(value)) cfg.sweep_values.push_back(parse_double(key, s));
    } else {
        throw ConfigError("unknown config key: '" + key + "'");
    }
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = cfg.dataset;
    j["format"] = cfg.format;
    j["has_header"] = cfg.has_header;
    j["synth_seed"] = cfg.synth_seed;
    j["two_gaussians_n"] = cfg.two_gaussians_n;
    j["two_gaussians_separation"] = cfg.two_gaussians_separation;
    j["standardize"] = cfg.standardize_features;
    j["test_fraction"] = cfg.test_fraction;
    j["label_mode"] = cfg.label_mode;
    j["n_labeled"] = cfg.n_labeled;
    j["label_r"] = cfg.label_r;
    j["label_alpha"] = cfg.label_alpha;
    j["policy"] = cfg.policy;
    j["theta"] = cfg.theta;
    j["delta"] = cfg.delta;
    j["quantile"] = cfg.quantile;
    j["confidence"] = cfg.confidence;
    j["m_heads"] = cfg.m_heads;
    j["gamma"] = cfg.gamma;
    j["hidden"] = cfg.hidden;
    j["epochs"] = cfg.epochs;
    j["iters_per_epoch"] = cfg.iters_per_epoch;
    j["lr"] = cfg.lr;
    j["batch_labeled"] = cfg.batch_labeled;
    j["batch_unlabeled"] = cfg.batch_unlabeled;
    j["self_train_iters"] = cfg.self_train_iters;
    j["warm_start"] = cfg.warm_start;
    j["seeds"] = cfg.seeds;
    j["out"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    j["sweep"] = cfg.sweep;
    j["sweep_values"] = cfg.sweep_values;
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        cfg.dataset = j.at("dataset").get<std::string>();
        cfg.format = j.at("format").get<std::string>();
        cfg.has_header = j.at("has_header").get<bool>();
        cfg.synth_seed = j.at("synth_seed").get<std::uint64_t>();
        cfg.two_gaussians_n = j.at("two_gaussians_n").get<int>();
        cfg.two_gaussians_separation = j.at("two_gaussians_separation").get<double>();
        cfg.standardize_features = j.at("standardize").get<bool>();
        cfg.test_fraction = j.at("test_fraction").get<double>();
        cfg.label_mode = j.at("label_mode").get<std::string>();
        cfg.n_labeled = j.at("n_labeled").get<int>();
        cfg.label_r = j.at("label_r").get<double>();
        cfg.label_alpha = j.at("label_alpha").get<double>();
        cfg.policy = j.at("policy").get<std::string>();
        cfg.theta = j.at("theta").get<double>();
        cfg.delta = j.at("delta").get<double>();
        cfg.quantile = j.at("quantile").get<std::string>();
        cfg.confidence = j.at("confidence").get<std::string>();
        cfg.m_heads = j.at("m_heads").get<int>();
        cfg.gamma = j.at("gamma").get<double>();
        cfg.hidden = j.at("hidden").get<int>();
        cfg.epochs = j.at("epochs").get<int>();
        cfg.iters_per_epoch = j.at("iters_per_epoch").get<int>();
        cfg.lr = j.at("lr").get<double>();
        cfg.batch_labeled = j.at("batch_labeled").get<int>();
        cfg.batch_unlabeled = j.at("batch_unlabeled").get<int>();
        cfg.self_train_iters = j.at("self_train_iters").get<int>();
        cfg.warm_start = j.at("warm_start").get<bool>();
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.out_dir = j.at("out").get<std::string>();
        cfg.workers = j.at("workers").get<int>();
        cfg.sweep = j.at("sweep").get<std::string>();
        cfg.sweep_values = j.at("sweep_values").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("config JSON: ") + e.what());
    }
    return cfg;
}

Dataset load_configured_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == "mushrooms-like") {
        return make_mushrooms_like(cfg.synth_seed);
    }
    if (cfg.dataset == "two-gaussians") {
        return make_two_gaussians(cfg.two_gaussians_n, cfg.two_gaussians_separation,
                                  cfg.synth_seed);
    }
    DataFormat fmt;
    if (cfg.format == "csv") fmt = DataFormat::Csv;
    else if (cfg.format == "libsvm") fmt = DataFormat::LibsvmText;
    else throw ConfigError("unknown dataset format: '" + cfg.format + "'");
    return load_dataset(cfg.dataset, fmt, cfg.has_header);
}

ExperimentRecord run_experiment(const ExperimentConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    if (cfg.seeds.empty()) throw ConfigError("no seeds configured");
    if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
    if (!cfg.sweep.empty() && cfg.sweep != "gamma" && cfg.sweep != "alpha")
        throw ConfigError("unknown sweep key: '" + cfg.sweep + "' (expected gamma or alpha)");
    if (!cfg.sweep.empty() && cfg.sweep_values.empty())
        throw ConfigError("sweep '" + cfg.sweep + "' has no sweep_values");
    policy_from_config(cfg); // fail fast on bad policy/confidence names

    Dataset base = load_configured_dataset(cfg);

    std::vector<double> values;
    if (cfg.sweep.empty()) values.push_back(std::numeric_limits<double>::quiet_NaN());
    else values = cfg.sweep_values;

    struct Job {
        double value;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (double v : values)
        for (std::uint64_t s : cfg.seeds) jobs.push_back({v, s});

    ExperimentRecord record;
    record.config = cfg;
    record.cells.resize(jobs.size());

    std::size_t next = 0;
    while (next < jobs.size()) {
        std::size_t batch = std::min<std::size_t>(cfg.workers, jobs.size() - next);
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < batch; ++k) {
            std::size_t idx = next + k;
            pool.emplace_back([&, idx]() {
                const Job& job = jobs[idx];
                try {
                    record.cells[idx] = run_one_cell(cfg, base, job.seed, job.value);
                } catch (const std::exception& e) {
                    record.cells[idx].seed = job.seed;
                    record.cells[idx].sweep_value = job.value;
                    record.cells[idx].error = e.what();
                }
            });
        }
        for (auto& t : pool) t.join();
        next += batch;
    }

    for (double v : values) {
        MetricSummary ms;
        ms.id = std::isnan(v) ? "test_accuracy"
                              : "test_accuracy@" + std::to_string(v);
        for (const auto& c : record.cells) {
            bool same = (std::isnan(v) && std::isnan(c.sweep_value)) || c.sweep_value == v;
            if (same && c.error.empty()) ms.per_seed.push_back(c.test_accuracy);
        }
        if (!ms.per_seed.empty()) record.aggregates.push_back(summarize(ms.id, ms.per_seed));
    }

    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
}

std::string record_to_json(const ExperimentRecord& record) {
    json j;
    j["schema"] = "divst-record";
    j["version"] = record.version;
    j["wall_seconds"] = record.wall_seconds;
    j["config"] = json::parse(config_to_json(record.config));
    json cells = json::array();
    for (const auto& c : record.cells) {
        json jc;
        jc["seed"] = c.seed;
        jc["sweep_value"] = number_or_null(c.sweep_value);
        jc["test_accuracy"] = c.test_accuracy;
        jc["ece_tsim"] = c.ece_tsim;
        jc["ece_softmax"] = c.ece_softmax;
        jc["error"] = c.error;
        json iters = json::array();
        for (const auto& it : c.iterations) {
            iters.push_back({{"t", it.t},
                             {"n_selected", it.n_selected},
                             {"n_labeled_total", it.n_labeled_total},
                             {"pseudo_label_accuracy", number_or_null(it.pseudo_label_accuracy)},
                             {"test_accuracy_after_iter", number_or_null(it.test_accuracy_after_iter)}});
        }
        jc["iterations"] = iters;
        jc["hist_tsim"] = {{"correct", bins_to_json(c.hist_tsim.correct_bins)},
                           {"wrong", bins_to_json(c.hist_tsim.wrong_bins)}};
        jc["hist_softmax"] = {{"correct", bins_to_json(c.hist_softmax.correct_bins)},
                              {"wrong", bins_to_json(c.hist_softmax.wrong_bins)}};
        cells.push_back(jc);
    }
    j["cells"] = cells;
    json aggs = json::array();
    for (const auto& a : record.aggregates) {
        aggs.push_back({{"id", a.id}, {"per_seed", a.per_seed}, {"mean", a.mean},
                        {"stddev", a.stddev}});
    }
    j["aggregates"] = aggs;
    return j.dump(2);
}

ExperimentRecord record_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("record JSON: ") + e.what());
    }
    if (!j.contains("schema") || j["schema"] != "divst-record")
        throw ParseError("record JSON: missing or wrong schema tag");
    ExperimentRecord record;
    try {
        record.version = j.at("version").get<int>();
        record.wall_seconds = j.at("wall_seconds").get<double>();
        record.config = config_from_json(j.at("config").dump());
        for (const auto& jc : j.at("cells")) {
            CellResult c;
            c.seed = jc.at("seed").get<std::uint64_t>();
            c.sweep_value = number_from(jc.at("sweep_value"));
            c.test_accuracy = jc.at("test_accuracy").get<double>();
            c.ece_tsim = jc.at("ece_tsim").get<double>();
            c.ece_softmax = jc.at("ece_softmax").get<double>();
            c.error = jc.at("error").get<std::string>();
            for (const auto& it : jc.at("iterations")) {
                IterationLog lg;
                lg.t = it.at("t").get<int>();
                lg.n_selected = it.at("n_selected").get<int>();
                lg.n_labeled_total = it.at("n_labeled_total").get<int>();
                lg.pseudo_label_accuracy = number_from(it.at("pseudo_label_accuracy"));
                lg.test_accuracy_after_iter = number_from(it.at("test_accuracy_after_iter"));
                c.iterations.push_back(lg);
            }
            c.hist_tsim.correct_bins = bins_from_json(jc.at("hist_tsim").at("correct"));
            c.hist_tsim.wrong_bins = bins_from_json(jc.at("hist_tsim").at("wrong"));
            c.hist_softmax.correct_bins = bins_from_json(jc.at("hist_softmax").at("correct"));
            c.hist_softmax.wrong_bins = bins_from_json(jc.at("hist_softmax").at("wrong"));
            record.cells.push_back(c);
        }
        for (const auto& a : j.at("aggregates")) {
            MetricSummary ms;
            ms.id = a.at("id").get<std::string>();
            ms.per_seed = a.at("per_seed").get<std::vector<double>>();
            ms.mean = a.at("mean").get<double>();
            ms.stddev = a.at("stddev").get<double>();
            record.aggregates.push_back(ms);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("record JSON: ") + e.what());
    }
    return record;
}

std::string summary_csv(const ExperimentRecord& record) {
    std::ostringstream out;
    out << "sweep_value,seed,test_accuracy,ece_tsim,ece_softmax,error\n";
    char buf[256];
    for (const auto& c : record.cells) {
        std::string v = std::isnan(c.sweep_value) ? "" : std::to_string(c.sweep_value);
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.10g,%.10g,%.10g,%s\n", v.c_str(),
                      static_cast<unsigned long long>(c.seed), c.test_accuracy, c.ece_tsim,
                      c.ece_softmax, c.error.c_str());
        out << buf;
    }
    for (const auto& a : record.aggregates) {
        std::string v;
        auto at = a.id.find('@');
        if (at != std::string::npos) v = a.id.substr(at + 1);
        std::snprintf(buf, sizeof(buf), "%s,mean,%.10g,,,\n", v.c_str(), a.mean);
        out << buf;
        std::snprintf(buf, sizeof(buf), "%s,stddev,%.10g,,,\n", v.c_str(), a.stddev);
        out << buf;
    }
    return out.str();
}

std::string plot_data_csv(const ExperimentRecord& record, const std::string& kind) {
    std::ostringstream out;
    char buf[256];
    auto require_sweep = [&](const std::string& key) {
        if (record.config.sweep != key) {
            throw ConfigError("plot kind '" + kind + "' requires a record with sweep=" + key +
                              " (record has sweep='" + record.config.sweep + "')");
        }
    };
    if (kind == "calibration_vs_gamma") {
        require_sweep("gamma");
        out << "gamma,seed,ece_tsim,ece_softmax,test_accuracy\n";
        for (const auto& c : record.cells) {
            if (!c.error.empty()) continue;
            std::snprintf(buf, sizeof(buf), "%.10g,%llu,%.10g,%.10g,%.10g\n", c.sweep_value,
                          static_cast<unsigned long long>(c.seed), c.ece_tsim, c.ece_softmax,
                          c.test_accuracy);
            out << buf;
        }
    } else if (kind == "ablation") {
        require_sweep("gamma");
        out << "gamma,seed,test_accuracy\n";
        for (const auto& c : record.cells) {
            if (!c.error.empty()) continue;
            std::snprintf(buf, sizeof(buf), "%.10g,%llu,%.10g\n", c.sweep_value,
                          static_cast<unsigned long long>(c.seed), c.test_accuracy);
            out << buf;
        }
    } else if (kind == "bias_strength") {
        require_sweep("alpha");
        out << "alpha,seed,test_accuracy\n";
        for (const auto& c : record.cells) {
            if (!c.error.empty()) continue;
            std::snprintf(buf, sizeof(buf), "%.10g,%llu,%.10g\n", c.sweep_value,
                          static_cast<unsigned long long>(c.seed), c.test_accuracy);
            out << buf;
        }
    } else if (kind == "histograms") {
        out << "sweep_value,seed,confidence,group,bin_lo,bin_hi,count,mean_conf\n";
        for (const auto& c : record.cells) {
            if (!c.error.empty()) continue;
            std::string v = std::isnan(c.sweep_value) ? "" : std::to_string(c.sweep_value);
            auto emit = [&](const char* source, const char* group,
                            const std::vector<CalibrationBin>& bins) {
                for (const auto& b : bins) {
                    std::snprintf(buf, sizeof(buf), "%s,%llu,%s,%s,%.6f,%.6f,%d,%.10g\n",
                                  v.c_str(), static_cast<unsigned long long>(c.seed), source,
                                  group, b.lo, b.hi, b.count, b.mean_conf);
                    out << buf;
                }
            };
            emit("tsim", "correct", c.hist_tsim.correct_bins);
            emit("tsim", "wrong", c.hist_tsim.wrong_bins);
            emit("softmax", "correct", c.hist_softmax.correct_bins);
            emit("softmax", "wrong", c.hist_softmax.wrong_bins);
        }
    } else {
        throw ConfigError("unknown plot kind: '" + kind + "'");
    }
    return out.str();
}

std::string method_grid_csv(const ExperimentConfig& base,
                            const std::vector<std::string>& policies,
                            const std::vector<std::string>& confidences) {
    if (policies.empty() || confidences.empty())
        throw ConfigError("method grid needs at least one policy and one confidence source");
    std::ostringstream header, row;
    header << "dataset";
    row << base.dataset;
    char buf[128];
    for (const auto& p : policies) {
        for (const auto& c : confidences) {
            header << "," << p << "/" << c;
            ExperimentConfig cfg = base;
            cfg.policy = p;
            cfg.confidence = c;
            ExperimentRecord rec = run_experiment(cfg);
            double mean = 0.0, stddev = 0.0;
            if (!rec.aggregates.empty()) {
                mean = rec.aggregates.front().mean;
                stddev = rec.aggregates.front().stddev;
            }
            std::snprintf(buf, sizeof(buf), ",%.4f +- %.4f", mean, stddev);
            row << buf;
        }
    }
    return header.str() + "\n" + row.str() + "\n";
}

LooResult run_loo(const ExperimentConfig& cfg) {
    Dataset base = load_configured_dataset(cfg);
    LooResult out;
    std::ostringstream csv;
    csv << "seed,loo_accuracy\n";
    std::vector<double> per_seed(cfg.seeds.size(), 0.0);
    std::vector<std::string> errors(cfg.seeds.size());

    std::size_t next = 0;
    while (next < cfg.seeds.size()) {
        std::size_t batch =
            std::min<std::size_t>(std::max(cfg.workers, 1), cfg.seeds.size() - next);
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < batch; ++k) {
            std::size_t idx = next + k;
            pool.emplace_back([&, idx]() {
                try {
                    std::uint64_t seed = cfg.seeds[idx];
                    SeedSetup s = prepare_seed(cfg, base, seed);
                    NetConfig nc =
                        net_from_config(cfg, s.ds.features.cols(), s.ds.class_count, cfg.gamma);
                    NetFactory factory = [nc](std::uint64_t init_seed) {
                        return DiverseHeadNetwork(nc, init_seed);
                    };
                    TrainConfig train = train_from_config(cfg, seed);
                    per_seed[idx] =
                        leave_one_out_accuracy(s.data.x_labeled, s.data.y_labeled, factory, train);
                } catch (const std::exception& e) {
                    errors[idx] = e.what();
                }
            });
        }
        for (auto& t : pool) t.join();
        next += batch;
    }
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        if (!errors[i].empty())
            throw NumericError("leave-one-out failed for seed " +
                               std::to_string(cfg.seeds[i]) + ": " + errors[i]);
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%llu,%.10g\n",
                      static_cast<unsigned long long>(cfg.seeds[i]), per_seed[i]);
        csv << buf;
    }
    out.summary = summarize("loo_accuracy", per_seed);
    out.csv = csv.str();
    return out;
}

std::string make_split_manifest(const ExperimentConfig& cfg, std::uint64_t seed) {
    Dataset base = load_configured_dataset(cfg);
    SeedSetup s = prepare_seed(cfg, base, seed);
    return split_to_json(s.split);
}

int verify_battery(std::uint64_t seed, bool inject_gradient_fault, std::string* json_report) {
    json report = json::array();
    int failures = 0;
    auto add = [&](const std::string& check, int instances, bool passed, const json& detail) {
        report.push_back({{"check", check}, {"instances", instances}, {"passed", passed},
                          {"detail", detail}});
        if (!passed) ++failures;
    };

    // 1. analytic gradient vs central finite differences
    {
        bool ok = true;
        double worst = 0.0;
        for (int i = 0; i < 50 && ok; ++i) {
            RidgeEnsembleInstance inst = random_instance(seed + 1000 + i);
            int d = inst.dim(), M = inst.members();
            Rng rng(seed, "fd-point", i);
            Matrix w(d, M);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < M; ++c) w(r, c) = rng.normal();
            Matrix g = gradient(inst, w);
            if (inject_gradient_fault) g = scale(g, 1.001);
            Matrix fd(d, M);
            for (int r = 0; r < d; ++r) {
                for (int c = 0; c < M; ++c) {
                    double h = 1e-6 * (1.0 + std::abs(w(r, c)));
                    Matrix wp = w, wm = w;
                    wp(r, c) += h;
                    wm(r, c) -= h;
                    fd(r, c) = (objective(inst, wp) - objective(inst, wm)) / (2.0 * h);
                }
            }
            double rel = frobenius_norm(sub(g, fd)) / (1.0 + frobenius_norm(fd));
            worst = std::max(worst, rel);
            if (rel > 1e-5) ok = false;
        }
        add("gradient_finite_difference", 50, ok, {{"worst_relative_error", worst}});
    }

    // 2. stationary solver: tiny gradient, and exact ridge recovery at zero coupling
    {
        bool ok = true;
        double worst_grad = 0.0, worst_ridge = 0.0;
        for (int i = 0; i < 100 && ok; ++i) {
            RidgeEnsembleInstance inst = random_instance(seed + 2000 + i);
            StationaryReport st = solve_stationary(inst);
            double rel = st.gradient_norm / (1.0 + frobenius_norm(st.w_star));
            worst_grad = std::max(worst_grad, rel);
            if (rel > 1e-8) ok = false;

            RidgeEnsembleInstance uncoupled = inst;
            uncoupled.gamma = 0.0;
            StationaryReport st0 = solve_stationary(uncoupled);
            int d = static_cast<int>(inst.dim());
            int n = inst.x_l.rows();
            Matrix xtx = matmul(transpose(inst.x_l), inst.x_l);
            std::vector<double> xty = matvec(transpose(inst.x_l), inst.y);
            for (int m = 0; m < static_cast<int>(inst.members()); ++m) {
                Matrix a(d, d);
                Matrix b(d, 1);
                for (int r = 0; r < d; ++r) {
                    for (int c = 0; c < d; ++c) a(r, c) = xtx(r, c) / n;
                    a(r, r) += inst.lambdas[m];
                    b(r, 0) = xty[r] / n;
                }
                Matrix omega = solve_linear(a, b);
                for (int r = 0; r < d; ++r)
                    worst_ridge = std::max(worst_ridge, std::abs(omega(r, 0) - st0.w_star(r, m)));
            }
            if (worst_ridge > 1e-9) ok = false;
        }
        add("stationary_solver", 100, ok,
            {{"worst_gradient_ratio", worst_grad}, {"worst_ridge_gap", worst_ridge}});
    }

    // 3. stationary-point energy identity + infeasibility of the norm condition
    //    under the regularization lower bound (norm term stays below (M+1)/2M)
    {
        bool ok = true;
        double worst_gap = 0.0, worst_margin = -1.0;
        for (int i = 0; i < 100 && ok; ++i) {
            RidgeEnsembleInstance inst = random_instance(seed + 3000 + i);
            Theorem1Report rep = verify_theorem1(inst);
            worst_gap = std::max(worst_gap, rep.identity_gap);
            if (!rep.identity_holds) ok = false;
            StationaryReport st = solve_stationary(inst);
            double cap = (inst.members() + 1.0) / (2.0 * inst.members());
            worst_margin = std::max(worst_margin, st.norm_value - cap);
            if (st.norm_value >= cap) ok = false;
        }
        add("stationary_identity_and_norm_cap", 100, ok,
            {{"worst_identity_gap", worst_gap}, {"worst_margin_to_cap", worst_margin}});
    }

    // 4. diversity lower bound at stationary points satisfying the norm condition
    {
        bool ok = true;
        int equal_checked = 0;
        for (int i = 0; i < 100 && ok; ++i) {
            bool equal_lambdas = i < 50;
            NormConditionInstance nci =
                make_norm_condition_instance(seed + 4000 + i, equal_lambdas, 2.0);
            Theorem1Report rep = nci.exactly_singular
                                     ? verify_theorem1_at(nci.inst, nci.w_tilde)
                                     : verify_theorem1(nci.inst, true);
            if (!rep.norm_condition_holds || !rep.inequality_holds || !rep.identity_holds)
                ok = false;
            if (equal_lambdas) {
                Corollary1Report cor = nci.exactly_singular
                                           ? verify_corollary1_at(nci.inst, nci.w_tilde)
                                           : verify_corollary1(nci.inst, true);
                if (!cor.inequality_holds) ok = false;
                ++equal_checked;
            }
        }
        add("diversity_lower_bound", 100, ok, {{"equal_lambda_instances", equal_checked}});
    }

    // 5. convexity and coercivity under the regularization lower bound
    {
        bool ok = true;
        for (int i = 0; i < 100 && ok; ++i) {
            RidgeEnsembleInstance inst = random_instance(seed + 5000 + i);
            ConvexityReport rep = verify_convexity(inst, seed + 6000 + i);
            if (!rep.passed) ok = false;
        }
        add("convexity_coercivity", 100, ok, json::object());
    }

    if (json_report) {
        json j;
        j["checks"] = report;
        j["failures"] = failures;
        j["passed"] = failures == 0;
        *json_report = j.dump(2);
    }
    return failures;
}

} // namespace divst
