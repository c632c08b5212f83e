#include "divst/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "divst/errors.hpp"
#include "divst/linalg.hpp"
#include "divst/rng.hpp"
#include "json.hpp"

namespace divst {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_number(const std::string& tok, double* out) {
    if (tok.empty()) return false;
    const char* begin = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + tok.size()) return false;
    *out = v;
    return true;
}

double parse_number_or_throw(const std::string& tok, std::size_t line_no, std::size_t field) {
    double v = 0.0;
    if (!parse_number(tok, &v)) {
        throw ParseError("line " + std::to_string(line_no) + ", field " + std::to_string(field) +
                         ": not a number '" + tok + "'");
    }
    return v;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

// Maps original label tokens to contiguous ids: numeric order when every
// token parses as a number, lexicographic otherwise.
std::vector<std::string> build_label_map(const std::vector<std::string>& tokens) {
    std::vector<std::string> distinct = tokens;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    bool all_numeric = true;
    std::vector<double> values(distinct.size(), 0.0);
    for (std::size_t i = 0; i < distinct.size(); ++i) {
        if (!parse_number(distinct[i], &values[i])) {
            all_numeric = false;
            break;
        }
    }
    if (all_numeric) {
        std::vector<std::size_t> order(distinct.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (values[a] != values[b]) return values[a] < values[b];
            return distinct[a] < distinct[b];
        });
        std::vector<std::string> sorted(distinct.size());
        for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = distinct[order[i]];
        return sorted;
    }
    return distinct; // already lexicographic
}

int label_id(const std::vector<std::string>& map, const std::string& tok) {
    auto it = std::find(map.begin(), map.end(), tok);
    return static_cast<int>(it - map.begin());
}

Dataset load_csv(std::istream& in, bool has_header, int label_column) {
    std::vector<std::vector<double>> rows;
    std::vector<std::string> label_tokens;
    std::string line;
    std::size_t line_no = 0;
    std::size_t field_count = 0;
    bool skipped_header = !has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        std::vector<std::string> fields = split_fields(line, ',');
        if (field_count == 0) {
            field_count = fields.size();
            if (field_count < 2) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": need at least one feature and a label");
            }
        } else if (fields.size() != field_count) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(field_count) + " fields, got " +
                             std::to_string(fields.size()));
        }
        int lc = label_column < 0 ? static_cast<int>(field_count) - 1 : label_column;
        if (lc < 0 || lc >= static_cast<int>(field_count)) {
            throw ConfigError("label column out of range");
        }
        std::vector<double> feat;
        feat.reserve(field_count - 1);
        for (std::size_t f = 0; f < fields.size(); ++f) {
            if (static_cast<int>(f) == lc) {
                label_tokens.push_back(fields[f]);
            } else {
                feat.push_back(parse_number_or_throw(fields[f], line_no, f + 1));
            }
        }
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw ParseError("no data rows");

    Dataset ds;
    ds.label_map = build_label_map(label_tokens);
    ds.class_count = static_cast<int>(ds.label_map.size());
    ds.features = Matrix(rows.size(), rows[0].size());
    ds.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) ds.features(i, j) = rows[i][j];
        ds.labels[i] = label_id(ds.label_map, label_tokens[i]);
    }
    return ds;
}

Dataset load_libsvm(std::istream& in) {
    struct SparseRow {
        std::vector<std::pair<int, double>> entries;
    };
    std::vector<SparseRow> rows;
    std::vector<std::string> label_tokens;
    std::string line;
    std::size_t line_no = 0;
    int max_index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::istringstream ls(stripped);
        std::string tok;
        if (!(ls >> tok)) continue;
        label_tokens.push_back(tok);
        SparseRow row;
        while (ls >> tok) {
            std::size_t colon = tok.find(':');
            if (colon == std::string::npos) {
                throw ParseError("line " + std::to_string(line_no) + ": expected idx:val, got '" +
                                 tok + "'");
            }
            std::string idx_s = tok.substr(0, colon);
            std::string val_s = tok.substr(colon + 1);
            double idx_d = parse_number_or_throw(idx_s, line_no, row.entries.size() + 2);
            int idx = static_cast<int>(idx_d);
            if (idx < 1 || static_cast<double>(idx) != idx_d) {
                throw ParseError("line " + std::to_string(line_no) + ": bad feature index '" +
                                 idx_s + "'");
            }
            double val = parse_number_or_throw(val_s, line_no, row.entries.size() + 2);
            for (const auto& e : row.entries) {
                if (e.first == idx) {
                    throw ParseError("line " + std::to_string(line_no) +
                                     ": duplicate feature index " + std::to_string(idx));
                }
            }
            row.entries.emplace_back(idx, val);
            max_index = std::max(max_index, idx);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("no data rows");
    if (max_index == 0) throw ParseError("no features present");

    Dataset ds;
    ds.label_map = build_label_map(label_tokens);
    ds.class_count = static_cast<int>(ds.label_map.size());
    ds.features = Matrix(rows.size(), static_cast<std::size_t>(max_index));
    ds.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& e : rows[i].entries) ds.features(i, e.first - 1) = e.second;
        ds.labels[i] = label_id(ds.label_map, label_tokens[i]);
    }
    return ds;
}

nlohmann::json provenance_json(const std::string& text) {
    if (text.empty()) return nlohmann::json::object({{"steps", nlohmann::json::array()}});
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("steps") || !j["steps"].is_array()) {
        nlohmann::json fresh = nlohmann::json::object();
        fresh["steps"] = nlohmann::json::array();
        if (!text.empty()) fresh["steps"].push_back({{"op", "opaque"}, {"text", text}});
        return fresh;
    }
    return j;
}

std::vector<std::vector<int>> group_by_class(const Dataset& ds, const std::vector<int>& indices) {
    std::vector<std::vector<int>> groups(ds.class_count);
    for (int idx : indices) {
        if (idx < 0 || idx >= static_cast<int>(ds.features.rows())) {
            throw InputError("index out of range: " + std::to_string(idx));
        }
        groups[ds.labels[idx]].push_back(idx);
    }
    return groups;
}

// Per-class draw probabilities rho_i = exp(r|proj_i|)/beta where proj_i is the
// centered first-principal-component projection and beta normalizes over the
// class (log-sum-exp for stability).
std::vector<double> ssb_probabilities(const Dataset& ds, const std::vector<int>& pool, double r) {
    if (pool.size() < 2) {
        throw InputError("biased labeling needs at least 2 examples per class, got " +
                         std::to_string(pool.size()));
    }
    Matrix rows = gather_rows(ds.features, pool);
    std::vector<double> component = first_principal_component(rows);
    std::vector<double> mean = column_means(rows);
    std::vector<double> t(pool.size(), 0.0);
    double tmax = -1e308;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        double proj = 0.0;
        for (std::size_t j = 0; j < rows.cols(); ++j) {
            proj += (rows(i, j) - mean[j]) * component[j];
        }
        t[i] = r * std::fabs(proj);
        tmax = std::max(tmax, t[i]);
    }
    double sum = 0.0;
    for (double v : t) sum += std::exp(v - tmax);
    double lse = tmax + std::log(sum);
    std::vector<double> rho(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) rho[i] = std::exp(t[i] - lse);
    return rho;
}

SplitResult label_core(const Dataset& ds, const SplitResult& split, int n_labeled, double r,
                       double alpha, std::uint64_t seed, const std::string& method) {
    if (n_labeled < 1) throw ConfigError("n_labeled must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("r must be a finite nonnegative value");
    if (ds.class_count < 1) throw InputError("dataset has no classes");

    std::vector<int> train = split.labeled;
    train.insert(train.end(), split.unlabeled.begin(), split.unlabeled.end());
    std::sort(train.begin(), train.end());
    if (n_labeled > static_cast<int>(train.size())) {
        throw ConfigError("n_labeled exceeds training pool size");
    }

    std::vector<std::vector<int>> pools = group_by_class(ds, train);
    std::vector<int> counts(pools.size());
    for (std::size_t c = 0; c < pools.size(); ++c) counts[c] = static_cast<int>(pools[c].size());
    std::vector<int> quotas = largest_remainder_quotas(counts, n_labeled);

    SplitResult out;
    out.test = split.test;
    std::vector<char> taken(ds.features.rows(), 0);
    for (std::size_t c = 0; c < pools.size(); ++c) {
        if (quotas[c] == 0) continue;
        const std::vector<int>& pool = pools[c];
        std::size_t n = pool.size();
        std::vector<double> w(n, 0.0);
        if (alpha != 0.0) {
            std::vector<double> rho = ssb_probabilities(ds, pool, r);
            for (std::size_t i = 0; i < n; ++i) {
                w[i] = (1.0 - alpha) / static_cast<double>(n) + alpha * rho[i];
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / static_cast<double>(n);
        }
        Rng rng(seed, "label", c);
        for (int d = 0; d < quotas[c]; ++d) {
            double total = 0.0;
            for (double v : w) total += v;
            std::size_t k;
            if (total > 0.0) {
                k = rng.pick_weighted(w);
            } else {
                // All remaining weights underflowed to zero; take the lowest
                // remaining index deterministically.
                for (k = 0; k < n; ++k) {
                    if (!taken[pool[k]]) break;
                }
                if (k == n) throw NumericError("labeling pool exhausted");
            }
            taken[pool[k]] = 1;
            out.labeled.push_back(pool[k]);
            w[k] = 0.0;
        }
    }
    for (int idx : train) {
        if (!taken[idx]) out.unlabeled.push_back(idx);
    }

    nlohmann::json prov = provenance_json(split.provenance);
    prov["steps"].push_back({{"op", "label"},
                             {"method", method},
                             {"n_labeled", n_labeled},
                             {"r", r},
                             {"alpha", alpha},
                             {"seed", seed}});
    out.provenance = prov.dump();
    return out;
}

} // namespace

Dataset load_dataset(const std::string& path, DataFormat format, bool has_header,
                     int label_column) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    Dataset ds = format == DataFormat::Csv ? load_csv(in, has_header, label_column)
                                           : load_libsvm(in);
    std::size_t slash = path.find_last_of("/\\");
    ds.name = slash == std::string::npos ? path : path.substr(slash + 1);
    check_finite(ds.features, "dataset features");
    return ds;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path + " for writing");
    char buf[64];
    for (std::size_t i = 0; i < ds.features.rows(); ++i) {
        for (std::size_t j = 0; j < ds.features.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
            out << buf << ',';
        }
        int lab = ds.labels[i];
        if (!ds.label_map.empty() && lab >= 0 && lab < static_cast<int>(ds.label_map.size())) {
            out << ds.label_map[lab];
        } else {
            out << lab;
        }
        out << '\n';
    }
    if (!out) throw InputError("write failed for " + path);
}

Dataset standardize(const Dataset& ds, const std::vector<int>& fit_indices) {
    if (fit_indices.empty()) throw InputError("standardize needs at least one fit index");
    std::size_t n = ds.features.rows(), d = ds.features.cols();
    for (int idx : fit_indices) {
        if (idx < 0 || idx >= static_cast<int>(n)) {
            throw InputError("fit index out of range: " + std::to_string(idx));
        }
    }
    Dataset out = ds;
    out.feat_mean.assign(d, 0.0);
    out.feat_std.assign(d, 0.0);
    double m = static_cast<double>(fit_indices.size());
    for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (int idx : fit_indices) mu += ds.features(idx, j);
        mu /= m;
        double var = 0.0;
        for (int idx : fit_indices) {
            double diff = ds.features(idx, j) - mu;
            var += diff * diff;
        }
        var /= m;
        double sd = std::sqrt(var);
        out.feat_mean[j] = mu;
        out.feat_std[j] = sd;
        if (sd < 1e-12) {
            for (std::size_t i = 0; i < n; ++i) out.features(i, j) = 0.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                out.features(i, j) = (ds.features(i, j) - mu) / sd;
            }
        }
    }
    out.standardized = true;
    return out;
}

SplitResult split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must be in [0,1)");
    }
    std::size_t n = ds.features.rows();
    if (n == 0) throw InputError("empty dataset");
    if (ds.labels.size() != n) throw InputError("labels/features row mismatch");

    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::vector<int>> groups = group_by_class(ds, all);

    long long total_test = std::llround(static_cast<double>(n) * test_fraction);
    std::vector<int> quota(groups.size(), 0);
    long long assigned = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        quota[c] = static_cast<int>(std::floor(static_cast<double>(groups[c].size()) *
                                               test_fraction));
        assigned += quota[c];
    }
    // Remainder goes to the largest classes first (ties to the lower id),
    // never taking a class's last training example.
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (groups[a].size() != groups[b].size()) return groups[a].size() > groups[b].size();
        return a < b;
    });
    long long remainder = total_test - assigned;
    while (remainder > 0) {
        bool placed = false;
        for (std::size_t c : order) {
            if (remainder == 0) break;
            if (quota[c] + 1 < static_cast<int>(groups[c].size())) {
                ++quota[c];
                --remainder;
                placed = true;
            }
        }
        if (!placed) throw ConfigError("cannot satisfy test fraction without emptying a class");
    }

    SplitResult out;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        std::vector<int> idx = groups[c];
        Rng rng(seed, "split", c);
        rng.shuffle(idx);
        for (int i = 0; i < quota[c]; ++i) out.test.push_back(idx[i]);
        for (std::size_t i = quota[c]; i < idx.size(); ++i) {
            out.unlabeled.push_back(idx[i]);
        }
    }
    std::sort(out.test.begin(), out.test.end());
    std::sort(out.unlabeled.begin(), out.unlabeled.end());

    nlohmann::json prov;
    prov["steps"] = nlohmann::json::array();
    prov["steps"].push_back({{"op", "split"},
                             {"test_fraction", test_fraction},
                             {"seed", seed},
                             {"n", n},
                             {"n_test", out.test.size()}});
    out.provenance = prov.dump();
    return out;
}

SplitResult label_iid(const Dataset& ds, const SplitResult& split, int n_labeled,
                      std::uint64_t seed) {
    return label_core(ds, split, n_labeled, 0.0, 0.0, seed, "iid");
}

SplitResult label_ssb(const Dataset& ds, const SplitResult& split, int n_labeled, double r,
                      std::uint64_t seed) {
    return label_core(ds, split, n_labeled, r, 1.0, seed, "ssb");
}

SplitResult label_interpolated(const Dataset& ds, const SplitResult& split, int n_labeled,
                               double r, double alpha, std::uint64_t seed) {
    return label_core(ds, split, n_labeled, r, alpha, seed, "interpolated");
}

std::string split_to_json(const SplitResult& split) {
    nlohmann::json j;
    j["schema"] = "divst-split";
    j["version"] = 1;
    j["labeled"] = split.labeled;
    j["unlabeled"] = split.unlabeled;
    j["test"] = split.test;
    nlohmann::json prov = nlohmann::json::parse(split.provenance, nullptr, false);
    if (prov.is_discarded()) {
        j["provenance"] = split.provenance;
    } else {
        j["provenance"] = prov;
    }
    return j.dump(2);
}

SplitResult split_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("split manifest: invalid JSON");
    if (!j.is_object() || j.value("schema", "") != "divst-split") {
        throw ParseError("split manifest: wrong schema");
    }
    SplitResult out;
    for (const char* key : {"labeled", "unlabeled", "test"}) {
        if (!j.contains(key) || !j[key].is_array()) {
            throw ParseError(std::string("split manifest: missing array '") + key + "'");
        }
    }
    out.labeled = j["labeled"].get<std::vector<int>>();
    out.unlabeled = j["unlabeled"].get<std::vector<int>>();
    out.test = j["test"].get<std::vector<int>>();
    std::vector<int> seen;
    seen.reserve(out.labeled.size() + out.unlabeled.size() + out.test.size());
    for (const std::vector<int>* part : {&out.labeled, &out.unlabeled, &out.test}) {
        for (int idx : *part) {
            if (idx < 0) throw ParseError("split manifest: negative index");
            seen.push_back(idx);
        }
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
        throw ParseError("split manifest: overlapping partitions");
    }
    if (j.contains("provenance")) {
        out.provenance = j["provenance"].is_string() ? j["provenance"].get<std::string>()
                                                     : j["provenance"].dump();
    }
    return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& indices) {
    Matrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        int idx = indices[i];
        if (idx < 0 || idx >= static_cast<int>(m.rows())) {
            throw InputError("row index out of range: " + std::to_string(idx));
        }
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(idx, j);
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& indices) {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        int idx = indices[i];
        if (idx < 0 || idx >= static_cast<int>(labels.size())) {
            throw InputError("label index out of range: " + std::to_string(idx));
        }
        out[i] = labels[idx];
    }
    return out;
}

std::vector<int> largest_remainder_quotas(const std::vector<int>& class_counts, int n_labeled) {
    if (n_labeled < 0) throw ConfigError("negative quota total");
    long long total = 0;
    for (int c : class_counts) {
        if (c < 0) throw InputError("negative class count");
        total += c;
    }
    if (n_labeled > total) throw ConfigError("quota total exceeds population");

    std::size_t k = class_counts.size();
    std::vector<int> quota(k, 0);
    std::vector<double> remainder(k, 0.0);
    long long assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double ideal = total == 0
                           ? 0.0
                           : static_cast<double>(n_labeled) * class_counts[c] /
                                 static_cast<double>(total);
        quota[c] = static_cast<int>(std::floor(ideal));
        remainder[c] = ideal - quota[c];
        assigned += quota[c];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        if (class_counts[a] != class_counts[b]) return class_counts[a] > class_counts[b];
        return a < b;
    });
    long long leftover = n_labeled - assigned;
    while (leftover > 0) {
        bool placed = false;
        for (std::size_t c : order) {
            if (leftover == 0) break;
            if (quota[c] < class_counts[c]) {
                ++quota[c];
                --leftover;
                placed = true;
            }
        }
        if (!placed) throw ConfigError("cannot satisfy labeling quotas");
    }
    return quota;
}

} // namespace divst
