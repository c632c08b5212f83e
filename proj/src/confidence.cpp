#include "divst/confidence.hpp"

#include <cmath>
#include <ostream>

#include "json.hpp"

#include "divst/errors.hpp"
#include "divst/linalg.hpp"

namespace divst {

namespace detail {
nlohmann::json layer_json_for_net(const LinearLayer& layer);
LinearLayer layer_from_json_for_net(const nlohmann::json& j);
} // namespace detail

namespace {

void validate_simplex_row(const double* p, std::size_t c) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        if (p[j] < -1e-6 || p[j] > 1.0 + 1e-6)
            throw InputError("t_similarity: entry outside [0,1]");
        sum += p[j];
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        throw InputError("t_similarity: row does not sum to 1");
}

// d s_T / d p_m = (2/(M(M-1))) * Σ_{k≠m} p_k   (ordered pairs count both ways)
// then through softmax: dz = p ⊙ (g − <g,p>).
void softmax_vjp_row(const double* p, const double* g, double* dz, std::size_t c) {
    double gp = 0.0;
    for (std::size_t j = 0; j < c; ++j) gp += g[j] * p[j];
    for (std::size_t j = 0; j < c; ++j) dz[j] = p[j] * (g[j] - gp);
}

} // namespace

// ===========================================================================
// Network assembly
// ===========================================================================

DiverseHeadNetwork::DiverseHeadNetwork(const NetConfig& config, std::uint64_t seed)
    : cfg(config) {
    if (cfg.M < 2) throw ConfigError("DiverseHeadNetwork: M must be >= 2");
    if (cfg.gamma < 0.0) throw ConfigError("DiverseHeadNetwork: gamma must be >= 0");
    if (cfg.input_dim == 0 || cfg.hidden == 0 || cfg.classes < 2)
        throw ConfigError("DiverseHeadNetwork: bad dimensions");

    trunk1 = LinearLayer(cfg.input_dim, cfg.hidden);
    trunk2 = LinearLayer(cfg.hidden, cfg.hidden);
    pred_head = LinearLayer(cfg.hidden, cfg.classes);
    Rng r1(seed, "init/trunk1");
    trunk1.init_glorot(r1);
    Rng r2(seed, "init/trunk2");
    trunk2.init_glorot(r2);
    Rng rp(seed, "init/pred");
    pred_head.init_glorot(rp);
    heads.reserve(cfg.M);
    for (std::size_t m = 0; m < cfg.M; ++m) {
        heads.emplace_back(cfg.hidden, cfg.classes);
        // Each head gets its own stream so the ensemble starts asymmetric.
        Rng rh(seed, "init/head", m);
        heads.back().init_glorot(rh);
    }
}

Matrix DiverseHeadNetwork::trunk_forward(const Matrix& x, ForwardTape* tape) const {
    Matrix pre1 = forward_linear(trunk1, x);
    Matrix h1 = relu(pre1);
    Matrix pre2 = forward_linear(trunk2, h1);
    Matrix h2 = relu(pre2);
    if (tape) {
        tape->nodes.clear();
        tape->nodes.push_back({x, std::move(pre1), true});
        tape->nodes.push_back({std::move(h1), std::move(pre2), true});
        tape->consumed = false;
    }
    return h2;
}

void DiverseHeadNetwork::trunk_backward(ForwardTape& tape, const Matrix& grad_h) {
    if (tape.consumed) throw ConfigError("trunk_backward: tape already consumed");
    tape.consumed = true;
    if (tape.stop_gradient) return; // stop-gradient segment: zero contribution upstream
    if (tape.nodes.size() != 2) throw ConfigError("trunk_backward: malformed tape");
    Matrix g = relu_backward(tape.nodes[1].pre, grad_h);
    g = backward_linear(trunk2, tape.nodes[1].input, g, true);
    g = relu_backward(tape.nodes[0].pre, g);
    backward_linear(trunk1, tape.nodes[0].input, g, false);
}

Matrix DiverseHeadNetwork::pred_probs(const Matrix& x) const {
    return softmax_rows(forward_linear(pred_head, trunk_forward(x)));
}

std::vector<Matrix> DiverseHeadNetwork::head_probs_on(const Matrix& h) const {
    std::vector<Matrix> out;
    out.reserve(cfg.M);
    for (const auto& head : heads) out.push_back(softmax_rows(forward_linear(head, h)));
    return out;
}

void DiverseHeadNetwork::zero_grad() {
    trunk1.zero_grad();
    trunk2.zero_grad();
    pred_head.zero_grad();
    for (auto& h : heads) h.zero_grad();
}

std::vector<Adam::ParamRef> DiverseHeadNetwork::param_refs() {
    std::vector<Adam::ParamRef> refs;
    auto push = [&refs](LinearLayer& l) {
        refs.push_back({l.weight.data(), l.grad_weight.data(), l.weight.size()});
        refs.push_back({l.bias.data(), l.grad_bias.data(), l.bias.size()});
    };
    push(trunk1);
    push(trunk2);
    push(pred_head);
    for (auto& h : heads) push(h);
    return refs;
}

namespace {
double layer_grad_max(const LinearLayer& l) {
    double m = 0.0;
    for (std::size_t i = 0; i < l.grad_weight.size(); ++i)
        m = std::max(m, std::fabs(l.grad_weight.data()[i]));
    for (double g : l.grad_bias) m = std::max(m, std::fabs(g));
    return m;
}
} // namespace

double DiverseHeadNetwork::trunk_grad_max_abs() const {
    return std::max(layer_grad_max(trunk1), layer_grad_max(trunk2));
}
double DiverseHeadNetwork::pred_grad_max_abs() const { return layer_grad_max(pred_head); }
double DiverseHeadNetwork::heads_grad_max_abs() const {
    double m = 0.0;
    for (const auto& h : heads) m = std::max(m, layer_grad_max(h));
    return m;
}

// ===========================================================================
// T-similarity and diversity
// ===========================================================================

double t_similarity(const std::vector<std::vector<double>>& head_rows) {
    const std::size_t m = head_rows.size();
    if (m < 2) throw ConfigError("t_similarity: need at least 2 heads");
    const std::size_t c = head_rows[0].size();
    for (const auto& row : head_rows) {
        if (row.size() != c) throw ShapeError("t_similarity: ragged head outputs");
        validate_simplex_row(row.data(), c);
    }
    double s = 0.0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
            if (a != b) s += dot(head_rows[a], head_rows[b]);
    return s / (static_cast<double>(m) * static_cast<double>(m - 1));
}

std::vector<double> t_similarity_batch(const std::vector<Matrix>& head_probs) {
    const std::size_t m = head_probs.size();
    if (m < 2) throw ConfigError("t_similarity_batch: need at least 2 heads");
    const std::size_t n = head_probs[0].rows(), c = head_probs[0].cols();
    for (const auto& hp : head_probs)
        if (hp.rows() != n || hp.cols() != c)
            throw ShapeError("t_similarity_batch: head output shapes disagree");
    std::vector<double> s(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            const double* pa = head_probs[a].row(i);
            for (std::size_t b = a + 1; b < m; ++b) {
                const double* pb = head_probs[b].row(i);
                double d = 0.0;
                for (std::size_t j = 0; j < c; ++j) d += pa[j] * pb[j];
                acc += d;
            }
        }
        // unordered pairs counted once above; Def. 1 sums ordered pairs
        s[i] = 2.0 * acc / (static_cast<double>(m) * static_cast<double>(m - 1));
    }
    return s;
}

double diversity_loss(const std::vector<Matrix>& head_probs) {
    if (head_probs.empty() || head_probs[0].rows() == 0)
        throw InputError("diversity_loss: empty batch");
    std::vector<double> s = t_similarity_batch(head_probs);
    double sum = 0.0;
    for (double v : s) sum += v;
    return -sum / static_cast<double>(s.size());
}

// ===========================================================================
// Losses
// ===========================================================================

namespace {

// Shared core of confidence_loss/total_loss_step, operating on trunk outputs
// treated as constants (that *is* the stop-gradient: nothing here ever
// touches trunk parameters). Accumulates head gradients when backward=true.
// An empty unlabeled representation drops the diversity term.
double conf_loss_on_repr(DiverseHeadNetwork& net, const Matrix& h_l,
                         const std::vector<int>& y_l, const Matrix& h_u, bool backward) {
    const std::size_t m_heads = net.cfg.M;
    const double inv_m = 1.0 / static_cast<double>(m_heads);

    double fidelity = 0.0;
    for (std::size_t m = 0; m < m_heads; ++m) {
        Matrix probs = softmax_rows(forward_linear(net.heads[m], h_l));
        fidelity += cross_entropy(probs, y_l);
        if (backward) {
            Matrix dlogits = cross_entropy_logit_grad(probs, y_l);
            for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits.data()[i] *= inv_m;
            backward_linear(net.heads[m], h_l, dlogits, false);
        }
    }
    fidelity *= inv_m;

    double ldiv = 0.0;
    if (h_u.rows() > 0 && net.cfg.gamma >= 0.0) {
        std::vector<Matrix> probs_u = net.head_probs_on(h_u);
        ldiv = diversity_loss(probs_u);
        if (backward && net.cfg.gamma > 0.0) {
            const std::size_t n = h_u.rows(), c = net.cfg.classes;
            // d(-γ·ℓ_div)/dp_m(i) = (γ/n)·(2/(M(M−1)))·Σ_{k≠m} p_k(i)
            const double coef = net.cfg.gamma / static_cast<double>(n) * 2.0 /
                                (static_cast<double>(m_heads) * static_cast<double>(m_heads - 1));
            // Σ_k p_k per example, reused for every head.
            Matrix psum(n, c);
            for (const auto& pm : probs_u)
                for (std::size_t i = 0; i < psum.size(); ++i) psum.data()[i] += pm.data()[i];
            std::vector<double> g(c), dz(c);
            for (std::size_t m = 0; m < m_heads; ++m) {
                Matrix dlogits(n, c);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* pm = probs_u[m].row(i);
                    const double* ps = psum.row(i);
                    for (std::size_t j = 0; j < c; ++j) g[j] = coef * (ps[j] - pm[j]);
                    softmax_vjp_row(pm, g.data(), dz.data(), c);
                    double* out = dlogits.row(i);
                    for (std::size_t j = 0; j < c; ++j) out[j] = dz[j];
                }
                backward_linear(net.heads[m], h_u, dlogits, false);
            }
        }
    }
    return fidelity - net.cfg.gamma * ldiv;
}

} // namespace

double confidence_loss(DiverseHeadNetwork& net, const Matrix& x_l, const std::vector<int>& y_l,
                       const Matrix& x_u, bool backward) {
    if (x_l.rows() == 0 || x_u.rows() == 0)
        throw InputError("confidence_loss: empty batch");
    if (y_l.size() != x_l.rows()) throw ShapeError("confidence_loss: label count mismatch");
    // Both trunk passes are stop-gradient segments for this loss.
    ForwardTape tape_l, tape_u;
    tape_l.stop_gradient = true;
    tape_u.stop_gradient = true;
    Matrix h_l = net.trunk_forward(x_l, &tape_l);
    Matrix h_u = net.trunk_forward(x_u, &tape_u);
    return conf_loss_on_repr(net, h_l, y_l, h_u, backward);
}

StepLosses total_loss_step(DiverseHeadNetwork& net, const Matrix& x_l,
                           const std::vector<int>& y_l, const Matrix& x_u, Adam& adam) {
    if (x_l.rows() == 0) throw InputError("total_loss_step: empty labeled batch");
    if (y_l.size() != x_l.rows()) throw ShapeError("total_loss_step: label count mismatch");
    net.zero_grad();

    // Supervised path: trunk + prediction head.
    ForwardTape tape_sup;
    Matrix h_l = net.trunk_forward(x_l, &tape_sup);
    Matrix probs = softmax_rows(forward_linear(net.pred_head, h_l));
    const double l_sup = cross_entropy(probs, y_l);
    Matrix dlogits = cross_entropy_logit_grad(probs, y_l);
    Matrix dh = backward_linear(net.pred_head, h_l, dlogits, true);
    net.trunk_backward(tape_sup, dh);

    // Confidence path: ensemble heads only, on frozen representations.
    Matrix h_u = x_u.rows() > 0 ? net.trunk_forward(x_u) : Matrix();
    const double l_conf = conf_loss_on_repr(net, h_l, y_l, h_u, /*backward=*/true);

    if (!std::isfinite(l_sup) || !std::isfinite(l_conf))
        throw NumericError("total_loss_step: non-finite loss");
    adam.step();
    return {l_sup, l_conf};
}

// ===========================================================================
// Scoring
// ===========================================================================

ConfidenceScores score_unlabeled(const DiverseHeadNetwork& net, const Matrix& x_u) {
    ConfidenceScores out;
    const std::size_t n = x_u.rows();
    out.s_t.resize(n);
    out.predicted_class.resize(n);
    out.softmax_max.resize(n);
    if (n == 0) return out;

    Matrix h = net.trunk_forward(x_u);
    Matrix pred = softmax_rows(forward_linear(net.pred_head, h));
    std::vector<Matrix> head_probs = net.head_probs_on(h);
    std::vector<double> s = t_similarity_batch(head_probs);

    for (std::size_t i = 0; i < n; ++i) {
        out.s_t[i] = std::min(1.0, std::max(0.0, s[i]));
        const double* ri = pred.row(i);
        std::size_t arg = 0;
        double best = ri[0];
        for (std::size_t j = 1; j < pred.cols(); ++j)
            if (ri[j] > best) { // strict: ties keep the lowest index
                best = ri[j];
                arg = j;
            }
        out.predicted_class[i] = static_cast<int>(arg);
        out.softmax_max[i] = best;
    }
    return out;
}

void dump_scores_csv(std::ostream& out, const ConfidenceScores& scores,
                     const std::vector<int>* truth) {
    out << "example_id,s_T,softmax_max,predicted_class,true_class_if_known\n";
    for (std::size_t i = 0; i < scores.s_t.size(); ++i) {
        out << i << ',' << scores.s_t[i] << ',' << scores.softmax_max[i] << ','
            << scores.predicted_class[i] << ',';
        if (truth) out << (*truth)[i];
        out << '\n';
    }
}

// ===========================================================================
// Snapshots
// ===========================================================================

std::string network_to_json(const DiverseHeadNetwork& net) {
    nlohmann::json j;
    j["schema"] = "divst-net";
    j["version"] = 1;
    j["config"] = {{"input_dim", net.cfg.input_dim}, {"hidden", net.cfg.hidden},
                   {"classes", net.cfg.classes},     {"M", net.cfg.M},
                   {"gamma", net.cfg.gamma}};
    j["trunk1"] = detail::layer_json_for_net(net.trunk1);
    j["trunk2"] = detail::layer_json_for_net(net.trunk2);
    j["pred_head"] = detail::layer_json_for_net(net.pred_head);
    j["heads"] = nlohmann::json::array();
    for (const auto& h : net.heads) j["heads"].push_back(detail::layer_json_for_net(h));
    return j.dump();
}

DiverseHeadNetwork network_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("network snapshot: ") + e.what());
    }
    if (j.value("schema", "") != "divst-net" || j.value("version", 0) != 1)
        throw ParseError("network snapshot: unknown schema/version");
    NetConfig cfg;
    cfg.input_dim = j["config"].at("input_dim").get<std::size_t>();
    cfg.hidden = j["config"].at("hidden").get<std::size_t>();
    cfg.classes = j["config"].at("classes").get<std::size_t>();
    cfg.M = j["config"].at("M").get<std::size_t>();
    cfg.gamma = j["config"].at("gamma").get<double>();
    DiverseHeadNetwork net(cfg, 0);
    net.trunk1 = detail::layer_from_json_for_net(j.at("trunk1"));
    net.trunk2 = detail::layer_from_json_for_net(j.at("trunk2"));
    net.pred_head = detail::layer_from_json_for_net(j.at("pred_head"));
    net.heads.clear();
    for (const auto& hj : j.at("heads")) net.heads.push_back(detail::layer_from_json_for_net(hj));
    if (net.heads.size() != cfg.M) throw ParseError("network snapshot: head count mismatch");
    return net;
}

} // namespace divst
