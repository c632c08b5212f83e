#include "divst/nn.hpp"

#include <cmath>
#include <string>

#include "json.hpp"

#include "divst/errors.hpp"
#include "divst/linalg.hpp"

namespace divst {

void LinearLayer::init_glorot(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (std::size_t i = 0; i < weight.size(); ++i)
        weight.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
    for (double& b : bias) b = 0.0;
    zero_grad();
}

void LinearLayer::zero_grad() {
    for (std::size_t i = 0; i < grad_weight.size(); ++i) grad_weight.data()[i] = 0.0;
    for (double& g : grad_bias) g = 0.0;
}

Matrix forward_linear(const LinearLayer& layer, const Matrix& input) {
    if (input.cols() != layer.in_dim())
        throw ShapeError("forward_linear: input width " + std::to_string(input.cols()) +
                         " != layer fan-in " + std::to_string(layer.in_dim()));
    Matrix out = matmul(input, transpose(layer.weight));
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* ri = out.row(i);
        for (std::size_t j = 0; j < out.cols(); ++j) ri[j] += layer.bias[j];
    }
    return out;
}

Matrix backward_linear(LinearLayer& layer, const Matrix& input, const Matrix& grad_out,
                       bool want_grad_input) {
    if (grad_out.rows() != input.rows() || grad_out.cols() != layer.out_dim() ||
        input.cols() != layer.in_dim())
        throw ShapeError("backward_linear: shape mismatch");
    // dW += g^T x ; db += column sums of g ; dx = g W
    Matrix dw = matmul(transpose(grad_out), input);
    for (std::size_t i = 0; i < dw.size(); ++i) layer.grad_weight.data()[i] += dw.data()[i];
    for (std::size_t i = 0; i < grad_out.rows(); ++i) {
        const double* gi = grad_out.row(i);
        for (std::size_t j = 0; j < grad_out.cols(); ++j) layer.grad_bias[j] += gi[j];
    }
    if (!want_grad_input) return Matrix();
    return matmul(grad_out, layer.weight);
}

Matrix relu(const Matrix& x) {
    Matrix y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y.data()[i] < 0.0) y.data()[i] = 0.0;
    return y;
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad_out) {
    if (pre.rows() != grad_out.rows() || pre.cols() != grad_out.cols())
        throw ShapeError("relu_backward: shape mismatch");
    Matrix g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (pre.data()[i] <= 0.0) g.data()[i] = 0.0;
    return g;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double* ri = p.row(i);
        double mx = ri[0];
        for (std::size_t j = 1; j < p.cols(); ++j) mx = std::max(mx, ri[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            ri[j] = std::exp(ri[j] - mx);
            sum += ri[j];
        }
        for (std::size_t j = 0; j < p.cols(); ++j) ri[j] /= sum;
    }
    return p;
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows() != labels.size()) throw ShapeError("cross_entropy: batch size mismatch");
    if (probs.rows() == 0) throw InputError("cross_entropy: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
            throw InputError("cross_entropy: label out of range");
        loss -= std::log(std::max(probs(i, static_cast<std::size_t>(y)), 1e-12));
    }
    return loss / static_cast<double>(probs.rows());
}

Matrix cross_entropy_logit_grad(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows() != labels.size())
        throw ShapeError("cross_entropy_logit_grad: batch size mismatch");
    Matrix g = probs;
    const double inv = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
            throw InputError("cross_entropy_logit_grad: label out of range");
        g(i, static_cast<std::size_t>(y)) -= 1.0;
        double* ri = g.row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) ri[j] *= inv;
    }
    return g;
}

// ===========================================================================
// Adam
// ===========================================================================

void Adam::attach(std::vector<ParamRef> refs) {
    refs_ = std::move(refs);
    step_ = 0;
    m_.assign(refs_.size(), {});
    v_.assign(refs_.size(), {});
    for (std::size_t i = 0; i < refs_.size(); ++i) {
        m_[i].assign(refs_[i].n, 0.0);
        v_[i].assign(refs_[i].n, 0.0);
    }
}

void Adam::step() {
    if (refs_.empty()) throw ConfigError("Adam::step: no parameters attached");
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t r = 0; r < refs_.size(); ++r) {
        double* p = refs_[r].param;
        const double* g = refs_[r].grad;
        double* m = m_[r].data();
        double* v = v_[r].data();
        for (std::size_t i = 0; i < refs_[r].n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ===========================================================================
// Layer snapshots
// ===========================================================================

namespace {
nlohmann::json layer_json(const LinearLayer& layer) {
    nlohmann::json j;
    j["in"] = layer.in_dim();
    j["out"] = layer.out_dim();
    j["weight"] = std::vector<double>(layer.weight.data(), layer.weight.data() + layer.weight.size());
    j["bias"] = layer.bias;
    return j;
}

LinearLayer layer_from(const nlohmann::json& j) {
    LinearLayer layer(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
    auto w = j.at("weight").get<std::vector<double>>();
    if (w.size() != layer.weight.size()) throw ParseError("layer snapshot: weight size mismatch");
    std::copy(w.begin(), w.end(), layer.weight.data());
    layer.bias = j.at("bias").get<std::vector<double>>();
    if (layer.bias.size() != layer.out_dim()) throw ParseError("layer snapshot: bias size mismatch");
    return layer;
}
} // namespace

std::string layer_to_json(const LinearLayer& layer) {
    nlohmann::json j = layer_json(layer);
    j["schema"] = "divst-layer";
    j["version"] = 1;
    return j.dump();
}

LinearLayer layer_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("layer snapshot: ") + e.what());
    }
    if (j.value("schema", "") != "divst-layer" || j.value("version", 0) != 1)
        throw ParseError("layer snapshot: unknown schema/version");
    return layer_from(j);
}

namespace detail {
nlohmann::json layer_json_for_net(const LinearLayer& layer) { return layer_json(layer); }
LinearLayer layer_from_json_for_net(const nlohmann::json& j) { return layer_from(j); }
} // namespace detail

} // namespace divst
