#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divst/matrix.hpp"
#include "divst/rng.hpp"

namespace divst {

// Fully-connected layer, out×in weight, explicit gradient buffers.
struct LinearLayer {
    Matrix weight;  // out × in
    std::vector<double> bias;
    Matrix grad_weight;
    std::vector<double> grad_bias;

    LinearLayer() = default;
    LinearLayer(std::size_t in, std::size_t out)
        : weight(out, in), bias(out, 0.0), grad_weight(out, in), grad_bias(out, 0.0) {}

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    // Glorot-uniform weights, zero biases.
    void init_glorot(Rng& rng);
    void zero_grad();
};

// input: n×in  ->  n×out  (x W^T + b)
Matrix forward_linear(const LinearLayer& layer, const Matrix& input);

// Accumulates grad_weight/grad_bias from (input, grad_out); returns gradient
// w.r.t. the input when want_grad_input (callers at the bottom of a segment
// skip it).
Matrix backward_linear(LinearLayer& layer, const Matrix& input, const Matrix& grad_out,
                       bool want_grad_input);

Matrix relu(const Matrix& x);
// pre is the pre-activation that fed the relu.
Matrix relu_backward(const Matrix& pre, const Matrix& grad_out);

// Row-wise softmax with max-subtraction stabilization; rows land on the
// simplex for arbitrary finite logits.
Matrix softmax_rows(const Matrix& logits);

// Mean negative log-likelihood; probabilities clamped at 1e-12 inside the log.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

// Gradient of the mean cross-entropy w.r.t. pre-softmax logits:
// (probs - onehot)/batch.
Matrix cross_entropy_logit_grad(const Matrix& probs, const std::vector<int>& labels);

// One recorded linear(+ReLU) application: everything backward needs.
struct TapeNode {
    Matrix input; // the matrix fed to the linear layer
    Matrix pre;   // pre-activation (kept only when relu_applied)
    bool relu_applied = false;
};

// Ordered forward record for one loss path through the trunk. A tape marked
// stop_gradient contributes zero gradient upstream: trunk_backward refuses to
// run on it (the confidence-loss path never reaches trunk parameters).
struct ForwardTape {
    std::vector<TapeNode> nodes;
    bool stop_gradient = false;
    bool consumed = false;
};

// Adam over an explicit registry of (param, grad) spans.
class Adam {
public:
    struct ParamRef {
        double* param;
        double* grad;
        std::size_t n;
    };

    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // (Re)binds the parameter set; moment buffers are sized to match and
    // zeroed.
    void attach(std::vector<ParamRef> refs);

    // Applies one bias-corrected Adam update from the current gradient
    // buffers. step() strictly increments the step counter.
    void step();

    long step_count() const { return step_; }
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long step_ = 0;
    std::vector<ParamRef> refs_;
    std::vector<std::vector<double>> m_, v_;
};

// Layer snapshots for checkpointing between self-training iterations
// (versioned JSON; see save_network/load_network in confidence.hpp for the
// whole-network form).
std::string layer_to_json(const LinearLayer& layer);
LinearLayer layer_from_json(const std::string& text);

} // namespace divst
