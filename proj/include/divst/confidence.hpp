#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "divst/matrix.hpp"
#include "divst/nn.hpp"

namespace divst {

struct NetConfig {
    std::size_t input_dim = 0;
    std::size_t hidden = 128;
    std::size_t classes = 2;
    std::size_t M = 5;      // ensemble heads
    double gamma = 1.0;     // diversity strength, >= 0
};

// The network of the architecture diagram: a two-layer ReLU projection trunk
// shared by one prediction head and M linear ensemble heads. The supervised
// loss trains trunk + prediction head; the confidence loss trains the
// ensemble heads only (stop-gradient at the trunk output).
class DiverseHeadNetwork {
public:
    NetConfig cfg;
    LinearLayer trunk1, trunk2, pred_head;
    std::vector<LinearLayer> heads;

    DiverseHeadNetwork(const NetConfig& config, std::uint64_t seed);

    // x: n×input_dim -> n×hidden. Fills *tape when given (two nodes).
    Matrix trunk_forward(const Matrix& x, ForwardTape* tape = nullptr) const;

    // Accumulates trunk parameter gradients from d(loss)/d(trunk output).
    // A tape marked stop_gradient contributes nothing (and is still consumed).
    void trunk_backward(ForwardTape& tape, const Matrix& grad_h);

    // softmax(pred_head(trunk(x)))
    Matrix pred_probs(const Matrix& x) const;

    // Per-head softmax outputs on an already-projected representation.
    std::vector<Matrix> head_probs_on(const Matrix& h) const;

    void zero_grad();
    std::vector<Adam::ParamRef> param_refs();

    // Max |gradient| per group, for routing assertions.
    double trunk_grad_max_abs() const;
    double pred_grad_max_abs() const;
    double heads_grad_max_abs() const;
};

// T-similarity of one example from its M head outputs (each a probability
// row): mean pairwise inner product over ordered pairs. M < 2 is a
// configuration error; rows must sit on the simplex within 1e-6.
double t_similarity(const std::vector<std::vector<double>>& head_rows);

// Per-example T-similarity for a batch; head_probs[m] is n×C.
std::vector<double> t_similarity_batch(const std::vector<Matrix>& head_probs);

// -(1/n_u) * sum of per-example T-similarities. Empty batch is an input
// error.
double diversity_loss(const std::vector<Matrix>& head_probs);

struct ConfidenceScores {
    std::vector<double> s_t;          // T-similarity per example, in [0,1]
    std::vector<int> predicted_class; // pred-head argmax, ties -> lowest index
    std::vector<double> softmax_max;  // pred-head max probability
};

ConfidenceScores score_unlabeled(const DiverseHeadNetwork& net, const Matrix& x_u);

// Confidence loss of the ensemble: (1/M)Σ_m CE(h_m, labeled) − γ·ℓ_div(unlabeled).
// backward=true accumulates gradients into ensemble-head parameters only;
// trunk gradients are untouched by construction.
double confidence_loss(DiverseHeadNetwork& net, const Matrix& x_l, const std::vector<int>& y_l,
                       const Matrix& x_u, bool backward = true);

struct StepLosses {
    double l_sup;
    double l_conf;
};

// One training step of the total loss L_sup(pred head) + L_conf(ensemble):
// forward, routed backward, Adam update. Trunk and prediction head receive
// gradients only from L_sup; ensemble heads only from L_conf. An empty
// unlabeled batch drops the diversity term (degenerate fully-labeled case).
StepLosses total_loss_step(DiverseHeadNetwork& net, const Matrix& x_l,
                           const std::vector<int>& y_l, const Matrix& x_u, Adam& adam);

// CSV dump: example_id,s_T,softmax_max,predicted_class,true_class_if_known
void dump_scores_csv(std::ostream& out, const ConfidenceScores& scores,
                     const std::vector<int>* truth = nullptr);

// Whole-network snapshot (versioned JSON schema).
std::string network_to_json(const DiverseHeadNetwork& net);
DiverseHeadNetwork network_from_json(const std::string& text);

} // namespace divst
