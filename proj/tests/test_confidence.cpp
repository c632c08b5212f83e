#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "divst/confidence.hpp"
#include "divst/errors.hpp"
#include "divst/linalg.hpp"
#include "divst/nn.hpp"
#include "divst/rng.hpp"

using namespace divst;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

// Random point on the C-simplex.
std::vector<double> random_simplex_row(std::size_t classes, Rng& rng) {
    std::vector<double> row(classes);
    double sum = 0.0;
    for (double& v : row) {
        v = -std::log(1.0 - rng.uniform());
        sum += v;
    }
    for (double& v : row) v /= sum;
    return row;
}

DiverseHeadNetwork small_net(double gamma, std::uint64_t seed) {
    NetConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = 8;
    cfg.classes = 2;
    cfg.M = 3;
    cfg.gamma = gamma;
    return DiverseHeadNetwork(cfg, seed);
}

} // namespace

TEST_CASE("t-similarity of two orthogonal one-hot heads is exactly zero") {
    CHECK(t_similarity({{1.0, 0.0}, {0.0, 1.0}}) == 0.0);
}

TEST_CASE("t-similarity of three unanimous one-hot heads is exactly one") {
    CHECK(t_similarity({{1, 0, 0}, {1, 0, 0}, {1, 0, 0}}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("t-similarity of three uniform binary heads is one half") {
    // each of the 6 ordered pairs contributes 0.5
    CHECK(t_similarity({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}) ==
          doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("t-similarity rejects fewer than two heads and off-simplex rows") {
    CHECK_THROWS_AS(t_similarity({{1.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(t_similarity({{0.7, 0.7}, {0.5, 0.5}}), InputError);
    CHECK_THROWS_AS(t_similarity({{-0.1, 1.1}, {0.5, 0.5}}), InputError);
}

TEST_CASE("t-similarity stays in [0,1] over 1000 random simplex head tuples") {
    Rng rng(101, "simplex-tuples");
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t M = 2 + rng.below(4);      // 2..5 heads
        std::size_t C = 2 + rng.below(4);      // 2..5 classes
        std::vector<std::vector<double>> rows;
        for (std::size_t m = 0; m < M; ++m) rows.push_back(random_simplex_row(C, rng));
        double s = t_similarity(rows);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("diversity loss of a unanimous one-hot batch is minus one") {
    std::vector<Matrix> heads(3, Matrix{{1.0, 0.0}, {0.0, 1.0}});
    CHECK(diversity_loss(heads) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("diversity loss of the two-head orthogonal batch is zero") {
    std::vector<Matrix> heads{Matrix{{1.0, 0.0}}, Matrix{{0.0, 1.0}}};
    CHECK(diversity_loss(heads) == 0.0);
}

TEST_CASE("diversity loss of a mixed batch averages the per-point similarities") {
    // point 0: unanimous one-hots (s_T = 1); point 1: all uniform (s_T = 0.5)
    std::vector<Matrix> heads(3, Matrix{{1.0, 0.0}, {0.5, 0.5}});
    CHECK(diversity_loss(heads) == doctest::Approx(-0.75).epsilon(1e-15));
}

TEST_CASE("diversity loss rejects an empty batch") {
    std::vector<Matrix> heads(2, Matrix(0, 2));
    CHECK_THROWS_AS(diversity_loss(heads), InputError);
}

TEST_CASE("batch t-similarity equals per-point evaluation") {
    Rng rng(103, "batch-vs-point");
    const std::size_t n = 17, C = 3, M = 4;
    std::vector<Matrix> heads(M, Matrix(n, C));
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row = random_simplex_row(C, rng);
            for (std::size_t j = 0; j < C; ++j) heads[m](i, j) = row[j];
        }
    std::vector<double> batch = t_similarity_batch(heads);
    REQUIRE(batch.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::vector<double>> point(M, std::vector<double>(C));
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t j = 0; j < C; ++j) point[m][j] = heads[m](i, j);
        // the batch path may sum pairs in a different order
        CHECK(batch[i] == doctest::Approx(t_similarity(point)).epsilon(1e-12));
    }
}

TEST_CASE("score_unlabeled agrees with manual head and prediction evaluation") {
    DiverseHeadNetwork net = small_net(1.0, 5);
    Rng rng(105, "score-batch");
    Matrix x = random_matrix(9, 3, rng);

    ConfidenceScores scores = score_unlabeled(net, x);
    REQUIRE(scores.s_t.size() == 9);
    REQUIRE(scores.predicted_class.size() == 9);
    REQUIRE(scores.softmax_max.size() == 9);

    Matrix h = net.trunk_forward(x);
    std::vector<double> st = t_similarity_batch(net.head_probs_on(h));
    Matrix probs = net.pred_probs(x);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(scores.s_t[i] == st[i]);
        CHECK(scores.s_t[i] >= 0.0);
        CHECK(scores.s_t[i] <= 1.0);
        int arg = 0;
        double best = probs(i, 0);
        for (std::size_t j = 1; j < probs.cols(); ++j)
            if (probs(i, j) > best) {
                best = probs(i, j);
                arg = static_cast<int>(j);
            }
        CHECK(scores.predicted_class[i] == arg);
        CHECK(scores.softmax_max[i] == doctest::Approx(best).epsilon(1e-15));
    }
}

TEST_CASE("confidence loss at gamma zero is the mean head cross-entropy") {
    DiverseHeadNetwork net = small_net(0.0, 7);
    Rng rng(107, "gamma-zero");
    Matrix x_l = random_matrix(6, 3, rng);
    std::vector<int> y_l{0, 1, 0, 1, 1, 0};
    Matrix x_u = random_matrix(11, 3, rng);

    double loss = confidence_loss(net, x_l, y_l, x_u, /*backward=*/false);

    Matrix h_l = net.trunk_forward(x_l);
    std::vector<Matrix> head_probs = net.head_probs_on(h_l);
    double mean_ce = 0.0;
    for (const Matrix& p : head_probs) mean_ce += cross_entropy(p, y_l);
    mean_ce /= static_cast<double>(head_probs.size());
    CHECK(loss == doctest::Approx(mean_ce).epsilon(1e-12));
}

TEST_CASE("unanimous perfect heads give confidence loss one at unit gamma") {
    // Hand-built network: identity trunk on nonnegative inputs, all heads
    // saturating the correct class, so the supervised term is ~0 and the
    // diversity term is ~-1; the loss is 0 - gamma * (-1) = 1.
    NetConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden = 2;
    cfg.classes = 2;
    cfg.M = 2;
    cfg.gamma = 1.0;
    DiverseHeadNetwork net(cfg, 1);
    net.trunk1.weight = Matrix::identity(2);
    net.trunk1.bias = {0.0, 0.0};
    net.trunk2.weight = Matrix::identity(2);
    net.trunk2.bias = {0.0, 0.0};
    for (LinearLayer& head : net.heads) {
        head.weight = Matrix{{40.0, 0.0}, {-40.0, 0.0}};
        head.bias = {0.0, 0.0};
    }
    Matrix x_l{{3.0, 0.0}};
    std::vector<int> y_l{0};
    Matrix x_u{{2.0, 0.0}, {5.0, 0.0}};

    double loss = confidence_loss(net, x_l, y_l, x_u, /*backward=*/false);
    CHECK(loss == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("confidence loss backward routes gradients to ensemble heads only") {
    DiverseHeadNetwork net = small_net(1.0, 11);
    Rng rng(111, "routing");
    Matrix x_l = random_matrix(5, 3, rng);
    std::vector<int> y_l{1, 0, 1, 1, 0};
    Matrix x_u = random_matrix(8, 3, rng);

    net.zero_grad();
    confidence_loss(net, x_l, y_l, x_u, /*backward=*/true);
    CHECK(net.trunk_grad_max_abs() == 0.0);
    CHECK(net.pred_grad_max_abs() == 0.0);
    CHECK(net.heads_grad_max_abs() > 0.0);
}

TEST_CASE("heads initialized to the prediction head reproduce the supervised loss at gamma zero") {
    DiverseHeadNetwork net = small_net(0.0, 13);
    for (LinearLayer& head : net.heads) {
        head.weight = net.pred_head.weight;
        head.bias = net.pred_head.bias;
    }
    Rng rng(113, "tied-heads");
    Matrix x_l = random_matrix(7, 3, rng);
    std::vector<int> y_l{0, 0, 1, 1, 0, 1, 1};
    Matrix x_u = random_matrix(4, 3, rng); // gamma = 0 scales its term away

    double l_conf = confidence_loss(net, x_l, y_l, x_u, /*backward=*/false);
    double l_sup = cross_entropy(net.pred_probs(x_l), y_l);
    CHECK(l_conf == doctest::Approx(l_sup).epsilon(1e-12));
}

TEST_CASE("one total-loss step accumulates per-group gradients matching finite differences") {
    DiverseHeadNetwork net = small_net(0.7, 17);
    Rng rng(117, "step-fd");
    Matrix x_l = random_matrix(5, 3, rng);
    std::vector<int> y_l{1, 0, 0, 1, 1};
    Matrix x_u = random_matrix(6, 3, rng);

    DiverseHeadNetwork probe = net; // keeps the pre-step parameters
    Adam adam(1e-3);
    adam.attach(net.param_refs());
    total_loss_step(net, x_l, y_l, x_u, adam);
    // gradient buffers survive the update and were accumulated at the
    // pre-step parameters, so finite differences run on `probe`

    auto l_sup_at = [&](DiverseHeadNetwork& n) { return cross_entropy(n.pred_probs(x_l), y_l); };
    auto l_conf_at = [&](DiverseHeadNetwork& n) {
        return confidence_loss(n, x_l, y_l, x_u, false);
    };
    const double h = 1e-6;

    // trunk parameters carry exactly the supervised gradient
    for (std::size_t k = 0; k < 3; ++k) {
        DiverseHeadNetwork p = probe, m = probe;
        p.trunk1.weight(0, k) += h;
        m.trunk1.weight(0, k) -= h;
        double fd = (l_sup_at(p) - l_sup_at(m)) / (2.0 * h);
        CHECK(net.trunk1.grad_weight(0, k) == doctest::Approx(fd).epsilon(5e-5).scale(1.0));
    }
    // prediction head likewise
    {
        DiverseHeadNetwork p = probe, m = probe;
        p.pred_head.weight(0, 0) += h;
        m.pred_head.weight(0, 0) -= h;
        double fd = (l_sup_at(p) - l_sup_at(m)) / (2.0 * h);
        CHECK(net.pred_head.grad_weight(0, 0) == doctest::Approx(fd).epsilon(5e-5).scale(1.0));
    }
    // ensemble heads carry exactly the confidence gradient
    {
        DiverseHeadNetwork p = probe, m = probe;
        p.heads[0].weight(0, 0) += h;
        m.heads[0].weight(0, 0) -= h;
        double fd = (l_conf_at(p) - l_conf_at(m)) / (2.0 * h);
        CHECK(net.heads[0].grad_weight(0, 0) == doctest::Approx(fd).epsilon(5e-5).scale(1.0));
    }
    // and the step really moved the trunk (supervised gradient was nonzero)
    CHECK(frobenius_norm(sub(net.trunk1.weight, probe.trunk1.weight)) > 0.0);
}

TEST_CASE("network JSON snapshot round-trips to identical behavior") {
    DiverseHeadNetwork net = small_net(1.0, 19);
    DiverseHeadNetwork back = network_from_json(network_to_json(net));
    Rng rng(119, "net-json");
    Matrix x = random_matrix(4, 3, rng);
    Matrix a = net.pred_probs(x);
    Matrix b = back.pred_probs(x);
    CHECK(a == b);
    ConfidenceScores sa = score_unlabeled(net, x);
    ConfidenceScores sb = score_unlabeled(back, x);
    CHECK(sa.s_t == sb.s_t);
    CHECK(sa.predicted_class == sb.predicted_class);
}

TEST_CASE("network snapshot parser rejects malformed input") {
    CHECK_THROWS_AS(network_from_json("{\"schema\":\"wrong\"}"), ParseError);
    CHECK_THROWS_AS(network_from_json("not json"), ParseError);
}

TEST_CASE("score CSV dump has a header and one row per example") {
    DiverseHeadNetwork net = small_net(1.0, 23);
    Rng rng(123, "csv-dump");
    Matrix x = random_matrix(3, 3, rng);
    ConfidenceScores scores = score_unlabeled(net, x);
    std::ostringstream out;
    std::vector<int> truth{0, 1, 0};
    dump_scores_csv(out, scores, &truth);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 4); // header + 3 rows
}
