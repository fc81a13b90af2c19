#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "confuse/downstream.hpp"
#include "confuse/errors.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace confuse;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m(i) = unif(rng);
    return m;
}

int walk_depth(const DecisionTree& tree, int node) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.feature < 0) return 0;
    return 1 + std::max(walk_depth(tree, n.left), walk_depth(tree, n.right));
}

void check_leaves(const DecisionTree& tree, int node) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.feature < 0) {
        CHECK(n.prob_sell >= 0.0);
        CHECK(n.prob_buy >= 0.0);
        CHECK(n.prob_sell + n.prob_buy == doctest::Approx(1.0).epsilon(1e-12));
        return;
    }
    check_leaves(tree, n.left);
    check_leaves(tree, n.right);
}

}  // namespace

TEST_CASE("tiny ridge recovers an exactly linear target") {
    Matrix x = random_matrix(40, 3, 1);
    Matrix w_true(3, 2);
    w_true << 1.5, -0.5, 0.25, 2.0, -1.0, 0.75;
    Matrix y = x * w_true;
    y.col(0).array() += 3.0;  // intercepts should absorb this
    y.col(1).array() -= 1.0;

    RidgeModel m = ridge_fit(x, y, 1e-8);
    CHECK((m.weights - w_true).cwiseAbs().maxCoeff() <= 1e-6);
    Matrix pred = ridge_predict(m, x);
    CHECK((pred - y).cwiseAbs().maxCoeff() <= 1e-6);
    Vector mae = mean_absolute_error(pred, y);
    CHECK(mae.maxCoeff() <= 1e-6);
}

TEST_CASE("unit-length orthogonal features shrink weights by alpha plus one") {
    // centered orthonormal design: X^T X = I, so ridge weights are the least
    // squares weights divided by (1 + alpha)
    const Index n = 8;
    Matrix x(n, 2);
    x.setZero();
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = (i % 2 == 0 ? 0.5 : -0.5) / std::sqrt(2.0);
        x(i, 1) = (i % 4 < 2 ? 0.5 : -0.5) / std::sqrt(2.0);
    }
    // columns are centered, orthogonal, unit norm
    REQUIRE(std::abs(x.col(0).sum()) <= 1e-15);
    REQUIRE(std::abs(x.col(1).sum()) <= 1e-15);
    REQUIRE(std::abs(x.col(0).dot(x.col(1))) <= 1e-15);
    REQUIRE(x.col(0).norm() == doctest::Approx(1.0).epsilon(1e-12));

    Matrix y = random_matrix(n, 1, 2);
    RidgeModel ls = ridge_fit(x, y, 1e-12);
    RidgeModel shrunk = ridge_fit(x, y, 1.0);
    for (Index j = 0; j < 2; ++j)
        CHECK(shrunk.weights(j, 0) ==
              doctest::Approx(ls.weights(j, 0) / 2.0).epsilon(1e-6));
}

TEST_CASE("ridge weights satisfy the penalized normal equations") {
    Matrix x = random_matrix(30, 4, 3);
    Matrix y = random_matrix(30, 2, 4);
    const double alpha = 0.37;
    RidgeModel m = ridge_fit(x, y, alpha);

    Matrix xc = x.rowwise() - x.colwise().mean();
    Matrix yc = y.rowwise() - y.colwise().mean();
    Matrix lhs = (xc.transpose() * xc + alpha * Matrix::Identity(4, 4)) * m.weights;
    Matrix rhs = xc.transpose() * yc;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9);

    // intercepts reproduce the target means at the feature means
    Matrix mean_pred = ridge_predict(m, x.colwise().mean());
    for (Index j = 0; j < 2; ++j)
        CHECK(mean_pred(0, j) == doctest::Approx(y.col(j).mean()).epsilon(1e-9));
}

TEST_CASE("constant targets produce zero error") {
    Matrix x = random_matrix(25, 3, 5);
    Matrix y = Matrix::Constant(25, 2, 4.2);
    RidgeModel m = ridge_fit(x, y, 1.0);
    Vector mae = mean_absolute_error(ridge_predict(m, x), y);
    CHECK(mae.maxCoeff() <= 1e-9);
}

TEST_CASE("mean absolute error matches the scalar loop") {
    Matrix a = random_matrix(12, 3, 6);
    Matrix b = random_matrix(12, 3, 7);
    Vector mae = mean_absolute_error(a, b);
    for (Index j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (Index i = 0; i < 12; ++i) acc += std::abs(a(i, j) - b(i, j));
        CHECK(testsup::rel_err(mae[j], acc / 12.0) <= 1e-12);
    }
    CHECK_THROWS_AS(mean_absolute_error(a, random_matrix(11, 3, 8)), DimensionError);
}

TEST_CASE("ridge rejects non-positive regularization") {
    Matrix x = random_matrix(10, 2, 9);
    Matrix y = random_matrix(10, 1, 10);
    CHECK_THROWS_AS(ridge_fit(x, y, 0.0), ConfigError);
    CHECK_THROWS_AS(ridge_fit(x, y, -1.0), ConfigError);
}

TEST_CASE("the forest separates well separated blobs") {
    Matrix x;
    std::vector<int> labels;
    testsup::make_blobs(60, 4, 42, 4.0, x, labels);
    ForestConfig cfg;
    cfg.num_trees = 40;
    cfg.seed = 11;
    ForestModel forest = forest_fit(x, labels, cfg);
    Vector probs = forest_predict_proba(forest, x);
    REQUIRE(probs.size() == x.rows());
    int correct = 0;
    for (Index i = 0; i < probs.size(); ++i) {
        CHECK(probs[i] >= 0.0);
        CHECK(probs[i] <= 1.0);
        const int pred = probs[i] >= 0.5 ? 1 : 0;
        if (pred == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(probs.size()) >= 0.95);

    // points deep inside a blob get near-certain probabilities
    Matrix deep(2, 4);
    deep.setZero();
    deep(0, 0) = -2.0;  // far on the sell side
    deep(1, 0) = 6.0;   // far on the buy side
    Vector p = forest_predict_proba(forest, deep);
    CHECK(p[0] <= 0.1);
    CHECK(p[1] >= 0.9);
}

TEST_CASE("one sample per class fits with a single split") {
    Matrix x(2, 1);
    x << 0.0, 1.0;
    std::vector<int> labels = {0, 1};
    ForestConfig cfg;
    cfg.num_trees = 5;
    cfg.max_depth = 1;
    cfg.min_leaf = 1;
    cfg.seed = 3;
    ForestModel forest = forest_fit(x, labels, cfg);
    Vector p = forest_predict_proba(forest, x);
    // bootstraps may duplicate one class, so only demand the right ordering
    CHECK(p[1] >= p[0]);
    for (const DecisionTree& tree : forest.trees) {
        CHECK(walk_depth(tree, 0) <= 1);
        check_leaves(tree, 0);
    }
}

TEST_CASE("forest training is reproducible and depth bounded") {
    Matrix x;
    std::vector<int> labels;
    testsup::make_blobs(30, 3, 7, 2.0, x, labels);
    ForestConfig cfg;
    cfg.num_trees = 12;
    cfg.max_depth = 4;
    cfg.min_leaf = 2;
    cfg.seed = 99;
    ForestModel a = forest_fit(x, labels, cfg);
    ForestModel b = forest_fit(x, labels, cfg);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        const auto& na = a.trees[t].nodes;
        const auto& nb = b.trees[t].nodes;
        REQUIRE(na.size() == nb.size());
        for (std::size_t i = 0; i < na.size(); ++i) {
            CHECK(na[i].feature == nb[i].feature);
            CHECK(na[i].threshold == nb[i].threshold);
            CHECK(na[i].left == nb[i].left);
            CHECK(na[i].right == nb[i].right);
            CHECK(na[i].prob_sell == nb[i].prob_sell);
            CHECK(na[i].prob_buy == nb[i].prob_buy);
        }
        CHECK(walk_depth(a.trees[t], 0) <= cfg.max_depth);
        check_leaves(a.trees[t], 0);
    }
}

TEST_CASE("degenerate forest inputs are rejected") {
    Matrix x(3, 2);
    x.setZero();
    CHECK_THROWS_AS(forest_fit(x, {1, 1, 1}, ForestConfig{}), DataError);
    CHECK_THROWS_AS(forest_fit(x, {0, 1}, ForestConfig{}), DimensionError);
    Matrix one(1, 2);
    one.setZero();
    CHECK_THROWS_AS(forest_fit(one, {1}, ForestConfig{}), DataError);
    ForestConfig bad;
    bad.num_trees = 0;
    CHECK_THROWS_AS(forest_fit(x, {0, 1, 1}, bad), ConfigError);
}

TEST_CASE("a perfect ranking scores perfectly") {
    Vector probs(6);
    probs << 0.1, 0.2, 0.3, 0.7, 0.8, 0.9;
    std::vector<int> labels = {0, 0, 0, 1, 1, 1};
    ClassificationMetrics m = classification_metrics(probs, labels);
    REQUIRE(m.auc.has_value());
    CHECK(*m.auc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("label-independent scores hover near chance") {
    std::mt19937_64 rng(2718);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int n = 4000;
    Vector probs(n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        probs[i] = unif(rng);
        labels[static_cast<std::size_t>(i)] = (rng() & 1) ? 1 : 0;
    }
    ClassificationMetrics m = classification_metrics(probs, labels);
    REQUIRE(m.auc.has_value());
    CHECK(std::abs(*m.auc - 0.5) <= 0.05);
}

TEST_CASE("midrank AUC equals the pairwise count, ties included") {
    std::mt19937_64 rng(31415);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 98);
        Vector probs(n);
        std::vector<int> labels(static_cast<std::size_t>(n));
        bool saw0 = false, saw1 = false;
        for (int i = 0; i < n; ++i) {
            // coarse grid of scores so ties are common
            probs[i] = static_cast<double>(rng() % 5) / 4.0;
            const int lab = (rng() % 3 == 0) ? 1 : 0;
            labels[static_cast<std::size_t>(i)] = lab;
            (lab ? saw1 : saw0) = true;
        }
        if (!saw0 || !saw1) continue;
        ClassificationMetrics m = classification_metrics(probs, labels);
        REQUIRE(m.auc.has_value());
        const double oracle = testsup::pairwise_auc(probs, labels);
        CHECK(testsup::rel_err(*m.auc, oracle) <= 1e-12);
    }
}

TEST_CASE("single-class labels leave the AUC unset") {
    Vector probs(3);
    probs << 0.2, 0.5, 0.8;
    ClassificationMetrics m = classification_metrics(probs, {1, 1, 1});
    CHECK(!m.auc.has_value());
    CHECK(m.precision == 1.0);  // everything predicted buy is a buy
    CHECK(m.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("f1 is the harmonic mean of precision and recall") {
    std::mt19937_64 rng(8128);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 50;
        Vector probs(n);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            probs[i] = unif(rng);
            labels[static_cast<std::size_t>(i)] = (unif(rng) < 0.4) ? 1 : 0;
        }
        ClassificationMetrics m = classification_metrics(probs, labels, 0.5);
        if (m.precision + m.recall == 0.0) {
            CHECK(m.f1 == 0.0);
        } else {
            CHECK(testsup::rel_err(
                      m.f1, 2.0 * m.precision * m.recall / (m.precision + m.recall)) <= 1e-12);
        }
        // threshold semantics: exactly-at-threshold predicts buy
        Vector edge(2);
        edge << 0.5, 0.49999;
        ClassificationMetrics e = classification_metrics(edge, {1, 0}, 0.5);
        CHECK(e.precision == 1.0);
        CHECK(e.recall == 1.0);
    }
}

TEST_CASE("never buying earns exactly zero") {
    std::vector<double> closes = {100.0, 101.0, 99.0, 102.0};
    std::vector<int> decisions = {0, 0, 0};
    CHECK(annualized_return(closes, decisions) == 0.0);
}

TEST_CASE("flat prices earn exactly zero however traded") {
    std::vector<double> closes(11, 55.5);
    std::vector<int> decisions(10, 1);
    CHECK(annualized_return(closes, decisions) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a year of alternating one-percent days compounds as expected") {
    // 252 decisions: buy on even days, each buy gaining exactly 1 percent
    std::vector<double> closes;
    std::vector<int> decisions;
    double price = 100.0;
    closes.push_back(price);
    for (int t = 0; t < 252; ++t) {
        if (t % 2 == 0) {
            decisions.push_back(1);
            price *= 1.01;
        } else {
            decisions.push_back(0);
            price *= 0.999;  // ignored by the strategy
        }
        closes.push_back(price);
    }
    const double got = annualized_return(closes, decisions);
    const double want = (std::pow(1.01, 126.0) - 1.0) * 100.0;
    CHECK(testsup::rel_err(got, want) <= 1e-10);
}

TEST_CASE("annualized return ignores the price scale") {
    std::vector<double> closes = {10.0, 10.4, 10.1, 10.6, 10.2};
    std::vector<int> decisions = {1, 0, 1, 1};
    std::vector<double> scaled = closes;
    for (double& c : scaled) c *= 1000.0;
    CHECK(annualized_return(closes, decisions) ==
          doctest::Approx(annualized_return(scaled, decisions)).epsilon(1e-12));
}

TEST_CASE("return computation validates its inputs") {
    CHECK_THROWS_AS(annualized_return({100.0, 101.0}, {1, 1}), DimensionError);
    CHECK_THROWS_AS(annualized_return({100.0, -1.0}, {1}), DataError);
    CHECK_THROWS_AS(annualized_return({100.0, 101.0}, {2}), DataError);
    CHECK_THROWS_AS(annualized_return({100.0}, {}), DimensionError);
}

TEST_CASE("reports render to text and json with matching content") {
    std::filesystem::create_directories("tmp_downstream_tests");
    EvalReport r;
    r.mae = Vector(5);
    r.mae << 0.1, 0.2, 0.3, 0.4, 0.5;
    r.has_trading = true;
    r.precision = 0.75;
    r.recall = 0.5;
    r.f1 = 0.6;
    r.auc = 0.875;
    r.ar_predicted = 12.5;
    r.ar_actual = 10.0;
    r.ar_relative_diff = 0.25;

    write_report_txt(r, "tmp_downstream_tests/report.txt", {{"symbol", "ABC"}});
    write_report_json(r, "tmp_downstream_tests/report.json", {{"symbol", "ABC"}});

    std::ifstream txt("tmp_downstream_tests/report.txt");
    std::stringstream buf;
    buf << txt.rdbuf();
    const std::string text = buf.str();
    CHECK(text.find("symbol ABC") != std::string::npos);
    CHECK(text.find("mae_close") != std::string::npos);
    CHECK(text.find("precision") != std::string::npos);
    CHECK(text.find("ar_predicted") != std::string::npos);

    std::ifstream js("tmp_downstream_tests/report.json");
    nlohmann::json j = nlohmann::json::parse(js);
    CHECK(j["symbol"] == "ABC");
    CHECK(j["mae_close"] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(j["auc"] == doctest::Approx(0.875).epsilon(1e-12));
    CHECK(j["ar_actual"] == doctest::Approx(10.0).epsilon(1e-12));

    // without trading or auc the json carries null and the text says nan
    EvalReport bare;
    bare.mae = Vector::Zero(5);
    bare.has_trading = true;
    write_report_txt(bare, "tmp_downstream_tests/bare.txt");
    write_report_json(bare, "tmp_downstream_tests/bare.json");
    std::ifstream bjs("tmp_downstream_tests/bare.json");
    nlohmann::json bj = nlohmann::json::parse(bjs);
    CHECK(bj["auc"].is_null());
    std::ifstream btxt("tmp_downstream_tests/bare.txt");
    std::stringstream bbuf;
    bbuf << btxt.rdbuf();
    CHECK(bbuf.str().find("auc nan") != std::string::npos);
}
