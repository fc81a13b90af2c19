#include "confuse/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "confuse/data.hpp"
#include "confuse/errors.hpp"
#include "seeding.hpp"

namespace confuse {

RidgeModel ridge_fit(const Matrix& x, const Matrix& y, double alpha) {
    if (x.rows() != y.rows())
        throw DimensionError("ridge fit: " + std::to_string(x.rows()) + " feature rows vs " +
                             std::to_string(y.rows()) + " target rows");
    if (x.rows() < 1) throw DataError("ridge fit needs at least one sample");
    if (!(alpha > 0.0)) throw ConfigError("ridge alpha must be positive");

    Vector x_mean = x.colwise().mean();
    Vector y_mean = y.colwise().mean();
    Matrix xc = x.rowwise() - x_mean.transpose();
    Matrix yc = y.rowwise() - y_mean.transpose();

    Matrix gram = xc.transpose() * xc;
    gram.diagonal().array() += alpha;
    Eigen::LDLT<Matrix> solver(gram);
    if (solver.info() != Eigen::Success)
        throw NumericalError("ridge normal equations are not solvable");

    RidgeModel model;
    model.alpha = alpha;
    model.weights = solver.solve(xc.transpose() * yc);
    model.intercepts = y_mean - model.weights.transpose() * x_mean;
    return model;
}

Matrix ridge_predict(const RidgeModel& model, const Matrix& x) {
    if (x.cols() != model.weights.rows())
        throw DimensionError("ridge predict: " + std::to_string(x.cols()) + " features, model has " +
                             std::to_string(model.weights.rows()));
    return (x * model.weights).rowwise() + model.intercepts.transpose();
}

Vector mean_absolute_error(const Matrix& predicted, const Matrix& actual) {
    if (predicted.rows() != actual.rows() || predicted.cols() != actual.cols())
        throw DimensionError("error matrices disagree on shape");
    if (predicted.rows() < 1) throw DataError("mean absolute error needs at least one row");
    return (predicted - actual).cwiseAbs().colwise().mean();
}

namespace {

struct TreeBuilder {
    const Matrix& x;
    const std::vector<int>& labels;
    const ForestConfig& cfg;
    int mtry;
    std::mt19937_64& rng;
    std::vector<TreeNode> nodes;
    std::vector<int> feature_pool;

    TreeBuilder(const Matrix& x_, const std::vector<int>& labels_, const ForestConfig& cfg_,
                int mtry_, std::mt19937_64& rng_)
        : x(x_), labels(labels_), cfg(cfg_), mtry(mtry_), rng(rng_) {
        feature_pool.resize(static_cast<std::size_t>(x.cols()));
        std::iota(feature_pool.begin(), feature_pool.end(), 0);
    }

    static double gini(double pos, double n) {
        double p = pos / n;
        return 2.0 * p * (1.0 - p);
    }

    int build(std::vector<int>& rows, int depth) {
        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        const double n = static_cast<double>(rows.size());
        double pos = 0.0;
        for (int r : rows) pos += labels[static_cast<std::size_t>(r)];
        nodes[static_cast<std::size_t>(id)].prob_buy = pos / n;
        nodes[static_cast<std::size_t>(id)].prob_sell = 1.0 - pos / n;

        if (depth >= cfg.max_depth || static_cast<int>(rows.size()) < 2 * cfg.min_leaf ||
            pos == 0.0 || pos == n)
            return id;

        // draw mtry candidate features without replacement
        const int nf = static_cast<int>(feature_pool.size());
        for (int i = 0; i < mtry; ++i) {
            std::uniform_int_distribution<int> pick(i, nf - 1);
            std::swap(feature_pool[static_cast<std::size_t>(i)],
                      feature_pool[static_cast<std::size_t>(pick(rng))]);
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_impurity = gini(pos, n);
        std::vector<int> sorted = rows;
        for (int fi = 0; fi < mtry; ++fi) {
            const int f = feature_pool[static_cast<std::size_t>(fi)];
            std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
                return x(a, f) < x(b, f);
            });
            double left_pos = 0.0;
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                left_pos += labels[static_cast<std::size_t>(sorted[i])];
                const double a = x(sorted[i], f);
                const double b = x(sorted[i + 1], f);
                if (a == b) continue;  // no boundary between equal values
                const double nl = static_cast<double>(i + 1);
                const double nr = n - nl;
                if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
                const double impurity =
                    (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
                if (impurity < best_impurity - 1e-12) {
                    best_impurity = impurity;
                    best_feature = f;
                    best_threshold = 0.5 * (a + b);
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<int> left, right;
        for (int r : rows)
            (x(r, best_feature) < best_threshold ? left : right).push_back(r);
        if (static_cast<int>(left.size()) < cfg.min_leaf ||
            static_cast<int>(right.size()) < cfg.min_leaf)
            return id;

        nodes[static_cast<std::size_t>(id)].feature = best_feature;
        nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
        const int l = build(left, depth + 1);
        nodes[static_cast<std::size_t>(id)].left = l;
        const int r = build(right, depth + 1);
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }
};

}  // namespace

ForestModel forest_fit(const Matrix& x, const std::vector<int>& labels,
                       const ForestConfig& config) {
    const int k = static_cast<int>(x.rows());
    if (static_cast<std::size_t>(k) != labels.size())
        throw DimensionError("forest fit: " + std::to_string(k) + " rows vs " +
                             std::to_string(labels.size()) + " labels");
    if (k < 2) throw DataError("forest fit needs at least two samples");
    for (int v : labels)
        if (v != 0 && v != 1) throw DataError("forest labels must be 0 or 1");
    const int total_pos = std::accumulate(labels.begin(), labels.end(), 0);
    if (total_pos == 0 || total_pos == k)
        throw DataError("forest fit needs both classes present");
    if (config.num_trees < 1) throw ConfigError("forest needs at least one tree");
    if (config.max_depth < 1) throw ConfigError("forest depth must be positive");
    if (config.min_leaf < 1) throw ConfigError("forest leaf size must be positive");
    if (config.features_per_split < 0 || config.features_per_split > x.cols())
        throw ConfigError("features per split out of range");

    int mtry = config.features_per_split;
    if (mtry == 0)
        mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
    mtry = std::min<int>(mtry, static_cast<int>(x.cols()));

    ForestModel model;
    model.config = config;
    model.trees.reserve(static_cast<std::size_t>(config.num_trees));
    for (int t = 0; t < config.num_trees; ++t) {
        // per-tree stream, so a parallel build would match this serial one
        std::mt19937_64 rng(seeding::derive(config.seed, static_cast<std::uint64_t>(t)));
        std::uniform_int_distribution<int> row_pick(0, k - 1);
        std::vector<int> bootstrap(static_cast<std::size_t>(k));
        for (int& r : bootstrap) r = row_pick(rng);
        TreeBuilder builder(x, labels, config, mtry, rng);
        builder.build(bootstrap, 0);
        model.trees.push_back(DecisionTree{std::move(builder.nodes)});
    }
    return model;
}

Vector forest_predict_proba(const ForestModel& model, const Matrix& x) {
    if (model.trees.empty()) throw DataError("forest has no trees");
    Vector probs = Vector::Zero(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        double total = 0.0;
        for (const DecisionTree& tree : model.trees) {
            int node = 0;
            while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
                const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
                node = x(i, nd.feature) < nd.threshold ? nd.left : nd.right;
            }
            total += tree.nodes[static_cast<std::size_t>(node)].prob_buy;
        }
        probs[i] = total / static_cast<double>(model.trees.size());
    }
    return probs;
}

ClassificationMetrics classification_metrics(const Vector& probs, const std::vector<int>& labels,
                                             double threshold) {
    const Vector& scores = probs;
    if (static_cast<Index>(labels.size()) != scores.size())
        throw DimensionError("metrics: " + std::to_string(labels.size()) + " labels vs " +
                             std::to_string(scores.size()) + " scores");
    if (labels.empty()) throw DataError("metrics need at least one sample");
    for (int v : labels)
        if (v != 0 && v != 1) throw DataError("metric labels must be 0 or 1");

    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = scores[static_cast<Index>(i)] >= threshold;
        if (pred && labels[i] == 1) ++tp;
        if (pred && labels[i] == 0) ++fp;
        if (!pred && labels[i] == 1) ++fn;
    }
    ClassificationMetrics m;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;

    const long n = static_cast<long>(labels.size());
    const long n_pos = std::count(labels.begin(), labels.end(), 1);
    const long n_neg = n - n_pos;
    if (n_pos > 0 && n_neg > 0) {
        // rank-sum with midranks for ties
        std::vector<int> order(labels.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return scores[a] < scores[b];
        });
        std::vector<double> rank(labels.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() &&
                   scores[order[j + 1]] == scores[order[i]])
                ++j;
            const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t t = i; t <= j; ++t)
                rank[static_cast<std::size_t>(order[t])] = mid;
            i = j + 1;
        }
        double pos_rank_sum = 0.0;
        for (std::size_t t = 0; t < labels.size(); ++t)
            if (labels[t] == 1) pos_rank_sum += rank[t];
        m.auc = (pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                    static_cast<double>(n_pos + 1)) /
                (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    }
    return m;
}

double annualized_return(const std::vector<double>& closes, const std::vector<int>& decisions) {
    if (closes.size() != decisions.size() + 1)
        throw DimensionError("need one more close than decisions, got " +
                             std::to_string(closes.size()) + " closes for " +
                             std::to_string(decisions.size()) + " decisions");
    if (decisions.empty()) throw DimensionError("need at least one decision");
    for (double c : closes)
        if (!(c > 0.0)) throw DataError("closes must be strictly positive");
    for (int d : decisions)
        if (d != 0 && d != 1) throw DataError("decisions must be 0 or 1");

    double growth = 1.0;
    for (std::size_t t = 0; t < decisions.size(); ++t)
        if (decisions[t] == 1) growth *= closes[t + 1] / closes[t];
    const double years = static_cast<double>(decisions.size()) / 252.0;
    return (std::pow(growth, 1.0 / years) - 1.0) * 100.0;
}

namespace {

std::string mae_key(const EvalReport& report, Index j) {
    if (report.mae.size() == kNumChannels)
        return "mae_" + std::string(kChannelNames[static_cast<std::size_t>(j)]);
    return "mae_" + std::to_string(j);
}

}  // namespace

void write_report_txt(const EvalReport& report, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& extras) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    for (const auto& [key, value] : extras)
        std::fprintf(f, "%s %s\n", key.c_str(), value.c_str());
    for (Index j = 0; j < report.mae.size(); ++j)
        std::fprintf(f, "%s %.17g\n", mae_key(report, j).c_str(), report.mae[j]);
    if (report.has_trading) {
        std::fprintf(f, "precision %.17g\n", report.precision);
        std::fprintf(f, "recall %.17g\n", report.recall);
        std::fprintf(f, "f1 %.17g\n", report.f1);
        if (report.auc)
            std::fprintf(f, "auc %.17g\n", *report.auc);
        else
            std::fprintf(f, "auc nan\n");
        std::fprintf(f, "ar_predicted %.17g\n", report.ar_predicted);
        std::fprintf(f, "ar_actual %.17g\n", report.ar_actual);
        std::fprintf(f, "ar_relative_diff %.17g\n", report.ar_relative_diff);
    }
    if (std::fclose(f) != 0) throw DataError("write failed for " + path);
}

void write_report_json(const EvalReport& report, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& extras) {
    nlohmann::ordered_json j;
    for (const auto& [key, value] : extras) j[key] = value;
    for (Index i = 0; i < report.mae.size(); ++i) j[mae_key(report, i)] = report.mae[i];
    if (report.has_trading) {
        j["precision"] = report.precision;
        j["recall"] = report.recall;
        j["f1"] = report.f1;
        if (report.auc)
            j["auc"] = *report.auc;
        else
            j["auc"] = nullptr;
        j["ar_predicted"] = report.ar_predicted;
        j["ar_actual"] = report.ar_actual;
        j["ar_relative_diff"] = report.ar_relative_diff;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed for " + path);
}

}  // namespace confuse
