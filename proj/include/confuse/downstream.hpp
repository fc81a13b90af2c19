#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "confuse/linalg.hpp"

namespace confuse {

// Multi-output ridge regression, one linear head per target column, fit in
// closed form on mean-centered data. The penalty does not touch the
// intercepts; alpha must be strictly positive so the normal equations are
// always solvable.
struct RidgeModel {
    Matrix weights;     // features x targets
    Vector intercepts;  // per target
    double alpha = 1.0;
};

RidgeModel ridge_fit(const Matrix& x, const Matrix& y, double alpha);
Matrix ridge_predict(const RidgeModel& model, const Matrix& x);

// Column-wise mean absolute error; both arguments samples x targets.
Vector mean_absolute_error(const Matrix& predicted, const Matrix& actual);

struct ForestConfig {
    int num_trees = 100;
    int max_depth = 12;
    int min_leaf = 2;
    int features_per_split = 0;  // 0 selects ceil(sqrt(num features))
    std::uint64_t seed = 0;
};

// Flat node pool; leaves carry the class-probability pair of their bootstrap
// rows (summing to 1), splits send x[feature] < threshold left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double prob_sell = 0.0;
    double prob_buy = 0.0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // node 0 is the root
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    ForestConfig config;
};

// Bagged Gini trees on binary labels; probability output is the mean of the
// per-tree leaf fractions. Tree t draws its bootstrap and split candidates
// from a generator seeded by (config.seed, t), so trees are independent of
// evaluation order. Throws DataError on fewer than two samples or a
// single-class label set.
ForestModel forest_fit(const Matrix& x, const std::vector<int>& labels,
                       const ForestConfig& config);
Vector forest_predict_proba(const ForestModel& model, const Matrix& x);

struct ClassificationMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;  // unset when only one class is present
};

// BUY is the positive class; predict it when the probability is at or above
// the threshold. Degenerate denominators yield 0. AUC uses midranks, so tied
// scores contribute half a win.
ClassificationMetrics classification_metrics(const Vector& probs, const std::vector<int>& labels,
                                             double threshold = 0.5);

// Compound growth of the buy-and-hold-next-day strategy, annualized over 252
// trading days and reported in percent. decisions[t] = 1 takes the t -> t+1
// move; closes must be one longer than decisions and strictly positive.
double annualized_return(const std::vector<double>& closes, const std::vector<int>& decisions);

// One evaluation record. mae is empty until a forecasting pass fills it;
// has_trading marks the classification and return fields as meaningful.
struct EvalReport {
    Vector mae;  // per output channel
    bool has_trading = false;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;
    double ar_predicted = 0.0;
    double ar_actual = 0.0;
    double ar_relative_diff = 0.0;
};

// Flat key-value text and JSON renderings of the same record; extras are
// prepended context lines (symbol, sample counts, ...).
void write_report_txt(const EvalReport& report, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& extras = {});
void write_report_json(const EvalReport& report, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& extras = {});

}  // namespace confuse
