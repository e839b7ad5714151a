// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/trace.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ddns {

/// Supervised training row: features and measured data rate (MBit/s).
struct LabeledRow
{
    FeatureVector x{};
    double y = 0.0;
};

std::vector<LabeledRow> to_rows(std::span<const TransmissionRecord> records);

/// Common prediction surface for the forest and the baselines.
class Regressor
{
public:
    virtual ~Regressor() = default;
    virtual double predict(const FeatureVector &x) const = 0;
    virtual std::string name() const = 0;
};

using Trainer = std::function<std::unique_ptr<Regressor>(std::span<const LabeledRow>, std::uint64_t seed)>;

// Trees -----------------------------------------------------------------------

struct TreeParams
{
    std::size_t max_depth = 20;
    std::size_t min_leaf = 1;
    /// Features examined per split; values >= 9 mean all of them.
    std::size_t max_features = kNumFeatures;
};

class RegressionTree
{
public:
    struct Node
    {
        int feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;  // x[feature] <= threshold
        int right = -1; // x[feature] >  threshold
        double value = 0.0;
        std::size_t count = 0;
        /// Sum-of-squares reduction achieved by this split.
        double impurity_decrease = 0.0;

        bool is_leaf() const { return feature < 0; }
        bool operator==(const Node &) const = default;
    };

    RegressionTree() = default;
    RegressionTree(std::vector<Node> nodes, std::size_t max_depth);

    double predict(const FeatureVector &x) const;
    /// Index of the leaf reached by x.
    std::size_t leaf_index(const FeatureVector &x) const;

    const std::vector<Node> &nodes() const { return nodes_; }
    std::size_t max_depth() const { return max_depth_; }
    std::size_t depth() const;
    std::size_t n_samples() const { return nodes_.empty() ? 0 : nodes_.front().count; }
    std::size_t split_count() const;

    bool operator==(const RegressionTree &) const = default;

private:
    std::vector<Node> nodes_;
    std::size_t max_depth_ = 0;
};

/// Greedy variance-reduction CART tree over all rows (no resampling).
RegressionTree train_tree(std::span<const LabeledRow> data, const TreeParams &params, std::uint64_t seed);

// Forest ----------------------------------------------------------------------

struct ForestParams
{
    std::size_t n_trees = 100;
    std::size_t max_depth = 20;
    std::size_t min_leaf = 1;
    std::size_t max_features = 3;
    bool bootstrap = true;
    /// Worker threads; 0 picks the hardware concurrency.
    std::size_t jobs = 0;
};

struct ForestMetadata
{
    std::string mno;
    Direction direction = Direction::Uplink;
    double y_min = 0.0;
    double y_max = 0.0;
    FeatureVector feature_min{};
    FeatureVector feature_max{};
    std::size_t n_rows = 0;
    std::uint64_t seed = 0;
};

class RegressionForest : public Regressor
{
public:
    RegressionForest() = default;
    RegressionForest(std::vector<RegressionTree> trees, ForestParams params, ForestMetadata meta,
                     std::array<std::string, kNumFeatures> names);

    double predict(const FeatureVector &x) const override;
    /// Checked entry point for externally sized inputs.
    double predict(std::span<const double> x) const;
    std::string name() const override { return "random_forest"; }

    const std::vector<RegressionTree> &trees() const { return trees_; }
    const ForestParams &params() const { return params_; }
    const ForestMetadata &metadata() const { return meta_; }
    ForestMetadata &metadata() { return meta_; }
    const std::array<std::string, kNumFeatures> &feature_names() const { return names_; }

private:
    /// Inference copy of all trees in preorder; the left child follows its parent.
    struct PackedNode
    {
        double value; // threshold for splits, prediction for leaves
        std::int32_t feature;
        std::int32_t right;
    };

    std::vector<RegressionTree> trees_;
    ForestParams params_;
    ForestMetadata meta_;
    std::array<std::string, kNumFeatures> names_;
    std::vector<PackedNode> packed_;
    std::vector<std::int32_t> roots_;
};

/// Bagged ensemble with per-split feature subsets. Rows are put into a
/// canonical order first, so the result does not depend on input order.
RegressionForest train_forest(std::span<const LabeledRow> data, const ForestParams &params, std::uint64_t seed);

Trainer forest_trainer(ForestParams params);

// Evaluation ------------------------------------------------------------------

/// Coefficient of determination 1 - SS_res / SS_tot.
double r_squared(std::span<const double> predictions, std::span<const double> measurements);

struct EvaluationReport
{
    double r_squared = 0.0;
    std::size_t n = 0;
    /// Per-fold R²; empty where a fold is too small or has constant labels.
    std::vector<std::optional<double>> fold_scores;
    /// (prediction, measurement) per input row, in input order.
    std::vector<std::pair<double, double>> residuals;
    std::vector<std::size_t> fold_of;
};

/// Shuffled assignment of `n` rows to `k` near-equal folds.
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed);

EvaluationReport cross_validate(std::span<const LabeledRow> data, std::size_t k, const Trainer &trainer,
                                std::uint64_t seed);

struct Partition
{
    std::string label;
    std::vector<LabeledRow> rows;
};

struct CrossMatrix
{
    std::vector<std::string> labels;
    /// r2[train][test]; the diagonal holds k-fold CV scores.
    std::vector<std::vector<double>> r2;
};

CrossMatrix cross_matrix(std::span<const Partition> partitions, const Trainer &trainer, std::size_t k,
                         std::uint64_t seed);

/// Mean decrease in impurity per feature, normalized to sum 1.
std::array<double, kNumFeatures> mdi_importance(const RegressionForest &forest);

// Baselines -------------------------------------------------------------------

class MeanRegressor : public Regressor
{
public:
    explicit MeanRegressor(double mean) : mean_(mean) {}
    double predict(const FeatureVector &) const override { return mean_; }
    std::string name() const override { return "mean"; }
    double mean() const { return mean_; }

private:
    double mean_;
};

/// Ordinary least squares on standardized features; ridge fallback when the
/// normal equations are singular. Constant features get a zero coefficient.
class OlsRegressor : public Regressor
{
public:
    double predict(const FeatureVector &x) const override;
    std::string name() const override { return "ols"; }

    /// Coefficients in original feature units.
    const FeatureVector &coefficients() const { return coef_; }
    double intercept() const { return intercept_; }
    bool used_ridge() const { return used_ridge_; }

    friend OlsRegressor fit_ols(std::span<const LabeledRow> data);

private:
    FeatureVector coef_{};
    double intercept_ = 0.0;
    bool used_ridge_ = false;
};

MeanRegressor fit_mean(std::span<const LabeledRow> data);
OlsRegressor fit_ols(std::span<const LabeledRow> data);

Trainer mean_trainer();
Trainer ols_trainer();

} // namespace ddns
