// SPDX-License-Identifier: Apache-2.0

#include "ddns/regression.hpp"

#include "ddns/error.hpp"
#include "ddns/random.hpp"
#include "parallel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ddns {

std::vector<LabeledRow> to_rows(std::span<const TransmissionRecord> records)
{
    std::vector<LabeledRow> rows;
    rows.reserve(records.size());
    for (const auto &r : records)
        rows.push_back({r.context.features(), r.data_rate});
    return rows;
}

namespace {

void check_rows(std::span<const LabeledRow> data)
{
    if (data.empty())
        throw DataError("training data is empty");
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data[i].x)
            if (!std::isfinite(v))
                throw DataError("non-finite feature in training row " + std::to_string(i));
        if (!std::isfinite(data[i].y))
            throw DataError("non-finite label in training row " + std::to_string(i));
    }
}

struct Split
{
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

class TreeBuilder
{
public:
    TreeBuilder(std::span<const LabeledRow> data, const TreeParams &params, Rng &rng)
        : data_(data), params_(params), rng_(rng)
    {
        params_.min_leaf = std::max<std::size_t>(1, params_.min_leaf);
    }

    RegressionTree build(std::vector<std::size_t> indices)
    {
        idx_ = std::move(indices);
        scratch_.resize(idx_.size());
        nodes_.clear();
        grow(0, idx_.size(), 0);
        return RegressionTree(std::move(nodes_), params_.max_depth);
    }

private:
    int grow(std::size_t begin, std::size_t end, std::size_t depth)
    {
        const std::size_t n = end - begin;
        double sum = 0.0;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = begin; i < end; ++i) {
            const double y = data_[idx_[i]].y;
            sum += y;
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
        const double mean = sum / static_cast<double>(n);

        const int id = static_cast<int>(nodes_.size());
        RegressionTree::Node leaf;
        leaf.value = mean;
        leaf.count = n;
        nodes_.push_back(leaf);

        if (depth >= params_.max_depth || n < 2 * params_.min_leaf || lo == hi)
            return id;
        const auto split = best_split(begin, end, mean);
        if (!split)
            return id;

        const auto f = split->feature;
        const double thr = split->threshold;
        auto mid = std::stable_partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                                         idx_.begin() + static_cast<std::ptrdiff_t>(end),
                                         [&](std::size_t r) { return data_[r].x[f] <= thr; });
        const auto m = static_cast<std::size_t>(mid - idx_.begin());

        const int left = grow(begin, m, depth + 1);
        const int right = grow(m, end, depth + 1);
        auto &node = nodes_[static_cast<std::size_t>(id)];
        node.feature = static_cast<int>(f);
        node.threshold = thr;
        node.left = left;
        node.right = right;
        node.impurity_decrease = split->gain;
        return id;
    }

    bool is_constant(std::size_t f, std::size_t begin, std::size_t end) const
    {
        const double first = data_[idx_[begin]].x[f];
        for (std::size_t i = begin + 1; i < end; ++i)
            if (data_[idx_[i]].x[f] != first)
                return false;
        return true;
    }

    std::vector<std::size_t> candidate_features(std::size_t begin, std::size_t end)
    {
        std::vector<std::size_t> out;
        if (params_.max_features >= kNumFeatures) {
            out.resize(kNumFeatures);
            std::iota(out.begin(), out.end(), 0);
            return out;
        }
        // Draw features without replacement until enough non-constant ones are found.
        std::array<std::size_t, kNumFeatures> order;
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t k = 0; k < kNumFeatures && out.size() < params_.max_features; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, kNumFeatures - 1);
            std::swap(order[k], order[pick(rng_)]);
            if (!is_constant(order[k], begin, end))
                out.push_back(order[k]);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::optional<Split> best_split(std::size_t begin, std::size_t end, double mean)
    {
        const std::size_t n = end - begin;
        const double nd = static_cast<double>(n);
        double total = 0.0, sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const double c = data_[idx_[i]].y - mean;
            total += c;
            sse += c * c;
        }
        const double tol = 1e-12 * sse;
        const double base = total * total / nd;

        std::optional<Split> best;
        double best_gain = 0.0;
        for (const auto f : candidate_features(begin, end)) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto &row = data_[idx_[begin + i]];
                scratch_[i] = {row.x[f], row.y - mean};
            }
            std::sort(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(n),
                      [](const auto &a, const auto &b) { return a.first < b.first; });

            double left_sum = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left_sum += scratch_[i].second;
                if (scratch_[i].first == scratch_[i + 1].first)
                    continue;
                const std::size_t nl = i + 1, nr = n - nl;
                if (nl < params_.min_leaf || nr < params_.min_leaf)
                    continue;
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(nl) +
                                    right_sum * right_sum / static_cast<double>(nr) - base;
                if (gain > best_gain + tol) {
                    const double a = scratch_[i].first, b = scratch_[i + 1].first;
                    double thr = a + (b - a) / 2.0;
                    if (!(thr < b))
                        thr = a;
                    best = Split{f, thr, gain};
                    best_gain = gain;
                }
            }
        }
        return best;
    }

    std::span<const LabeledRow> data_;
    TreeParams params_;
    Rng &rng_;
    std::vector<std::size_t> idx_;
    std::vector<std::pair<double, double>> scratch_;
    std::vector<RegressionTree::Node> nodes_;
};

} // namespace

// RegressionTree --------------------------------------------------------------

RegressionTree::RegressionTree(std::vector<Node> nodes, std::size_t max_depth)
    : nodes_(std::move(nodes)), max_depth_(max_depth)
{
    if (nodes_.empty())
        throw ModelError("tree without nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto &nd = nodes_[i];
        if (nd.is_leaf())
            continue;
        const auto sz = static_cast<int>(nodes_.size());
        if (nd.feature >= static_cast<int>(kNumFeatures) || nd.left <= static_cast<int>(i) ||
            nd.right <= static_cast<int>(i) || nd.left >= sz || nd.right >= sz)
            throw ModelError("malformed tree node " + std::to_string(i));
    }
}

std::size_t RegressionTree::leaf_index(const FeatureVector &x) const
{
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
        const auto &nd = nodes_[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return i;
}

double RegressionTree::predict(const FeatureVector &x) const { return nodes_[leaf_index(x)].value; }

std::size_t RegressionTree::depth() const
{
    std::vector<std::size_t> d(nodes_.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes_[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
        }
    }
    return best;
}

std::size_t RegressionTree::split_count() const
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node &n) { return !n.is_leaf(); }));
}

RegressionTree train_tree(std::span<const LabeledRow> data, const TreeParams &params, std::uint64_t seed)
{
    check_rows(data);
    Rng rng(mix_seed({seed}));
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    return TreeBuilder(data, params, rng).build(std::move(idx));
}

// RegressionForest ------------------------------------------------------------

RegressionForest::RegressionForest(std::vector<RegressionTree> trees, ForestParams params, ForestMetadata meta,
                                   std::array<std::string, kNumFeatures> names)
    : trees_(std::move(trees)), params_(params), meta_(std::move(meta)), names_(std::move(names))
{
    if (trees_.empty())
        throw ModelError("forest without trees");
    for (const auto &tree : trees_) {
        const auto &nodes = tree.nodes();
        roots_.push_back(static_cast<std::int32_t>(packed_.size()));
        // Explicit stack: visit a node, then its left subtree, then its right one.
        std::vector<std::pair<int, std::int32_t>> stack{{0, -1}}; // (tree node, packed parent awaiting right)
        while (!stack.empty()) {
            const auto [i, parent] = stack.back();
            stack.pop_back();
            if (parent >= 0)
                packed_[static_cast<std::size_t>(parent)].right = static_cast<std::int32_t>(packed_.size());
            const auto &nd = nodes[static_cast<std::size_t>(i)];
            const auto self = static_cast<std::int32_t>(packed_.size());
            packed_.push_back({nd.is_leaf() ? nd.value : nd.threshold, nd.feature, -1});
            if (!nd.is_leaf()) {
                stack.emplace_back(nd.right, self);
                stack.emplace_back(nd.left, -1);
            }
        }
    }
}

double RegressionForest::predict(const FeatureVector &x) const
{
    // Several trees are walked in lockstep so their cache misses overlap.
    // Leaf values are still summed in tree order.
    constexpr std::size_t kLanes = 8;
    const PackedNode *base = packed_.data();
    double sum = 0.0;
    for (std::size_t t0 = 0; t0 < roots_.size(); t0 += kLanes) {
        const std::size_t lanes = std::min(kLanes, roots_.size() - t0);
        const PackedNode *n[kLanes];
        for (std::size_t l = 0; l < lanes; ++l)
            n[l] = base + roots_[t0 + l];
        bool active = true;
        while (active) {
            active = false;
            for (std::size_t l = 0; l < lanes; ++l) {
                const PackedNode *c = n[l];
                if (c->feature >= 0) {
                    n[l] = x[static_cast<std::size_t>(c->feature)] <= c->value ? c + 1 : base + c->right;
                    active = true;
                }
            }
        }
        for (std::size_t l = 0; l < lanes; ++l)
            sum += n[l]->value;
    }
    return sum / static_cast<double>(roots_.size());
}

double RegressionForest::predict(std::span<const double> x) const
{
    if (x.size() != kNumFeatures)
        throw ModelError("feature dimension mismatch: expected " + std::to_string(kNumFeatures) + ", got " +
                         std::to_string(x.size()));
    FeatureVector v;
    std::copy(x.begin(), x.end(), v.begin());
    return predict(v);
}

RegressionForest train_forest(std::span<const LabeledRow> data, const ForestParams &params, std::uint64_t seed)
{
    if (params.n_trees == 0)
        throw ConfigError("forest needs n_trees > 0");
    check_rows(data);

    std::vector<LabeledRow> rows(data.begin(), data.end());
    std::sort(rows.begin(), rows.end(), [](const LabeledRow &a, const LabeledRow &b) {
        if (a.x != b.x)
            return a.x < b.x;
        return a.y < b.y;
    });

    ForestMetadata meta;
    meta.n_rows = rows.size();
    meta.seed = seed;
    meta.y_min = meta.y_max = rows.front().y;
    meta.feature_min = meta.feature_max = rows.front().x;
    for (const auto &r : rows) {
        meta.y_min = std::min(meta.y_min, r.y);
        meta.y_max = std::max(meta.y_max, r.y);
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            meta.feature_min[f] = std::min(meta.feature_min[f], r.x[f]);
            meta.feature_max[f] = std::max(meta.feature_max[f], r.x[f]);
        }
    }

    const TreeParams tp{params.max_depth, params.min_leaf, params.max_features};
    std::vector<RegressionTree> trees(params.n_trees);
    detail::parallel_for(params.n_trees, params.jobs, [&](std::size_t t) {
        Rng rng(mix_seed({seed, 0x7265ULL, t}));
        std::vector<std::size_t> idx(rows.size());
        if (params.bootstrap) {
            std::uniform_int_distribution<std::size_t> draw(0, rows.size() - 1);
            for (auto &i : idx)
                i = draw(rng);
        } else {
            std::iota(idx.begin(), idx.end(), 0);
        }
        trees[t] = TreeBuilder(rows, tp, rng).build(std::move(idx));
    });

    return RegressionForest(std::move(trees), params, std::move(meta), feature_names());
}

Trainer forest_trainer(ForestParams params)
{
    return [params](std::span<const LabeledRow> rows, std::uint64_t seed) -> std::unique_ptr<Regressor> {
        return std::make_unique<RegressionForest>(train_forest(rows, params, seed));
    };
}

// Evaluation ------------------------------------------------------------------

double r_squared(std::span<const double> predictions, std::span<const double> measurements)
{
    if (predictions.size() != measurements.size())
        throw DataError("R² needs equally many predictions and measurements");
    if (measurements.size() < 2)
        throw DataError("R² needs at least two measurements");
    double mean = 0.0;
    for (double y : measurements)
        mean += y;
    mean /= static_cast<double>(measurements.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < measurements.size(); ++i) {
        ss_res += (predictions[i] - measurements[i]) * (predictions[i] - measurements[i]);
        ss_tot += (mean - measurements[i]) * (mean - measurements[i]);
    }
    if (ss_tot == 0.0)
        throw DataError("R² undefined: measurements have zero variance");
    return 1.0 - ss_res / ss_tot;
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed)
{
    if (k < 2)
        throw ConfigError("cross-validation needs k >= 2");
    if (k > n)
        throw DataError("cross-validation with k = " + std::to_string(k) + " folds on " + std::to_string(n) + " rows");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed({seed, 0xf01dULL}));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> fold(n);
    for (std::size_t p = 0; p < n; ++p)
        fold[perm[p]] = p % k;
    return fold;
}

EvaluationReport cross_validate(std::span<const LabeledRow> data, std::size_t k, const Trainer &trainer,
                                std::uint64_t seed)
{
    EvaluationReport report;
    report.fold_of = fold_assignment(data.size(), k, seed);
    report.n = data.size();
    report.residuals.resize(data.size());
    report.fold_scores.resize(k);

    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<LabeledRow> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (report.fold_of[i] == fold)
                test.push_back(i);
            else
                train.push_back(data[i]);
        }
        const auto model = trainer(train, mix_seed({seed, fold + 1}));
        std::vector<double> pred, meas;
        for (auto i : test) {
            const double p = model->predict(data[i].x);
            report.residuals[i] = {p, data[i].y};
            pred.push_back(p);
            meas.push_back(data[i].y);
        }
        try {
            report.fold_scores[fold] = r_squared(pred, meas);
        } catch (const DataError &) {
            report.fold_scores[fold] = std::nullopt;
        }
    }

    std::vector<double> pred(data.size()), meas(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        std::tie(pred[i], meas[i]) = report.residuals[i];
    report.r_squared = r_squared(pred, meas);
    return report;
}

CrossMatrix cross_matrix(std::span<const Partition> partitions, const Trainer &trainer, std::size_t k,
                         std::uint64_t seed)
{
    if (partitions.size() < 2)
        throw DataError("cross matrix needs at least two partitions");
    for (const auto &p : partitions)
        if (p.rows.size() < std::max<std::size_t>(k, 2))
            throw DataError("partition '" + p.label + "' has too few rows for " + std::to_string(k) + "-fold CV");

    const std::size_t m = partitions.size();
    CrossMatrix out;
    out.r2.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        out.labels.push_back(partitions[i].label);
        out.r2[i][i] = cross_validate(partitions[i].rows, k, trainer, mix_seed({seed, i})).r_squared;
        const auto model = trainer(partitions[i].rows, mix_seed({seed, i}));
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i)
                continue;
            std::vector<double> pred, meas;
            for (const auto &row : partitions[j].rows) {
                pred.push_back(model->predict(row.x));
                meas.push_back(row.y);
            }
            out.r2[i][j] = r_squared(pred, meas);
        }
    }
    return out;
}

std::array<double, kNumFeatures> mdi_importance(const RegressionForest &forest)
{
    std::array<double, kNumFeatures> w{};
    bool any_split = false;
    for (const auto &tree : forest.trees()) {
        const double n = static_cast<double>(tree.n_samples());
        for (const auto &node : tree.nodes()) {
            if (node.is_leaf())
                continue;
            any_split = true;
            w[static_cast<std::size_t>(node.feature)] += node.impurity_decrease / n;
        }
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!any_split || !(total > 0.0))
        throw ModelError("feature importance undefined: forest has no splits");
    for (auto &v : w)
        v /= total;
    return w;
}

// Baselines -------------------------------------------------------------------

MeanRegressor fit_mean(std::span<const LabeledRow> data)
{
    check_rows(data);
    double s = 0.0;
    for (const auto &r : data)
        s += r.y;
    return MeanRegressor(s / static_cast<double>(data.size()));
}

OlsRegressor fit_ols(std::span<const LabeledRow> data)
{
    check_rows(data);
    const auto n = static_cast<Eigen::Index>(data.size());
    const double nd = static_cast<double>(data.size());

    FeatureVector mu{}, sigma{};
    double y_mean = 0.0;
    for (const auto &r : data) {
        y_mean += r.y;
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            mu[f] += r.x[f];
    }
    y_mean /= nd;
    for (auto &m : mu)
        m /= nd;
    for (const auto &r : data)
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            sigma[f] += (r.x[f] - mu[f]) * (r.x[f] - mu[f]);

    std::vector<std::size_t> active;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        sigma[f] = std::sqrt(sigma[f] / nd);
        if (sigma[f] > 1e-12 * std::max(1.0, std::abs(mu[f])))
            active.push_back(f);
    }

    OlsRegressor model;
    model.intercept_ = y_mean;
    if (active.empty())
        return model;

    const auto p = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd z(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto &r = data[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto f = active[static_cast<std::size_t>(j)];
            z(i, j) = (r.x[f] - mu[f]) / sigma[f];
        }
        y(i) = r.y - y_mean;
    }
    Eigen::MatrixXd gram = z.transpose() * z;
    const Eigen::VectorXd rhs = z.transpose() * y;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    qr.setThreshold(1e-10);
    Eigen::VectorXd beta;
    if (qr.rank() == p) {
        beta = qr.solve(rhs);
    } else {
        const double lambda = 1e-8 * gram.trace() / static_cast<double>(p) + 1e-12;
        gram.diagonal().array() += lambda;
        beta = gram.ldlt().solve(rhs);
        model.used_ridge_ = true;
    }

    for (Eigen::Index j = 0; j < p; ++j) {
        const auto f = active[static_cast<std::size_t>(j)];
        model.coef_[f] = beta(j) / sigma[f];
        model.intercept_ -= model.coef_[f] * mu[f];
    }
    return model;
}

double OlsRegressor::predict(const FeatureVector &x) const
{
    double v = intercept_;
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        v += coef_[f] * x[f];
    return v;
}

Trainer mean_trainer()
{
    return [](std::span<const LabeledRow> rows, std::uint64_t) -> std::unique_ptr<Regressor> {
        return std::make_unique<MeanRegressor>(fit_mean(rows));
    };
}

Trainer ols_trainer()
{
    return [](std::span<const LabeledRow> rows, std::uint64_t) -> std::unique_ptr<Regressor> {
        return std::make_unique<OlsRegressor>(fit_ols(rows));
    };
}

} // namespace ddns
