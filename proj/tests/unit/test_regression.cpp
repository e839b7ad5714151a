// SPDX-License-Identifier: Apache-2.0

#include "ddns/error.hpp"
#include "ddns/regression.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

using namespace ddns;

namespace {

LabeledRow make_row(double sinr, double y)
{
    LabeledRow r;
    r.x[kSinr] = sinr;
    r.y = y;
    return r;
}

std::vector<LabeledRow> random_rows(std::size_t n, std::uint64_t seed, double (*target)(const FeatureVector &))
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<LabeledRow> rows(n);
    for (auto &r : rows) {
        for (auto &v : r.x)
            v = nd(rng);
        r.y = target(r.x);
    }
    return rows;
}

double sinr_step(const FeatureVector &x) { return x[kSinr] > 0.3 ? 25.0 : 5.0; }

std::vector<FeatureVector> probes(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<FeatureVector> out(n);
    for (auto &p : out)
        for (auto &v : p)
            v = nd(rng);
    return out;
}

ForestParams small_forest(std::size_t n_trees = 20)
{
    ForestParams p;
    p.n_trees = n_trees;
    p.jobs = 1;
    return p;
}

} // namespace

TEST_SUITE("regression")
{
    TEST_CASE("single row gives a single leaf")
    {
        const std::vector<LabeledRow> rows{make_row(3.0, 5.0)};
        const auto t = train_tree(rows, {}, 0);
        REQUIRE(t.nodes().size() == 1);
        CHECK(t.nodes()[0].is_leaf());
        CHECK(t.predict(FeatureVector{}) == 5.0);
    }

    TEST_CASE("constant targets give a single leaf")
    {
        auto rows = random_rows(50, 1, [](const FeatureVector &) { return 3.2; });
        const auto t = train_tree(rows, {}, 0);
        CHECK(t.nodes().size() == 1);
        CHECK(t.predict(rows[7].x) == doctest::Approx(3.2).epsilon(1e-15));
    }

    TEST_CASE("four-point depth-one example")
    {
        const std::vector<LabeledRow> rows{make_row(0, 1), make_row(1, 1), make_row(10, 9), make_row(11, 9)};
        TreeParams p;
        p.max_depth = 1;
        const auto t = train_tree(rows, p, 0);
        REQUIRE(t.nodes().size() == 3);
        const auto &root = t.nodes()[0];
        CHECK(root.feature == kSinr);
        CHECK(root.threshold > 1.0);
        CHECK(root.threshold < 10.0);
        CHECK(t.nodes()[root.left].value == 1.0);
        CHECK(t.nodes()[root.right].value == 9.0);
    }

    TEST_CASE("depth-one trees match the exhaustive split on random instances")
    {
        std::mt19937_64 rng(77);
        TreeParams p;
        p.max_depth = 1;
        for (int inst = 0; inst < 50; ++inst) {
            const std::size_t n = 2 + rng() % 63;
            std::vector<LabeledRow> rows(n);
            std::uniform_int_distribution<int> small(0, 6);
            std::normal_distribution<double> nd(0.0, 3.0);
            for (auto &r : rows) {
                for (auto &v : r.x)
                    v = small(rng); // heavy ties
                r.y = nd(rng);
            }
            const auto t = train_tree(rows, p, inst);
            const auto o = oracle::best_split(rows);
            if (o.feature < 0) {
                CHECK(t.nodes().size() == 1);
                continue;
            }
            REQUIRE(t.nodes().size() == 3);
            const auto &root = t.nodes()[0];
            double sse = 0;
            for (const auto &r : rows) {
                const double m = t.predict(r.x);
                sse += (r.y - m) * (r.y - m);
            }
            CHECK(sse == doctest::Approx(o.sse).epsilon(1e-9));
            CHECK(root.feature == o.feature);
            CHECK(root.threshold >= o.lo);
            CHECK(root.threshold < o.hi);
        }
    }

    TEST_CASE("leaf values are the mean of routed targets and depth is bounded")
    {
        auto rows = random_rows(400, 3, [](const FeatureVector &x) { return x[0] * 2 + std::sin(x[3]); });
        TreeParams p;
        p.max_depth = 5;
        const auto t = train_tree(rows, p, 0);
        CHECK(t.depth() <= 5);
        std::map<std::size_t, std::pair<double, std::size_t>> acc;
        for (const auto &r : rows) {
            auto &[s, n] = acc[t.leaf_index(r.x)];
            s += r.y;
            ++n;
        }
        for (const auto &[leaf, sn] : acc) {
            CHECK(t.nodes()[leaf].count == sn.second);
            CHECK(t.nodes()[leaf].value == doctest::Approx(sn.first / sn.second).epsilon(1e-12));
        }
    }

    TEST_CASE("malformed trees are rejected")
    {
        std::vector<RegressionTree::Node> nodes(1);
        nodes[0].feature = 3;
        nodes[0].left = 5;
        nodes[0].right = 6;
        CHECK_THROWS_AS(RegressionTree(nodes, 20), ModelError);
    }

    TEST_CASE("forest on one row predicts that label everywhere")
    {
        const std::vector<LabeledRow> rows{make_row(4.0, 7.5)};
        const auto f = train_forest(rows, small_forest(1), 3);
        for (const auto &p : probes(10, 1))
            CHECK(f.predict(p) == 7.5);
    }

    TEST_CASE("forest training is deterministic and thread-count independent")
    {
        auto rows = random_rows(300, 5, sinr_step);
        auto p1 = small_forest();
        auto p4 = p1;
        p4.jobs = 4;
        const auto a = train_forest(rows, p1, 42);
        const auto b = train_forest(rows, p1, 42);
        const auto c = train_forest(rows, p4, 42);
        CHECK(a.trees() == b.trees());
        CHECK(a.trees() == c.trees());
        const auto d = train_forest(rows, p1, 43);
        CHECK(a.trees() != d.trees());
    }

    TEST_CASE("forest prediction is the mean of tree predictions")
    {
        auto rows = random_rows(200, 6, [](const FeatureVector &x) { return x[1] + x[4] * x[4]; });
        const auto f = train_forest(rows, small_forest(7), 1);
        for (const auto &x : probes(50, 2)) {
            double s = 0;
            for (const auto &t : f.trees()) {
                std::size_t i = 0;
                while (!t.nodes()[i].is_leaf()) {
                    const auto &n = t.nodes()[i];
                    i = x[n.feature] <= n.threshold ? n.left : n.right;
                }
                s += t.nodes()[i].value;
            }
            CHECK(f.predict(x) == doctest::Approx(s / 7.0).epsilon(1e-12));
        }
    }

    TEST_CASE("step function of sinr fits to training R^2 >= 0.99")
    {
        auto rows = random_rows(500, 8, sinr_step);
        const auto f = train_forest(rows, small_forest(), 2);
        std::vector<double> pred, y;
        for (const auto &r : rows) {
            pred.push_back(f.predict(r.x));
            y.push_back(r.y);
        }
        CHECK(r_squared(pred, y) >= 0.99);
    }

    TEST_CASE("predictions stay inside the training label range")
    {
        auto rows = random_rows(300, 9, [](const FeatureVector &x) { return 10 + 3 * x[0] - x[2]; });
        const auto f = train_forest(rows, small_forest(), 2);
        CHECK(f.metadata().y_min == std::min_element(rows.begin(), rows.end(), [](auto &a, auto &b) { return a.y < b.y; })->y);
        for (const auto &x : probes(200, 3)) {
            const double v = f.predict(x);
            CHECK(v >= f.metadata().y_min);
            CHECK(v <= f.metadata().y_max);
        }
    }

    TEST_CASE("adding a constant to labels shifts predictions by it")
    {
        auto rows = random_rows(250, 10, [](const FeatureVector &x) { return 5 + x[3]; });
        auto shifted = rows;
        for (auto &r : shifted)
            r.y += 4.0;
        const auto a = train_forest(rows, small_forest(), 12);
        const auto b = train_forest(shifted, small_forest(), 12);
        for (const auto &x : probes(100, 4))
            CHECK(b.predict(x) - a.predict(x) == doctest::Approx(4.0).epsilon(1e-9));
    }

    TEST_CASE("row order does not change the forest")
    {
        auto rows = random_rows(200, 11, sinr_step);
        auto perm = rows;
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
        const auto a = train_forest(rows, small_forest(), 5);
        const auto b = train_forest(perm, small_forest(), 5);
        for (const auto &x : probes(100, 5))
            CHECK(a.predict(x) == b.predict(x));
    }

    TEST_CASE("checked prediction rejects wrong dimensions")
    {
        auto rows = random_rows(20, 12, sinr_step);
        const auto f = train_forest(rows, small_forest(2), 1);
        std::vector<double> eight(8, 0.0), nine(9, 0.0);
        CHECK_THROWS_AS(f.predict(std::span<const double>(eight)), ModelError);
        CHECK_NOTHROW(f.predict(std::span<const double>(nine)));
        ForestParams zero = small_forest(0);
        CHECK_THROWS_AS(train_forest(rows, zero, 1), ConfigError);
    }

    TEST_CASE("R^2 examples")
    {
        const std::vector<double> y{1, 2, 3};
        CHECK(r_squared(y, y) == 1.0);
        const std::vector<double> mean_pred{2, 2, 2};
        CHECK(r_squared(mean_pred, y) == 0.0);
        const std::vector<double> p{1, 2, 3}, m{1, 2, 4};
        CHECK(r_squared(p, m) == doctest::Approx(1.0 - 1.0 / (14.0 / 3.0)).epsilon(1e-12));
        const std::vector<double> flat{2, 2, 2};
        CHECK_THROWS_AS(r_squared(p, flat), DataError);
        const std::vector<double> two{1, 2};
        CHECK_THROWS_AS(r_squared(p, two), DataError);
    }

    TEST_CASE("R^2 is invariant under a shared affine transform")
    {
        const std::vector<double> p{1.5, 2.0, 2.9, 4.2, 5.1}, y{1, 2, 3, 4, 5};
        std::vector<double> pa, ya;
        for (std::size_t i = 0; i < p.size(); ++i) {
            pa.push_back(-3.0 * p[i] + 7.0);
            ya.push_back(-3.0 * y[i] + 7.0);
        }
        CHECK(r_squared(pa, ya) == doctest::Approx(r_squared(p, y)).epsilon(1e-12));
    }

    TEST_CASE("fold sizes")
    {
        const auto loo = fold_assignment(5, 5, 1);
        std::vector<int> c5(5);
        for (auto f : loo)
            ++c5[f];
        CHECK(std::all_of(c5.begin(), c5.end(), [](int v) { return v == 1; }));

        const auto f103 = fold_assignment(103, 10, 2);
        std::vector<int> c(10);
        for (auto f : f103)
            ++c[f];
        CHECK(std::count(c.begin(), c.end(), 10) == 7);
        CHECK(std::count(c.begin(), c.end(), 11) == 3);
    }

    TEST_CASE("cross-validation report shape and errors")
    {
        auto rows = random_rows(120, 13, sinr_step);
        const auto rep = cross_validate(rows, 10, forest_trainer(small_forest(10)), 3);
        CHECK(rep.n == 120);
        CHECK(rep.residuals.size() == 120);
        CHECK(rep.fold_scores.size() == 10);
        CHECK(rep.r_squared > 0.9);
        for (std::size_t i = 0; i < rows.size(); ++i)
            CHECK(rep.residuals[i].second == rows[i].y);
        CHECK_THROWS_AS(cross_validate(rows, 1, mean_trainer(), 0), ConfigError);
        CHECK_THROWS_AS(cross_validate(std::span(rows).first(5), 10, mean_trainer(), 0), DataError);
    }

    TEST_CASE("mean predictor has CV R^2 near zero")
    {
        auto rows = random_rows(500, 14, [](const FeatureVector &x) { return x[0] + x[5]; });
        const auto rep = cross_validate(rows, 10, mean_trainer(), 0);
        CHECK(std::abs(rep.r_squared) < 0.05);
    }

    TEST_CASE("OLS recovers exact linear models")
    {
        std::vector<LabeledRow> three;
        for (double v : {1.0, 2.0, 3.0}) {
            LabeledRow r;
            r.x[kSinr] = v;
            r.y = 2.0 * v;
            three.push_back(r);
        }
        const auto ols = fit_ols(three);
        CHECK(ols.coefficients()[kSinr] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(std::abs(ols.intercept()) < 1e-12);

        auto rows = random_rows(200, 15, [](const FeatureVector &x) { return 1 + 2 * x[0] - 0.5 * x[8] + x[4]; });
        const auto rep = cross_validate(rows, 5, ols_trainer(), 0);
        CHECK(rep.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    }

    TEST_CASE("OLS falls back to ridge on collinear features")
    {
        auto rows = random_rows(50, 16, [](const FeatureVector &x) { return x[0]; });
        for (auto &r : rows)
            r.x[1] = 2.0 * r.x[0];
        const auto ols = fit_ols(rows);
        CHECK(ols.used_ridge());
        CHECK(ols.predict(rows[0].x) == doctest::Approx(rows[0].y).epsilon(1e-3));
    }

    TEST_CASE("MDI on a single informative feature")
    {
        auto rows = random_rows(400, 17, [](const FeatureVector &x) { return x[kSinr] > 0 ? 20.0 : 4.0; });
        auto params = small_forest(30);
        params.max_features = kNumFeatures;
        const auto w = mdi_importance(train_forest(rows, params, 1));
        CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(w[kSinr] > 0.999);
        // Subsampled candidates let uninformative features absorb some of the decrease.
        const auto sub = mdi_importance(train_forest(rows, small_forest(30), 1));
        CHECK(std::max_element(sub.begin(), sub.end()) - sub.begin() == kSinr);
    }

    TEST_CASE("MDI shares weight between duplicate features")
    {
        auto rows = random_rows(600, 18, [](const FeatureVector &x) { return 3.0 * x[kSinr]; });
        for (auto &r : rows)
            r.x[kRsrp] = r.x[kSinr];
        const auto f = train_forest(rows, small_forest(100), 2);
        const auto w = mdi_importance(f);
        // Exact ties go to the lower feature index, so the split is not symmetric.
        CHECK(w[kSinr] > 0.2);
        CHECK(w[kRsrp] > 0.2);
        CHECK(w[kSinr] + w[kRsrp] > 0.9);
    }

    TEST_CASE("MDI needs at least one split")
    {
        const std::vector<LabeledRow> rows{make_row(1, 2), make_row(2, 2)};
        const auto f = train_forest(rows, small_forest(3), 1);
        CHECK_THROWS_AS(mdi_importance(f), ModelError);
    }

    TEST_CASE("cross matrix shape and structure")
    {
        auto a = random_rows(200, 19, [](const FeatureVector &x) { return 10 + 5 * x[kSinr]; });
        auto b = random_rows(200, 20, [](const FeatureVector &x) { return 10 - 5 * x[kSinr]; });
        const std::vector<Partition> parts{{"A", a}, {"B", b}};
        const auto m = cross_matrix(parts, forest_trainer(small_forest()), 5, 1);
        REQUIRE(m.r2.size() == 2);
        REQUIRE(m.r2[0].size() == 2);
        CHECK(m.labels == std::vector<std::string>{"A", "B"});
        CHECK(m.r2[0][1] < m.r2[0][0]);
        CHECK(m.r2[1][0] < m.r2[1][1]);

        const std::vector<Partition> dup{{"A", a}, {"A2", a}};
        const auto d = cross_matrix(dup, forest_trainer(small_forest()), 5, 1);
        CHECK(d.r2[0][1] == doctest::Approx(d.r2[1][0]).epsilon(0.02));
        CHECK(d.r2[0][1] >= d.r2[0][0] - 0.05);
    }
}
