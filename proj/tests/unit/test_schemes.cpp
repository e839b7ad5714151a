// SPDX-License-Identifier: Apache-2.0

#include "ddns/error.hpp"
#include "ddns/schemes.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ddns;

TEST_SUITE("schemes")
{
    TEST_CASE("metric normalization")
    {
        CHECK(normalize_metric(0.0, 0.0, 30.0) == 0.0);
        CHECK(normalize_metric(15.0, 0.0, 30.0) == 0.5);
        CHECK(normalize_metric(45.0, 0.0, 30.0) == 1.0);
        CHECK(normalize_metric(-3.0, 0.0, 30.0) == 0.0);
        CHECK(normalize_metric(12.0, 2.0, 22.0) == 0.5);
        CHECK_THROWS_AS(normalize_metric(1.0, 5.0, 5.0), ConfigError);
        // The unclamped value would push the probability above one.
        CHECK(std::pow(1.5, 6.0) > 1.0);
    }

    TEST_CASE("normalization is invariant under common scaling")
    {
        for (double a : {0.5, 2.0, 17.0})
            for (double phi : {-4.0, 3.0, 12.0, 29.0, 40.0})
                CHECK(normalize_metric(a * phi, a * -5.0, a * 30.0) ==
                      doctest::Approx(normalize_metric(phi, -5.0, 30.0)).epsilon(1e-12));
    }

    TEST_CASE("z factor branches")
    {
        CHECK(z_factor(10, 10, 0.3, 2) == 1.0);
        CHECK(z_factor(10, 12, 0.5, 2) == 2.0);
        CHECK(z_factor(10, 6, 0.5, 2) == 0.25);
        CHECK(z_factor(10, 10.2, 0.5, 2) == 1.0);
        CHECK(z_factor(10, 9.8, 0.5, 2) == 1.0);
        CHECK(z_factor(10, 20, 0.5, 0) == 1.0);
        CHECK(z_factor(10, 0, 0.5, 0) == 1.0);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-30, 30), t(0, 1);
        for (int i = 0; i < 1000; ++i) {
            const double a = u(rng), b = u(rng), th = t(rng);
            const double z = z_factor(a, b, th, 2.0);
            CHECK(z > 0.0);
            if (b > a)
                CHECK(z >= 1.0);
            else
                CHECK(z <= 1.0);
        }
    }

    TEST_CASE("transmission probability branches")
    {
        CHECK(tx_probability(0.9, 6, 1, 5, 10, 120) == 0.0);
        CHECK(tx_probability(0.0, 6, 1, 121, 10, 120) == 1.0);
        CHECK(tx_probability(0.5, 6, 1, 60, 10, 120) == 0.015625);
        CHECK(tx_probability(0.5, 6, 1, 120, 10, 120) == 0.015625);
        CHECK(tx_probability(1.3, 6, 1, 60, 10, 120) == 1.0);
        CHECK(tx_probability(0.5, 6, 2, 60, 10, 120) == std::pow(0.5, 12.0));
    }

    TEST_CASE("transmission probability is monotone in theta and in elapsed time")
    {
        for (double z : {0.25, 1.0, 3.0}) {
            double prev = -1.0;
            for (double th = 0.0; th <= 1.0; th += 0.01) {
                const double p = tx_probability(th, 6, z, 50, 10, 120);
                CHECK(p >= prev);
                prev = p;
            }
            prev = -1.0;
            for (double dt = 0; dt < 200; dt += 1.0) {
                const double p = tx_probability(0.6, 6, z, dt, 10, 120);
                CHECK(p >= prev);
                CHECK(p <= 1.0);
                prev = p;
            }
        }
    }

    TEST_CASE("predictive probability equals the plain one without a change ahead")
    {
        SchemeConfig cat, pcat;
        pcat.kind = SchemeKind::PCat;
        SchemeState st;
        st.delta_t = 50;
        MetricSample m{12.0, 12.0, 0.4};
        Rng r1(5), r2(5);
        const auto a = decide(cat, st, m, r1), b = decide(pcat, st, m, r2);
        CHECK(a.probability == b.probability);
        CHECK(a.decision == b.decision);
        pcat.gamma = 0.0;
        m.future = 25.0;
        CHECK(decide(pcat, st, m, r2).probability == a.probability);
    }

    TEST_CASE("decisions")
    {
        SchemeConfig periodic;
        periodic.kind = SchemeKind::Periodic;
        SchemeState st;
        st.delta_t = 10.0;
        Rng rng(1);
        CHECK(decide(periodic, st, {}, rng).decision == Decision::Transmit);
        st.delta_t = 9.0;
        CHECK(decide(periodic, st, {}, rng).decision == Decision::Hold);

        SchemeConfig cat;
        st.delta_t = 50;
        for (int i = 0; i < 1000; ++i)
            CHECK(decide(cat, st, {0.0, std::nullopt, 0.0}, rng).decision == Decision::Hold);

        SchemeConfig ml;
        ml.kind = SchemeKind::MlCat;
        st.delta_t = 121;
        for (int i = 0; i < 1000; ++i)
            CHECK(decide(ml, st, {0.0, std::nullopt, 0.0}, rng).decision == Decision::Transmit);
    }

    TEST_CASE("Bernoulli frequency at theta 0.5")
    {
        SchemeConfig cat;
        SchemeState st;
        st.delta_t = 60;
        Rng rng(2024);
        int tx = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i)
            tx += decide(cat, st, {15.0, std::nullopt, 0.5}, rng).decision == Decision::Transmit;
        const double p = 0.015625, se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(static_cast<double>(tx) / n - p) < 4 * se);
    }

    TEST_CASE("defaults follow the operator table")
    {
        CHECK(default_scheme(SchemeKind::Cat, "B", Direction::Downlink).phi_max == 30.0);
        CHECK(default_scheme(SchemeKind::MlCat, "A", Direction::Uplink).phi_max == 30.0);
        CHECK(default_scheme(SchemeKind::MlCat, "B", Direction::Uplink).phi_max == 20.0);
        CHECK(default_scheme(SchemeKind::MlPCat, "B", Direction::Downlink).phi_max == 50.0);
        CHECK(default_scheme(SchemeKind::MlCat, "C", Direction::Uplink).phi_max == 20.0);
        CHECK(default_scheme(SchemeKind::MlPCat, "C", Direction::Downlink).phi_max == 15.0);
        const auto pc = default_scheme(SchemeKind::PCat, "A", Direction::Uplink);
        CHECK(pc.gamma == 2.0);
        CHECK(default_scheme(SchemeKind::MlPCat, "A", Direction::Uplink).gamma == 0.5);
        CHECK(pc.alpha == 6.0);
        CHECK(pc.t_min == 10.0);
        CHECK(pc.t_max == 120.0);
        CHECK(pc.evaluation_rate == 1.0);
        CHECK_THROWS_AS(default_scheme(SchemeKind::MlCat, "Z", Direction::Uplink), ConfigError);
    }

    TEST_CASE("scheme names and validation")
    {
        CHECK(parse_scheme_kind("ml-pcat") == SchemeKind::MlPCat);
        CHECK(parse_scheme_kind("ML_CAT") == SchemeKind::MlCat);
        CHECK(parse_scheme_kind("Periodic") == SchemeKind::Periodic);
        CHECK_THROWS_AS(parse_scheme_kind("tcp"), ConfigError);
        for (auto k : {SchemeKind::Periodic, SchemeKind::Cat, SchemeKind::PCat, SchemeKind::MlCat, SchemeKind::MlPCat})
            CHECK(parse_scheme_kind(to_string(k)) == k);
        SchemeConfig bad;
        bad.t_min = 200;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = {};
        bad.phi_max = bad.phi_min;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }

    TEST_CASE("metric sources")
    {
        ContextSample ctx;
        ctx.sinr = 12.0;
        SchemeConfig cat;
        const auto m = metric_source(cat, ctx, std::nullopt, 1.0, {});
        CHECK(m.current == 12.0);
        CHECK(m.theta == 0.4);
        CHECK_FALSE(m.future);

        std::vector<LabeledRow> rows(40);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i].x[kPayload] = 0.1 * static_cast<double>(i + 1);
            rows[i].y = 10.0 * rows[i].x[kPayload];
        }
        ForestParams p;
        p.n_trees = 5;
        const auto f = train_forest(rows, p, 1);
        SchemeConfig ml;
        ml.kind = SchemeKind::MlCat;
        FeatureVector x = ctx.features();
        x[kPayload] = 2.0;
        CHECK(metric_source(ml, ctx, std::nullopt, 2.0, {&f, nullptr}).current == f.predict(x));
        x[kPayload] = 4.0; // buffer beyond the trained payload range is clamped
        CHECK(metric_source(ml, ctx, std::nullopt, 9.0, {&f, nullptr}).current == f.predict(x));
        CHECK_THROWS_AS(metric_source(ml, ctx, std::nullopt, 2.0, {}), ModelError);

        SchemeConfig pcat;
        pcat.kind = SchemeKind::PCat;
        ConnectivityMap map(25.0);
        FeatureVector cell{};
        cell[kSinr] = 20.0;
        map.insert({10, 10}, cell);
        const auto ahead = metric_source(pcat, ctx, Vec2{12, 12}, 1.0, {nullptr, &map});
        REQUIRE(ahead.future);
        CHECK(*ahead.future == 20.0);
        const auto empty = metric_source(pcat, ctx, Vec2{500, 500}, 1.0, {nullptr, &map});
        CHECK_FALSE(empty.future);
        SchemeState st;
        st.delta_t = 50;
        Rng rng(1);
        CHECK(decide(pcat, st, empty, rng).z == 1.0);
        CHECK_THROWS_AS(metric_source(pcat, ctx, Vec2{0, 0}, 1.0, {}), ModelError);
    }
}
