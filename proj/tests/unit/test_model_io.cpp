// SPDX-License-Identifier: Apache-2.0

#include "ddns/error.hpp"
#include "ddns/model_io.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace ddns;

namespace {

ModelBundle trained_bundle()
{
    SyntheticConfig sc;
    sc.n_samples = 400;
    sc.noise_std = 2.0;
    const auto data = generate_synthetic_scenario(sc, 5);
    const auto rows = to_rows(data.records);
    ForestParams p;
    p.n_trees = 15;
    p.jobs = 1;
    auto f = train_forest(rows, p, 8);
    f.metadata().mno = "A";
    const auto cv = cross_validate(rows, 5, forest_trainer(p), 8);
    ModelBundle b{std::move(f), fit_derivation(cv.residuals), TrainingSummary{5, cv.r_squared, {}}};
    b.summary->mdi = mdi_importance(b.forest);
    return b;
}

} // namespace

TEST_SUITE("model_io")
{
    TEST_CASE("model round trip reproduces predictions bit-exactly")
    {
        const auto b = trained_bundle();
        const auto text = serialize_model(b);
        const auto back = parse_model(text);
        CHECK(back.forest.trees() == b.forest.trees());
        CHECK(back.forest.metadata().y_max == b.forest.metadata().y_max);
        CHECK(back.forest.metadata().feature_min == b.forest.metadata().feature_min);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-100, 100);
        for (int i = 0; i < 200; ++i) {
            FeatureVector x;
            for (auto &v : x)
                v = u(rng);
            CHECK(back.forest.predict(x) == b.forest.predict(x));
        }
        for (double v = -5; v < 50; v += 0.7) {
            CHECK(back.derivation.mean(v) == b.derivation.mean(v));
            CHECK(back.derivation.stddev(v) == b.derivation.stddev(v));
        }
        CHECK(back.derivation.clip_range() == b.derivation.clip_range());
        REQUIRE(back.summary);
        CHECK(back.summary->mdi == b.summary->mdi);
        CHECK(serialize_model(back) == text);
    }

    TEST_CASE("passthrough derivation survives the round trip")
    {
        auto b = trained_bundle();
        b.derivation = DerivationModel::passthrough({1.0, 2.0});
        b.summary.reset();
        const auto back = parse_model(serialize_model(b));
        CHECK(back.derivation.is_passthrough());
        CHECK(back.derivation.clip_range() == ClipRange{1.0, 2.0});
        CHECK_FALSE(back.summary);
    }

    TEST_CASE("bad documents are model errors")
    {
        CHECK_THROWS_AS(parse_model("{not json"), ModelError);
        CHECK_THROWS_AS(parse_model(R"({"format":"ddns-map","version":1})"), ModelError);
        CHECK_THROWS_AS(parse_model(R"({"format":"ddns-model","version":99})"), ModelError);
        CHECK_THROWS_AS(parse_model(R"({"format":"ddns-model","version":1})"), ModelError);
        auto text = serialize_model(trained_bundle());
        text.replace(text.find("\"n_trees\":15"), 12, "\"n_trees\":16");
        CHECK_THROWS_AS(parse_model(text), ModelError);
    }

    TEST_CASE("map round trip")
    {
        const auto b = trained_bundle();
        ConnectivityMap m(25.0);
        m.set_origin({51.5, 7.4});
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(-300, 300);
        for (int i = 0; i < 300; ++i) {
            FeatureVector x;
            for (auto &v : x)
                v = u(rng) / 10.0;
            m.insert({u(rng), u(rng)}, x);
        }
        m.build_prediction_layer(b.forest, 2.0);
        m.freeze();
        const auto text = serialize_map(m);
        const auto back = parse_map(text);
        CHECK(back == m);
        CHECK(back.frozen());
        CHECK(serialize_map(back) == text);
    }

    TEST_CASE("file helpers")
    {
        oracle::TempDir dir("io");
        const auto b = trained_bundle();
        save_model(b, dir / "nested/model.json");
        CHECK(load_model(dir / "nested/model.json").forest.trees() == b.forest.trees());
        CHECK_THROWS_AS(load_model(dir / "none.json"), DataError);
    }
}
