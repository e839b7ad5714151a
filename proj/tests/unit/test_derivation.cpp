// SPDX-License-Identifier: Apache-2.0

#include "ddns/derivation.hpp"
#include "ddns/error.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ddns;

namespace {

std::vector<std::pair<double, double>> noisy_pairs(std::size_t n, double noise, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1.0, 30.0);
    std::normal_distribution<double> nd(0.0, noise);
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng);
        out.emplace_back(x, 0.9 * x + 1.0 + nd(rng));
    }
    return out;
}

} // namespace

TEST_SUITE("derivation")
{
    TEST_CASE("five-point posterior equals the dense closed form")
    {
        const std::vector<double> xs{1.0, 2.5, 4.0, 7.0, 9.5}, ys{1.2, 2.0, 4.4, 6.1, 10.3};
        const GpHyperparameters h{2.0, 9.0, 0.25};
        std::vector<GpPoint> pts;
        std::vector<double> diag;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            pts.push_back({xs[i], ys[i], h.noise_variance});
            diag.push_back(h.noise_variance + 1e-8 * h.signal_variance);
        }
        const double prior = 4.8;
        const Gp1d gp(pts, h, prior);
        for (double probe : {-3.0, 0.0, 3.3, 5.5, 8.0, 14.0}) {
            const auto o = oracle::gp_posterior(xs, ys, diag, h.length_scale, h.signal_variance, prior, probe);
            CHECK(gp.mean(probe) == doctest::Approx(o.mean).epsilon(1e-8));
            CHECK(gp.latent_variance(probe) == doctest::Approx(o.latent_var).epsilon(1e-8));
        }
    }

    TEST_CASE("log marginal likelihood matches the textbook formula")
    {
        const std::vector<double> xs{0.0, 1.0, 3.0}, ys{1.0, 2.0, 0.5};
        const GpHyperparameters h{1.5, 2.0, 0.1};
        std::vector<GpPoint> pts;
        for (std::size_t i = 0; i < 3; ++i)
            pts.push_back({xs[i], ys[i], 0.1});
        const Gp1d gp(pts, h, 0.0);
        Eigen::Matrix3d K;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                K(i, j) = 2.0 * std::exp(-(xs[i] - xs[j]) * (xs[i] - xs[j]) / (2 * 1.5 * 1.5)) +
                          (i == j ? 0.1 + 2e-8 : 0.0);
        const Eigen::Vector3d y(1.0, 2.0, 0.5);
        const double ref = -0.5 * y.dot(K.inverse() * y) - 0.5 * std::log(K.determinant()) - 1.5 * std::log(2 * M_PI);
        CHECK(gp.log_marginal_likelihood() == doctest::Approx(ref).epsilon(1e-10));
    }

    TEST_CASE("noiseless identity pairs are interpolated")
    {
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 40; ++i)
            pairs.emplace_back(i * 0.5, i * 0.5);
        KernelConfig cfg;
        cfg.noise_variance = 1e-6;
        const auto m = fit_derivation(pairs, cfg);
        for (double v = 0.0; v <= 20.0; v += 0.37)
            CHECK(std::abs(m.mean(v) - v) < 0.05);
    }

    TEST_CASE("far queries revert to the prior spread")
    {
        const auto m = fit_derivation(noisy_pairs(200, 2.0, 1));
        const auto &h = m.gp().hyper();
        CHECK(m.stddev(1e4) == doctest::Approx(std::sqrt(h.signal_variance + h.noise_variance)).epsilon(1e-9));
        CHECK(m.mean(1e4) == doctest::Approx(m.gp().prior_mean()).epsilon(1e-9));
    }

    TEST_CASE("posterior variance never exceeds the prior variance")
    {
        const auto m = fit_derivation(noisy_pairs(300, 1.0, 2));
        const auto &h = m.gp().hyper();
        for (double v = -20; v < 60; v += 0.5)
            CHECK(m.variance(v) <= h.signal_variance + h.noise_variance + 1e-6);
    }

    TEST_CASE("shifting targets shifts the mean and keeps the spread")
    {
        auto pairs = noisy_pairs(150, 1.5, 3);
        auto shifted = pairs;
        for (auto &p : shifted)
            p.second += 5.0;
        const auto a = fit_derivation(pairs), b = fit_derivation(shifted);
        for (double v : {0.0, 5.0, 12.5, 29.0, 40.0}) {
            CHECK(b.mean(v) - a.mean(v) == doctest::Approx(5.0).epsilon(1e-7));
            CHECK(b.stddev(v) == doctest::Approx(a.stddev(v)).epsilon(1e-9));
        }
    }

    TEST_CASE("clip range comes from the measured labels")
    {
        const auto pairs = noisy_pairs(100, 1.0, 4);
        const auto m = fit_derivation(pairs);
        double lo = 1e9, hi = -1e9;
        for (const auto &[x, y] : pairs) {
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
        CHECK(m.clip_range().lo == lo);
        CHECK(m.clip_range().hi == hi);
    }

    TEST_CASE("binning keeps at most the requested number of points")
    {
        const auto pairs = noisy_pairs(2000, 1.0, 5);
        const auto pts = compress_pairs(pairs, 100, 0.5);
        CHECK(pts.size() <= 100);
        double prev = -1e9;
        for (const auto &p : pts) {
            CHECK(p.x >= prev);
            prev = p.x;
            CHECK(p.noise > 0.0);
        }
        const auto small = compress_pairs(std::span(pairs).first(20), 100, 0.5);
        CHECK(small.size() == 20);
    }

    TEST_CASE("fitting preconditions")
    {
        const auto pairs = noisy_pairs(9, 1.0, 6);
        CHECK_THROWS_AS(fit_derivation(pairs), DataError);
        std::vector<std::pair<double, double>> flat(20, {1.0, 3.0});
        for (std::size_t i = 0; i < flat.size(); ++i)
            flat[i].first = static_cast<double>(i);
        CHECK_THROWS_AS(fit_derivation(flat), DataError);
        auto bad = noisy_pairs(20, 1.0, 7);
        bad[3].second = std::nan("");
        CHECK_THROWS_AS(fit_derivation(bad), DataError);
        CHECK_THROWS_AS(Gp1d({}, {}, 0.0), ModelError);
    }

    TEST_CASE("refinement does not lower the marginal likelihood")
    {
        const auto pairs = noisy_pairs(200, 1.0, 8);
        KernelConfig refine;
        refine.refine = true;
        const auto base = fit_derivation(pairs), tuned = fit_derivation(pairs, refine);
        CHECK(tuned.gp().log_marginal_likelihood() >= base.gp().log_marginal_likelihood() - 1e-9);
    }

    TEST_CASE("clipping cases")
    {
        const ClipRange r{0.1, 40.0};
        CHECK(clip_sample(-0.5, r) == 0.1);
        CHECK(clip_sample(55.0, r) == 40.0);
        CHECK(clip_sample(12.25, r) == 12.25);
        CHECK(clip_sample(0.1, r) == 0.1);
        CHECK(clip_sample(40.0, r) == 40.0);
        for (double a = -5; a < 50; a += 1.3) {
            CHECK(clip_sample(clip_sample(a, r), r) == clip_sample(a, r));
            CHECK(clip_sample(a, r) <= clip_sample(a + 0.7, r));
        }
    }

    TEST_CASE("degenerate spread returns the clamped mean")
    {
        const auto m = DerivationModel::passthrough({1.0, 20.0});
        Rng rng(1);
        CHECK(sample_virtual(m, 25.0, rng).clipped == 20.0);
        CHECK(sample_virtual(m, 0.5, rng).clipped == 1.0);
        CHECK(sample_virtual(m, 7.0, rng).clipped == 7.0);
        CHECK(m.stddev(7.0) == 0.0);
    }

    TEST_CASE("Monte-Carlo draws match the model moments")
    {
        const auto m = fit_derivation(noisy_pairs(400, 2.0, 9));
        const double probe = 15.0, mu = m.mean(probe), sd = m.stddev(probe);
        Rng rng(99);
        const int n = 100000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const auto v = sample_virtual(m, probe, rng);
            CHECK(v.clipped >= m.clip_range().lo);
            CHECK(v.clipped <= m.clip_range().hi);
            s += v.raw_sample;
            s2 += v.raw_sample * v.raw_sample;
        }
        const double em = s / n, ev = (s2 - s * s / n) / (n - 1);
        CHECK(std::abs(em - mu) <= 3.0 * sd / std::sqrt(n));
        // SE of the sample std for a normal is sd / sqrt(2(n-1)).
        CHECK(std::abs(std::sqrt(ev) - sd) <= 3.0 * sd / std::sqrt(2.0 * (n - 1)));
    }

    TEST_CASE("profile synthesis is reproducible")
    {
        std::vector<TransmissionRecord> recs(50);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            recs[i].context.sinr = static_cast<double>(i) / 2.0;
            recs[i].data_rate = 2.0 + static_cast<double>(i) / 3.0;
        }
        const MeanRegressor forest(10.0);
        const auto d = fit_derivation(noisy_pairs(100, 1.0, 10));
        Rng a(3), b(3);
        const auto pa = synthesize_profile(forest, d, recs, a);
        const auto pb = synthesize_profile(forest, d, recs, b);
        REQUIRE(pa.size() == recs.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(pa[i].virtual_measurement.clipped == pb[i].virtual_measurement.clipped);
            CHECK(pa[i].measured == recs[i].data_rate);
            CHECK(pa[i].virtual_measurement.predicted == 10.0);
        }
        const auto pt = DerivationModel::passthrough({3.0, 8.0});
        const auto pp = synthesize_profile(forest, pt, recs, a);
        for (const auto &e : pp)
            CHECK(e.virtual_measurement.clipped == 8.0);
    }
}
