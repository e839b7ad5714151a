// SPDX-License-Identifier: Apache-2.0

#include "ddns/derivation.hpp"

#include "ddns/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace ddns {

// Gp1d ------------------------------------------------------------------------

Gp1d::Gp1d(std::vector<GpPoint> points, GpHyperparameters hyper, double prior_mean)
    : points_(std::move(points)), hyper_(hyper), prior_mean_(prior_mean)
{
    if (points_.empty())
        throw ModelError("GP needs at least one training point");
    if (!(hyper_.length_scale > 0.0) || !(hyper_.signal_variance > 0.0) || !(hyper_.noise_variance >= 0.0))
        throw ModelError("GP hyperparameters must be positive");

    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::MatrixXd k(n, n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto &pi = points_[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j <= i; ++j)
            k(i, j) = k(j, i) = kernel(pi.x, points_[static_cast<std::size_t>(j)].x);
        k(i, i) += pi.noise + jitter();
        y(i) = pi.y - prior_mean_;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
        throw ModelError("GP kernel matrix is singular after jitter");
    chol_ = llt.matrixL();
    alpha_ = llt.solve(y);

    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        log_det += std::log(chol_(i, i));
    lml_ = -0.5 * y.dot(alpha_) - log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

double Gp1d::kernel(double a, double b) const
{
    const double d = (a - b) / hyper_.length_scale;
    return hyper_.signal_variance * std::exp(-0.5 * d * d);
}

double Gp1d::mean(double v) const
{
    double m = prior_mean_;
    for (std::size_t i = 0; i < points_.size(); ++i)
        m += kernel(v, points_[i].x) * alpha_(static_cast<Eigen::Index>(i));
    return m;
}

double Gp1d::latent_variance(double v) const
{
    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i)
        ks(i) = kernel(v, points_[static_cast<std::size_t>(i)].x);
    chol_.triangularView<Eigen::Lower>().solveInPlace(ks);
    return std::max(0.0, hyper_.signal_variance - ks.squaredNorm());
}

// DerivationModel -------------------------------------------------------------

double clip_sample(double raw, const ClipRange &range)
{
    if (raw < range.lo)
        return range.lo;
    if (raw > range.hi)
        return range.hi;
    return raw;
}

DerivationModel::DerivationModel(Gp1d gp, ClipRange clip) : gp_(std::move(gp)), clip_(clip)
{
    if (!(clip_.lo < clip_.hi))
        throw ModelError("clip range needs lo < hi");
}

DerivationModel DerivationModel::passthrough(ClipRange clip)
{
    if (!(clip.lo < clip.hi))
        throw ModelError("clip range needs lo < hi");
    DerivationModel m;
    m.clip_ = clip;
    m.passthrough_ = true;
    return m;
}

double DerivationModel::mean(double predicted) const { return passthrough_ ? predicted : gp_.mean(predicted); }

double DerivationModel::variance(double predicted) const
{
    if (passthrough_)
        return 0.0;
    return gp_.latent_variance(predicted) + gp_.hyper().noise_variance;
}

double DerivationModel::stddev(double predicted) const { return std::sqrt(variance(predicted)); }

// Fitting ---------------------------------------------------------------------

std::vector<GpPoint> compress_pairs(std::span<const std::pair<double, double>> pairs, std::size_t max_points,
                                    double noise_variance)
{
    std::vector<std::pair<double, double>> sorted(pairs.begin(), pairs.end());
    std::sort(sorted.begin(), sorted.end());

    std::vector<GpPoint> out;
    if (sorted.size() <= max_points) {
        for (const auto &[x, y] : sorted)
            out.push_back({x, y, noise_variance});
        return out;
    }
    const std::size_t n = sorted.size();
    for (std::size_t b = 0; b < max_points; ++b) {
        const std::size_t begin = b * n / max_points, end = (b + 1) * n / max_points;
        const double c = static_cast<double>(end - begin);
        double sx = 0.0, sy = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            sx += sorted[i].first;
            sy += sorted[i].second;
        }
        const double my = sy / c;
        double var = 0.0;
        for (std::size_t i = begin; i < end; ++i)
            var += (sorted[i].second - my) * (sorted[i].second - my);
        var /= c;
        out.push_back({sx / c, my, std::max(noise_variance, var) / c});
    }
    return out;
}

namespace {

double sample_variance(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

} // namespace

DerivationModel fit_derivation(std::span<const std::pair<double, double>> pairs, const KernelConfig &config)
{
    if (pairs.size() < 10)
        throw DataError("derivation model needs at least 10 (prediction, measurement) pairs");
    if (config.max_inducing == 0)
        throw ConfigError("max_inducing must be > 0");

    std::vector<double> xs, ys, res;
    ClipRange clip{pairs.front().second, pairs.front().second};
    for (const auto &[x, y] : pairs) {
        if (!std::isfinite(x) || !std::isfinite(y))
            throw DataError("non-finite derivation training pair");
        xs.push_back(x);
        ys.push_back(y);
        res.push_back(y - x);
        clip.lo = std::min(clip.lo, y);
        clip.hi = std::max(clip.hi, y);
    }
    if (!(clip.lo < clip.hi))
        throw DataError("derivation model needs measurements that are not all identical");

    double prior_mean = 0.0;
    for (double y : ys)
        prior_mean += y;
    prior_mean /= static_cast<double>(ys.size());

    GpHyperparameters init;
    const double sx = std::sqrt(sample_variance(xs));
    init.length_scale = config.length_scale.value_or(sx > 0.0 ? sx : 1.0);
    init.signal_variance = config.signal_variance.value_or(sample_variance(ys));
    init.noise_variance = config.noise_variance.value_or(std::max(sample_variance(res), 1e-10 * init.signal_variance));
    if (!(init.length_scale > 0.0) || !(init.signal_variance > 0.0) || !(init.noise_variance >= 0.0))
        throw ConfigError("kernel parameters must be positive");

    auto build = [&](const GpHyperparameters &h) {
        return Gp1d(compress_pairs(pairs, config.max_inducing, h.noise_variance), h, prior_mean);
    };

    Gp1d best = build(init);
    if (config.refine) {
        static constexpr std::array<double, 5> kScale = {0.25, 0.5, 1.0, 2.0, 4.0};
        for (double a : kScale) {
            for (double b : kScale) {
                for (double c : kScale) {
                    GpHyperparameters h{init.length_scale * a, init.signal_variance * b, init.noise_variance * c};
                    if (config.length_scale && a != 1.0)
                        continue;
                    if (config.signal_variance && b != 1.0)
                        continue;
                    if (config.noise_variance && c != 1.0)
                        continue;
                    try {
                        Gp1d candidate = build(h);
                        if (candidate.log_marginal_likelihood() > best.log_marginal_likelihood())
                            best = std::move(candidate);
                    } catch (const ModelError &) {
                        // Skip grid points whose kernel matrix cannot be factorized.
                    }
                }
            }
        }
    }
    return DerivationModel(std::move(best), clip);
}

// Sampling --------------------------------------------------------------------

VirtualMeasurement sample_virtual(const DerivationModel &model, double prediction, Rng &rng)
{
    std::normal_distribution<double> n01(0.0, 1.0);
    const double eps = n01(rng);
    VirtualMeasurement v;
    v.predicted = prediction;
    v.raw_sample = model.mean(prediction) + model.stddev(prediction) * eps;
    v.clipped = clip_sample(v.raw_sample, model.clip_range());
    return v;
}

std::vector<ProfileEntry> synthesize_profile(const Regressor &forest, const DerivationModel &derivation,
                                             std::span<const TransmissionRecord> records, Rng &rng)
{
    if (records.empty())
        throw DataError("profile synthesis needs at least one record");
    std::vector<ProfileEntry> out;
    out.reserve(records.size());
    for (const auto &r : records) {
        const double pred = forest.predict(r.context.features());
        out.push_back({r.context, r.data_rate, sample_virtual(derivation, pred, rng)});
    }
    return out;
}

} // namespace ddns
