// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/random.hpp"
#include "ddns/regression.hpp"
#include "ddns/trace.hpp"

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace ddns {

struct GpHyperparameters
{
    double length_scale = 1.0;    // MBit/s
    double signal_variance = 1.0; // (MBit/s)^2
    double noise_variance = 1.0;  // (MBit/s)^2
    bool operator==(const GpHyperparameters &) const = default;
};

/// Training abscissa of the 1-D GP with its own observation-noise variance.
struct GpPoint
{
    double x = 0.0;
    double y = 0.0;
    double noise = 0.0;
    bool operator==(const GpPoint &) const = default;
};

/// Exact GP regression on scalar inputs with an RBF kernel and a constant
/// prior mean. Jitter of 1e-8 * signal variance is added to the diagonal.
class Gp1d
{
public:
    Gp1d() = default;
    Gp1d(std::vector<GpPoint> points, GpHyperparameters hyper, double prior_mean);

    double kernel(double a, double b) const;
    double mean(double v) const;
    /// Posterior variance of the latent function (no observation noise).
    double latent_variance(double v) const;
    double log_marginal_likelihood() const { return lml_; }

    const std::vector<GpPoint> &points() const { return points_; }
    const GpHyperparameters &hyper() const { return hyper_; }
    double prior_mean() const { return prior_mean_; }
    double jitter() const { return 1e-8 * hyper_.signal_variance; }

private:
    std::vector<GpPoint> points_;
    GpHyperparameters hyper_;
    double prior_mean_ = 0.0;
    Eigen::MatrixXd chol_; // lower factor
    Eigen::VectorXd alpha_;
    double lml_ = 0.0;
};

struct ClipRange
{
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const ClipRange &) const = default;
};

/// Piecewise clamp of a raw sample into [lo, hi].
double clip_sample(double raw, const ClipRange &range);

struct KernelConfig
{
    /// Fixed values; unset entries are initialized from the data.
    std::optional<double> length_scale;
    std::optional<double> signal_variance;
    std::optional<double> noise_variance;
    /// Grid search over {x0.25, x0.5, x1, x2, x4} of each initial value on the
    /// log marginal likelihood.
    bool refine = false;
    std::size_t max_inducing = 512;
};

/// Probabilistic wrapper around a deterministic predictor: maps a predicted
/// rate to a mean and standard deviation of the measured rate.
class DerivationModel
{
public:
    DerivationModel() = default;
    DerivationModel(Gp1d gp, ClipRange clip);

    /// Degenerate model: mean is the identity, standard deviation is zero.
    static DerivationModel passthrough(ClipRange clip);

    double mean(double predicted) const;
    double stddev(double predicted) const;
    /// Predictive variance: latent variance plus observation noise.
    double variance(double predicted) const;

    const ClipRange &clip_range() const { return clip_; }
    bool is_passthrough() const { return passthrough_; }
    const Gp1d &gp() const { return gp_; }

private:
    Gp1d gp_;
    ClipRange clip_;
    bool passthrough_ = false;
};

/// Equal-frequency binning of (input, target) pairs sorted by input.
std::vector<GpPoint> compress_pairs(std::span<const std::pair<double, double>> pairs, std::size_t max_points,
                                    double noise_variance);

/// Fits the derivation model to (predicted, measured) pairs.
DerivationModel fit_derivation(std::span<const std::pair<double, double>> pairs, const KernelConfig &config = {});

struct VirtualMeasurement
{
    double predicted = 0.0;
    double raw_sample = 0.0;
    double clipped = 0.0;
};

VirtualMeasurement sample_virtual(const DerivationModel &model, double prediction, Rng &rng);

struct ProfileEntry
{
    ContextSample context;
    double measured = 0.0;
    VirtualMeasurement virtual_measurement;
};

/// Replays labeled records: predict, then draw a clipped virtual measurement.
std::vector<ProfileEntry> synthesize_profile(const Regressor &forest, const DerivationModel &derivation,
                                             std::span<const TransmissionRecord> records, Rng &rng);

} // namespace ddns
