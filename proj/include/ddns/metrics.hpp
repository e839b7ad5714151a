// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ddns {

/// Right-continuous empirical CDF over the distinct sample values.
class Ecdf
{
public:
    explicit Ecdf(std::span<const double> samples);

    /// Fraction of samples <= x.
    double operator()(double x) const;

    const std::vector<double> &support() const { return support_; }
    const std::vector<double> &probabilities() const { return probs_; }
    std::size_t sample_count() const { return n_; }

private:
    std::vector<double> support_;
    std::vector<double> probs_;
    std::size_t n_ = 0;
};

Ecdf ecdf(std::span<const double> samples);

/// Pearson correlation of two ECDFs evaluated on the merged sorted support.
double ecdf_similarity(std::span<const double> a, std::span<const double> b);

double pearson(std::span<const double> a, std::span<const double> b);

struct MeanCi
{
    double mean = 0.0;
    double half_width = 0.0;
    double lower() const { return mean - half_width; }
    double upper() const { return mean + half_width; }
};

/// Student-t confidence interval of the mean.
MeanCi mean_ci(std::span<const double> samples, double level = 0.95);

/// Quantile of Student's t distribution with `dof` degrees of freedom.
double student_t_quantile(double p, double dof);

struct TrendTest
{
    double s = 0.0;
    double variance = 0.0;
    double z = 0.0;
    double p_value = 1.0; // one-sided, H1: increasing
};

/// Mann-Kendall test for a monotone increasing trend (tie-corrected variance,
/// continuity-corrected normal approximation).
TrendTest mann_kendall(std::span<const double> series);

/// Two-sample Kolmogorov-Smirnov statistic sup|F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Sample standard deviation (N - 1 denominator); 0 for a single value.
double stddev(std::span<const double> v);

} // namespace ddns
