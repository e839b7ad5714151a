// SPDX-License-Identifier: Apache-2.0

#include "ddns/metrics.hpp"

#include "ddns/error.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>

namespace ddns {

Ecdf::Ecdf(std::span<const double> samples) : n_(samples.size())
{
    if (samples.empty())
        throw DataError("ECDF of an empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(n_);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i])
            continue;
        support_.push_back(sorted[i]);
        probs_.push_back(static_cast<double>(i + 1) / n);
    }
}

double Ecdf::operator()(double x) const
{
    auto it = std::upper_bound(support_.begin(), support_.end(), x);
    if (it == support_.begin())
        return 0.0;
    return probs_[static_cast<std::size_t>(it - support_.begin()) - 1];
}

Ecdf ecdf(std::span<const double> samples) { return Ecdf(samples); }

double mean(std::span<const double> v)
{
    if (v.empty())
        throw DataError("mean of an empty sample");
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty())
        throw DataError("correlation needs two equally sized non-empty vectors");
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw DataError("correlation undefined: zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double ecdf_similarity(std::span<const double> a, std::span<const double> b)
{
    const Ecdf fa(a), fb(b);
    std::vector<double> grid;
    grid.reserve(fa.support().size() + fb.support().size());
    std::merge(fa.support().begin(), fa.support().end(), fb.support().begin(), fb.support().end(),
               std::back_inserter(grid));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<double> va(grid.size()), vb(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        va[i] = fa(grid[i]);
        vb[i] = fb(grid[i]);
    }
    return pearson(va, vb);
}

double student_t_quantile(double p, double dof)
{
    boost::math::students_t dist(dof);
    return boost::math::quantile(dist, p);
}

MeanCi mean_ci(std::span<const double> samples, double level)
{
    if (samples.size() < 2)
        throw DataError("confidence interval needs at least two samples");
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError("confidence level must lie in (0, 1)");
    const double n = static_cast<double>(samples.size());
    const double t = student_t_quantile(0.5 + level / 2.0, n - 1.0);
    return {mean(samples), t * stddev(samples) / std::sqrt(n)};
}

TrendTest mann_kendall(std::span<const double> x)
{
    const std::size_t n = x.size();
    if (n < 3)
        throw DataError("trend test needs at least three points");
    TrendTest r;
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            r.s += (x[j] > x[i]) - (x[j] < x[i]);

    std::map<double, std::size_t> ties;
    for (double v : x)
        ++ties[v];
    const double nd = static_cast<double>(n);
    double var = nd * (nd - 1.0) * (2.0 * nd + 5.0);
    for (const auto &[v, t] : ties) {
        const double td = static_cast<double>(t);
        var -= td * (td - 1.0) * (2.0 * td + 5.0);
    }
    r.variance = var / 18.0;

    if (r.variance > 0.0) {
        if (r.s > 0)
            r.z = (r.s - 1.0) / std::sqrt(r.variance);
        else if (r.s < 0)
            r.z = (r.s + 1.0) / std::sqrt(r.variance);
    }
    r.p_value = boost::math::cdf(boost::math::complement(boost::math::normal(), r.z));
    return r;
}

double ks_statistic(std::span<const double> a, std::span<const double> b)
{
    const Ecdf fa(a), fb(b);
    double d = 0.0;
    for (double x : fa.support())
        d = std::max(d, std::abs(fa(x) - fb(x)));
    for (double x : fb.support())
        d = std::max(d, std::abs(fa(x) - fb(x)));
    return d;
}

} // namespace ddns
