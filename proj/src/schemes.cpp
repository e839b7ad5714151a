// SPDX-License-Identifier: Apache-2.0

#include "ddns/schemes.hpp"

#include "ddns/error.hpp"

#include <algorithm>
#include <cmath>

namespace ddns {

const char *to_string(SchemeKind kind) noexcept
{
    switch (kind) {
    case SchemeKind::Periodic: return "periodic";
    case SchemeKind::Cat: return "CAT";
    case SchemeKind::PCat: return "pCAT";
    case SchemeKind::MlCat: return "ML-CAT";
    case SchemeKind::MlPCat: return "ML-pCAT";
    }
    return "unknown";
}

SchemeKind parse_scheme_kind(std::string_view text)
{
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    std::erase(t, '_');
    std::erase(t, '-');
    if (t == "periodic")
        return SchemeKind::Periodic;
    if (t == "cat")
        return SchemeKind::Cat;
    if (t == "pcat")
        return SchemeKind::PCat;
    if (t == "mlcat")
        return SchemeKind::MlCat;
    if (t == "mlpcat")
        return SchemeKind::MlPCat;
    throw ConfigError("unknown scheme '" + std::string(text) + "'");
}

void SchemeConfig::validate() const
{
    if (kind == SchemeKind::Periodic) {
        if (!(period > 0.0))
            throw ConfigError("periodic scheme needs period > 0");
    } else {
        if (!(phi_max > phi_min))
            throw ConfigError("scheme needs phi_max > phi_min");
        if (!(t_max > t_min && t_min > 0.0))
            throw ConfigError("scheme needs t_max > t_min > 0");
        if (!(alpha > 0.0))
            throw ConfigError("scheme needs alpha > 0");
        if (!(gamma > 0.0))
            throw ConfigError("scheme needs gamma > 0");
        if (!(tau >= 0.0))
            throw ConfigError("scheme needs tau >= 0");
    }
    if (!(evaluation_rate > 0.0))
        throw ConfigError("scheme needs evaluation_rate > 0");
}

SchemeConfig default_scheme(SchemeKind kind, const std::string &mno, Direction direction)
{
    SchemeConfig c;
    c.kind = kind;
    c.phi_min = 0.0;
    c.alpha = 6.0;
    c.t_min = 10.0;
    c.t_max = 120.0;
    c.tau = 30.0;
    c.evaluation_rate = 1.0;
    c.period = 10.0;
    c.gamma = kind == SchemeKind::MlPCat ? 0.5 : 2.0;
    c.phi_max = 30.0;
    if (uses_predicted_rate(kind)) {
        const bool ul = direction == Direction::Uplink;
        if (mno == "A")
            c.phi_max = 30.0;
        else if (mno == "B")
            c.phi_max = ul ? 20.0 : 50.0;
        else if (mno == "C")
            c.phi_max = ul ? 20.0 : 15.0;
        else
            throw ConfigError("no default phi_max for operator '" + mno + "'; set it explicitly");
    }
    return c;
}

double normalize_metric(double phi, double phi_min, double phi_max)
{
    if (!(phi_max > phi_min))
        throw ConfigError("metric normalization needs phi_max > phi_min");
    return std::clamp((phi - phi_min) / (phi_max - phi_min), 0.0, 1.0);
}

double z_factor(double current, double future, double theta, double gamma)
{
    const double delta = future - current;
    if (delta > 0.0)
        return std::max(std::abs(delta * (1.0 - theta) * gamma), 1.0);
    return 1.0 / std::max(std::abs(delta * theta * gamma), 1.0);
}

double tx_probability(double theta, double alpha, double z, double delta_t, double t_min, double t_max)
{
    if (delta_t < t_min)
        return 0.0;
    if (delta_t > t_max)
        return 1.0;
    return std::pow(std::clamp(theta, 0.0, 1.0), alpha * z);
}

DecisionDetail decide(const SchemeConfig &scheme, const SchemeState &state, const MetricSample &metric, Rng &rng)
{
    DecisionDetail d;
    if (scheme.kind == SchemeKind::Periodic) {
        d.probability = state.delta_t >= scheme.period ? 1.0 : 0.0;
        d.decision = d.probability > 0.0 ? Decision::Transmit : Decision::Hold;
        return d;
    }
    if (is_predictive(scheme.kind) && metric.future)
        d.z = z_factor(metric.current, *metric.future, metric.theta, scheme.gamma);
    d.probability = tx_probability(metric.theta, scheme.alpha, d.z, state.delta_t, scheme.t_min, scheme.t_max);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    d.decision = u01(rng) < d.probability ? Decision::Transmit : Decision::Hold;
    return d;
}

MetricSample metric_source(const SchemeConfig &scheme, const ContextSample &context,
                           const std::optional<Vec2> &future_position, double buffer_mb, const MetricInputs &inputs)
{
    MetricSample m;
    if (scheme.kind == SchemeKind::Periodic)
        return m;

    if (is_predictive(scheme.kind) && !inputs.map)
        throw ModelError(std::string(to_string(scheme.kind)) + " needs a connectivity map");

    std::optional<CellAggregate> ahead;
    if (is_predictive(scheme.kind) && future_position)
        ahead = inputs.map->query_features(*future_position);

    if (uses_predicted_rate(scheme.kind)) {
        if (!inputs.forest)
            throw ModelError(std::string(to_string(scheme.kind)) + " needs a trained forest");
        const auto &meta = inputs.forest->metadata();
        const double payload = std::clamp(buffer_mb, meta.feature_min[kPayload], meta.feature_max[kPayload]);
        FeatureVector x = context.features();
        x[kPayload] = payload;
        m.current = inputs.forest->predict(x);
        if (ahead) {
            FeatureVector xf = ahead->mean;
            xf[kPayload] = payload;
            m.future = inputs.forest->predict(xf);
        }
    } else {
        m.current = context.sinr;
        if (ahead)
            m.future = ahead->mean[kSinr];
    }
    m.theta = normalize_metric(m.current, scheme.phi_min, scheme.phi_max);
    return m;
}

} // namespace ddns
