// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/connmap.hpp"
#include "ddns/random.hpp"
#include "ddns/regression.hpp"
#include "ddns/trace.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace ddns {

enum class SchemeKind { Periodic, Cat, PCat, MlCat, MlPCat };

const char *to_string(SchemeKind kind) noexcept;
SchemeKind parse_scheme_kind(std::string_view text);

/// pCAT and ML-pCAT look ahead through the connectivity map.
constexpr bool is_predictive(SchemeKind k) { return k == SchemeKind::PCat || k == SchemeKind::MlPCat; }
/// ML kinds use the forest's predicted data rate as metric instead of SINR.
constexpr bool uses_predicted_rate(SchemeKind k) { return k == SchemeKind::MlCat || k == SchemeKind::MlPCat; }

struct SchemeConfig
{
    SchemeKind kind = SchemeKind::Cat;
    double phi_min = 0.0;  // dB for SINR kinds, MBit/s for ML kinds
    double phi_max = 30.0;
    double alpha = 6.0;
    double gamma = 2.0;
    double tau = 30.0;     // s
    double t_min = 10.0;   // s
    double t_max = 120.0;  // s
    double evaluation_rate = 1.0; // Hz
    double period = 10.0;  // s, periodic only

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

/// Validation defaults for the given operator ("A", "B", "C") and link.
SchemeConfig default_scheme(SchemeKind kind, const std::string &mno, Direction direction);

struct SchemeState
{
    double buffer_mb = 0.0;
    double delta_t = 0.0;      // s since the last transmission
    double last_tx_time = 0.0; // s
};

struct MetricSample
{
    double current = 0.0;
    std::optional<double> future;
    double theta = 0.0;
};

/// (phi - phi_min) / (phi_max - phi_min), clamped to [0, 1].
double normalize_metric(double phi, double phi_min, double phi_max);

/// Predictive exponent modifier; ΔΦ = future - current.
double z_factor(double current, double future, double theta, double gamma);

/// 0 below t_min, 1 beyond t_max, theta^(alpha*z) in between.
double tx_probability(double theta, double alpha, double z, double delta_t, double t_min, double t_max);

enum class Decision { Hold, Transmit };

struct DecisionDetail
{
    Decision decision = Decision::Hold;
    double probability = 0.0;
    double z = 1.0;
};

DecisionDetail decide(const SchemeConfig &scheme, const SchemeState &state, const MetricSample &metric, Rng &rng);

struct MetricInputs
{
    const RegressionForest *forest = nullptr;
    const ConnectivityMap *map = nullptr;
};

/// Builds the decision metric for the scheme kind. `future_position` is the
/// anticipated position at t + tau; an empty value or an unobserved map cell
/// leaves `future` empty, which makes the scheme fall back to z = 1.
MetricSample metric_source(const SchemeConfig &scheme, const ContextSample &context,
                           const std::optional<Vec2> &future_position, double buffer_mb, const MetricInputs &inputs);

} // namespace ddns
