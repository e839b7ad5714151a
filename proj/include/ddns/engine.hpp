// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/connmap.hpp"
#include "ddns/derivation.hpp"
#include "ddns/metrics.hpp"
#include "ddns/regression.hpp"
#include "ddns/schemes.hpp"
#include "ddns/trace.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ddns {

enum class DelayMode {
    /// Mean age of data accumulated at a constant rate: Δt / 2.
    HalfInterval,
    /// Age of the oldest buffered byte: Δt.
    FullInterval,
};

enum class RateAggregation { PerTransmission, ByteWeighted };

struct ModelSet
{
    std::shared_ptr<const RegressionForest> forest;
    std::shared_ptr<const DerivationModel> derivation;
    std::shared_ptr<const ConnectivityMap> map;
};

struct RunConfig
{
    SchemeConfig scheme;
    double source_rate_kbps = 50.0; // kByte/s
    std::uint64_t seed = 0;
    DelayMode delay_mode = DelayMode::HalfInterval;
    RateAggregation rate_aggregation = RateAggregation::PerTransmission;
    ModelSet models;

    void validate() const;
};

struct TransmissionEvent
{
    double time = 0.0;         // s
    double payload_mb = 0.0;   // MB
    double delta_t = 0.0;      // s since the previous transmission
    double predicted = 0.0;    // MBit/s, forest output
    double virtual_rate = 0.0; // MBit/s, clipped virtual measurement
    double duration = 0.0;     // s, payload * 8 / virtual_rate
    double buffering_delay = 0.0; // s
};

struct RunResult
{
    std::string trace_id;
    std::uint64_t seed = 0;
    std::vector<TransmissionEvent> events;
    std::optional<double> mean_rate;  // MBit/s
    std::optional<double> mean_delay; // s
    double total_mb = 0.0;
    std::size_t transmissions = 0;
    double runtime_s = 0.0; // wall clock, not part of any deterministic artifact
};

/// Replays a trace at the scheme's evaluation rate. Deterministic in config.seed.
RunResult replay(const RunConfig &config, const Trace &trace);

/// Payload-weighted mean of the per-event buffering delay.
double buffering_delay(std::span<const TransmissionEvent> events, DelayMode mode = DelayMode::HalfInterval);

double mean_data_rate(std::span<const TransmissionEvent> events, RateAggregation mode = RateAggregation::PerTransmission);

/// Independent, reproducible seed per sweep run.
std::uint64_t run_seed(std::uint64_t base_seed, const std::string &trace_id, std::size_t phi_index,
                       std::size_t repetition);

struct SweepRun
{
    std::size_t phi_index = 0;
    double phi_max = 0.0;
    std::string trace_id;
    std::size_t repetition = 0;
    std::uint64_t seed = 0;
    std::optional<double> mean_rate;
    std::optional<double> mean_delay;
    std::size_t transmissions = 0;
    double total_mb = 0.0;
};

struct SweepPoint
{
    double phi_max = 0.0;
    std::size_t runs = 0;
    /// Runs that transmitted at least once; rate and delay aggregate these.
    std::size_t runs_with_transmissions = 0;
    std::optional<double> mean_rate;
    std::optional<double> rate_half_width; // 0.95 Student-t
    std::optional<double> mean_delay;
    std::optional<double> delay_half_width;
    double mean_transmissions = 0.0;
};

struct SweepTable
{
    SchemeKind kind = SchemeKind::Cat;
    std::vector<SweepRun> runs;
    std::vector<SweepPoint> points;
};

/// Full cross product Φ_max x trace x repetition, run on `jobs` threads.
SweepTable sweep(const RunConfig &base, std::span<const double> phi_max_values, std::span<const Trace> traces,
                 std::size_t seeds_per_point, std::size_t jobs = 0);

std::string sweep_runs_csv(const SweepTable &table);
std::string sweep_points_csv(const SweepTable &table);

struct BenchmarkResult
{
    std::vector<double> timings_s;
    double mean_s = 0.0;
    double std_s = 0.0;
};

BenchmarkResult benchmark(const RunConfig &config, const Trace &trace, std::size_t repetitions);

} // namespace ddns
