// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ddns {

enum class Direction { Uplink, Downlink };

const char *to_string(Direction d) noexcept;
Direction parse_direction(std::string_view text);

struct GeoPoint
{
    double lat = 0.0; // degrees
    double lon = 0.0; // degrees
    bool operator==(const GeoPoint &) const = default;
};

struct Vec2
{
    double x = 0.0; // meters east
    double y = 0.0; // meters north
    bool operator==(const Vec2 &) const = default;
};

constexpr std::size_t kNumFeatures = 9;

/// Model inputs in fixed order: application, channel and mobility context.
using FeatureVector = std::array<double, kNumFeatures>;

enum Feature : std::size_t {
    kPayload = 0,
    kRsrp,
    kRsrq,
    kSinr,
    kCqi,
    kTa,
    kCarrierFreq,
    kVelocity,
    kCellId,
};

const std::array<std::string, kNumFeatures> &feature_names();

/// One timestamped context observation of a drive test.
struct ContextSample
{
    double timestamp = 0.0;    // s since trace start
    double payload_mb = 1.0;   // MB
    double rsrp = 0.0;         // dBm
    double rsrq = 0.0;         // dB
    double sinr = 0.0;         // dB
    double cqi = 0.0;
    double ta = 0.0;
    double carrier_freq = 1800.0; // MHz
    double velocity = 0.0;        // km/h
    std::int64_t cell_id = 0;
    std::int64_t enb_id = 0;
    GeoPoint geo;
    Vec2 position;
    std::string mno;
    std::string scenario;
    Direction direction = Direction::Uplink;

    FeatureVector features() const;
    bool operator==(const ContextSample &) const = default;
};

struct TransmissionRecord
{
    ContextSample context;
    double data_rate = 0.0; // MBit/s
    bool operator==(const TransmissionRecord &) const = default;
};

struct Trace
{
    std::string id;
    std::vector<ContextSample> samples;
    std::string mno;
    Direction direction = Direction::Uplink;
    GeoPoint origin;

    double start_time() const { return samples.front().timestamp; }
    double end_time() const { return samples.back().timestamp; }
    bool operator==(const Trace &) const = default;
};

struct IngestResult
{
    Trace trace;
    std::vector<TransmissionRecord> records;
};

/// Canonical column names in file order.
const std::vector<std::string> &canonical_columns();

/// Maps each canonical column to the header name used by a foreign file.
/// Canonical columns absent from the mapping are looked up by their own name;
/// `rate_mbits` may be missing entirely, in which case every row is unlabeled.
struct CsvSchema
{
    std::map<std::string, std::string> rename;
    /// Projection origin; the first row's position is used when unset.
    std::optional<GeoPoint> origin;

    std::string column_for(const std::string &canonical) const;
};

IngestResult ingest_trace(const std::filesystem::path &path, const CsvSchema &schema = {});
IngestResult ingest_trace_text(std::string_view text, const std::string &trace_id,
                               const CsvSchema &schema = {});

/// Writes the canonical CSV. Labels are taken from `records` by timestamp.
std::string format_trace_csv(const Trace &trace, const std::vector<TransmissionRecord> &records);
void write_trace_csv(const std::filesystem::path &path, const Trace &trace,
                     const std::vector<TransmissionRecord> &records);

// Geodesy ---------------------------------------------------------------------

constexpr double kEarthRadiusM = 6371008.8;

/// Azimuthal equidistant projection about `origin` on a spherical earth.
/// Distances from the origin are preserved exactly.
Vec2 project_position(double lat, double lon, const GeoPoint &origin);
GeoPoint unproject_position(const Vec2 &p, const GeoPoint &origin);

// Synthetic scenarios ---------------------------------------------------------

enum class GroundTruth {
    /// rate = intercept + slope * sinr
    LinearSinr,
    /// rate = low if sinr <= step_at else high
    StepSinr,
    /// Piecewise-constant in sinr, payload and carrier frequency. Tree representable.
    Staircase,
    /// Smooth nonlinear mix of sinr, rsrp, payload and velocity.
    Smooth,
};

GroundTruth parse_ground_truth(std::string_view text);
const char *to_string(GroundTruth g) noexcept;

struct SyntheticConfig
{
    std::size_t n_samples = 1000;
    double sample_interval_s = 1.0;
    double noise_std = 0.0; // MBit/s
    GroundTruth truth = GroundTruth::Staircase;
    double slope = 1.0;      // LinearSinr
    double intercept = 20.0; // LinearSinr
    double step_at = 10.0;   // StepSinr threshold (dB)
    double low = 5.0;        // StepSinr
    double high = 25.0;      // StepSinr
    double min_rate = 0.1;   // labels are floored here to stay positive
    double speed_kmh = 50.0;
    double payload_min_mb = 0.1;
    double payload_max_mb = 8.0;
    /// Number of base stations placed along the route.
    std::size_t n_enb = 6;
    /// Fraction of rows carrying a label.
    double labeled_fraction = 1.0;
    std::string mno = "A";
    std::string scenario = "urban";
    Direction direction = Direction::Uplink;
    GeoPoint origin{51.4934, 7.4137};
};

/// Noise-free label for a feature vector under the configured ground truth.
double ground_truth_rate(const SyntheticConfig &config, const FeatureVector &x);

IngestResult generate_synthetic_scenario(const SyntheticConfig &config, std::uint64_t seed);

/// Redraws label noise on existing records with an independent stream.
std::vector<TransmissionRecord> redraw_labels(const SyntheticConfig &config,
                                              const std::vector<TransmissionRecord> &records,
                                              std::uint64_t noise_seed);

} // namespace ddns
