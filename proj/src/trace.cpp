// SPDX-License-Identifier: Apache-2.0

#include "ddns/trace.hpp"

#include "ddns/error.hpp"
#include "ddns/random.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ddns {

using detail::format_double;
using detail::parse_double;
using detail::parse_int;

const char *to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Model: return "model";
    }
    return "unknown";
}

const char *to_string(Direction d) noexcept
{
    return d == Direction::Uplink ? "uplink" : "downlink";
}

Direction parse_direction(std::string_view text)
{
    text = detail::trim(text);
    if (text == "uplink" || text == "UL" || text == "ul")
        return Direction::Uplink;
    if (text == "downlink" || text == "DL" || text == "dl")
        return Direction::Downlink;
    throw DataError("unknown direction '" + std::string(text) + "'");
}

const std::array<std::string, kNumFeatures> &feature_names()
{
    static const std::array<std::string, kNumFeatures> names = {
        "payload_mb", "rsrp", "rsrq", "sinr", "cqi", "ta", "freq_mhz", "velocity_kmh", "cell_id"};
    return names;
}

FeatureVector ContextSample::features() const
{
    return {payload_mb, rsrp, rsrq, sinr, cqi, ta, carrier_freq, velocity, static_cast<double>(cell_id)};
}

const std::vector<std::string> &canonical_columns()
{
    static const std::vector<std::string> cols = {
        "t",        "payload_mb", "rsrp",     "rsrq",     "sinr",      "cqi",
        "ta",       "freq_mhz",   "velocity_kmh", "cell_id", "enb_id", "lat",
        "lon",      "mno",        "scenario", "direction", "rate_mbits"};
    return cols;
}

std::string CsvSchema::column_for(const std::string &canonical) const
{
    auto it = rename.find(canonical);
    return it == rename.end() ? canonical : it->second;
}

// Geodesy ---------------------------------------------------------------------

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void check_coordinates(double lat, double lon)
{
    if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 || lon < -180.0 ||
        lon > 180.0) {
        throw DataError("coordinates out of range: (" + format_double(lat) + ", " + format_double(lon) + ")");
    }
}

} // namespace

Vec2 project_position(double lat, double lon, const GeoPoint &origin)
{
    check_coordinates(lat, lon);
    check_coordinates(origin.lat, origin.lon);

    const double p0 = origin.lat * kDeg, l0 = origin.lon * kDeg;
    const double p1 = lat * kDeg, l1 = lon * kDeg;

    const double ax = std::cos(p0) * std::cos(l0), ay = std::cos(p0) * std::sin(l0), az = std::sin(p0);
    const double bx = std::cos(p1) * std::cos(l1), by = std::cos(p1) * std::sin(l1), bz = std::sin(p1);
    const double cx = ay * bz - az * by, cy = az * bx - ax * bz, cz = ax * by - ay * bx;
    const double central = std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), ax * bx + ay * by + az * bz);

    if (central == 0.0)
        return {0.0, 0.0};

    const double dl = l1 - l0;
    const double bearing =
        std::atan2(std::sin(dl) * std::cos(p1), std::cos(p0) * std::sin(p1) - std::sin(p0) * std::cos(p1) * std::cos(dl));
    const double d = kEarthRadiusM * central;
    return {d * std::sin(bearing), d * std::cos(bearing)};
}

GeoPoint unproject_position(const Vec2 &p, const GeoPoint &origin)
{
    check_coordinates(origin.lat, origin.lon);
    const double d = std::hypot(p.x, p.y);
    if (d == 0.0)
        return origin;

    const double c = d / kEarthRadiusM;
    const double bearing = std::atan2(p.x, p.y);
    const double p0 = origin.lat * kDeg, l0 = origin.lon * kDeg;
    const double p1 = std::asin(std::sin(p0) * std::cos(c) + std::cos(p0) * std::sin(c) * std::cos(bearing));
    double l1 = l0 + std::atan2(std::sin(bearing) * std::sin(c) * std::cos(p0), std::cos(c) - std::sin(p0) * std::sin(p1));
    l1 = std::remainder(l1, 2.0 * std::numbers::pi);
    return {p1 / kDeg, l1 / kDeg};
}

// Ingest ----------------------------------------------------------------------

namespace {

[[noreturn]] void row_error(std::size_t line, const std::string &msg)
{
    throw DataError("line " + std::to_string(line) + ": " + msg);
}

double field_double(std::string_view s, std::size_t line, const std::string &name)
{
    auto v = parse_double(s);
    if (!v || !std::isfinite(*v))
        row_error(line, "malformed " + name + " '" + std::string(s) + "'");
    return *v;
}

std::int64_t field_int(std::string_view s, std::size_t line, const std::string &name)
{
    if (auto v = parse_int(s))
        return *v;
    // Some exports write identifiers as floats.
    auto d = parse_double(s);
    if (d && std::isfinite(*d) && std::floor(*d) == *d && std::abs(*d) < 9.0e15)
        return static_cast<std::int64_t>(*d);
    row_error(line, "malformed " + name + " '" + std::string(s) + "'");
}

} // namespace

IngestResult ingest_trace_text(std::string_view text, const std::string &trace_id, const CsvSchema &schema)
{
    IngestResult result;
    result.trace.id = trace_id;

    std::vector<std::string_view> lines;
    for (std::size_t start = 0; start < text.size();) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    while (!lines.empty() && detail::trim(lines.back()).empty())
        lines.pop_back();
    if (lines.empty())
        throw DataError("trace '" + trace_id + "' is empty");

    // Resolve header positions.
    auto header = detail::split(lines.front());
    if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF"))
        header.front().remove_prefix(3);
    std::map<std::string, std::size_t> pos_of;
    for (std::size_t i = 0; i < header.size(); ++i)
        pos_of[std::string(detail::trim(header[i]))] = i;

    const auto &cols = canonical_columns();
    std::vector<std::optional<std::size_t>> col_pos(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const std::string name = schema.column_for(cols[c]);
        auto it = pos_of.find(name);
        if (it != pos_of.end()) {
            col_pos[c] = it->second;
        } else if (cols[c] != "rate_mbits") {
            throw DataError("line 1: header is missing column '" + name + "'");
        }
    }
    auto col = [&](std::size_t c) { return *col_pos[c]; };

    std::optional<GeoPoint> origin = schema.origin;

    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        if (detail::trim(lines[li]).empty())
            continue;
        auto f = detail::split(lines[li]);
        if (f.size() != header.size())
            row_error(line_no, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));

        ContextSample s;
        s.timestamp = field_double(f[col(0)], line_no, "t");
        s.payload_mb = field_double(f[col(1)], line_no, "payload_mb");
        s.rsrp = field_double(f[col(2)], line_no, "rsrp");
        s.rsrq = field_double(f[col(3)], line_no, "rsrq");
        s.sinr = field_double(f[col(4)], line_no, "sinr");
        s.cqi = field_double(f[col(5)], line_no, "cqi");
        s.ta = field_double(f[col(6)], line_no, "ta");
        s.carrier_freq = field_double(f[col(7)], line_no, "freq_mhz");
        s.velocity = field_double(f[col(8)], line_no, "velocity_kmh");
        s.cell_id = field_int(f[col(9)], line_no, "cell_id");
        s.enb_id = field_int(f[col(10)], line_no, "enb_id");
        s.geo.lat = field_double(f[col(11)], line_no, "lat");
        s.geo.lon = field_double(f[col(12)], line_no, "lon");
        s.mno = std::string(detail::trim(f[col(13)]));
        s.scenario = std::string(detail::trim(f[col(14)]));
        try {
            s.direction = parse_direction(f[col(15)]);
        } catch (const DataError &e) {
            row_error(line_no, e.what());
        }

        if (!(s.payload_mb > 0.0))
            row_error(line_no, "payload_mb must be > 0");
        if (!(s.velocity >= 0.0))
            row_error(line_no, "velocity_kmh must be >= 0");
        if (!(s.carrier_freq > 0.0))
            row_error(line_no, "freq_mhz must be > 0");
        if (s.mno.empty())
            row_error(line_no, "mno is empty");

        try {
            if (!origin)
                origin = s.geo;
            s.position = project_position(s.geo.lat, s.geo.lon, *origin);
        } catch (const DataError &e) {
            row_error(line_no, e.what());
        }

        auto &samples = result.trace.samples;
        if (samples.empty()) {
            result.trace.mno = s.mno;
            result.trace.direction = s.direction;
        } else {
            if (!(s.timestamp > samples.back().timestamp)) {
                throw DataError("line " + std::to_string(line_no) + ": timestamps not strictly increasing at sample index " +
                                std::to_string(samples.size()));
            }
            if (s.mno != result.trace.mno || s.direction != result.trace.direction)
                row_error(line_no, "trace mixes operators or link directions");
        }

        std::optional<double> rate;
        if (col_pos.back()) {
            auto rate_text = detail::trim(f[col(16)]);
            if (!rate_text.empty()) {
                rate = field_double(rate_text, line_no, "rate_mbits");
                if (!(*rate > 0.0))
                    row_error(line_no, "rate_mbits must be > 0");
            }
        }

        samples.push_back(s);
        if (rate)
            result.records.push_back({s, *rate});
    }

    if (result.trace.samples.empty())
        throw DataError("trace '" + trace_id + "' has no rows");
    result.trace.origin = *origin;
    return result;
}

IngestResult ingest_trace(const std::filesystem::path &path, const CsvSchema &schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open trace file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ingest_trace_text(ss.str(), path.stem().string(), schema);
}

std::string format_trace_csv(const Trace &trace, const std::vector<TransmissionRecord> &records)
{
    std::map<double, double> labels;
    for (const auto &r : records)
        labels[r.context.timestamp] = r.data_rate;

    std::string out;
    const auto &cols = canonical_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out += cols[i];
        out += i + 1 < cols.size() ? ',' : '\n';
    }
    for (const auto &s : trace.samples) {
        out += format_double(s.timestamp) + ',' + format_double(s.payload_mb) + ',' + format_double(s.rsrp) + ',' +
               format_double(s.rsrq) + ',' + format_double(s.sinr) + ',' + format_double(s.cqi) + ',' +
               format_double(s.ta) + ',' + format_double(s.carrier_freq) + ',' + format_double(s.velocity) + ',' +
               std::to_string(s.cell_id) + ',' + std::to_string(s.enb_id) + ',' + format_double(s.geo.lat) + ',' +
               format_double(s.geo.lon) + ',' + s.mno + ',' + s.scenario + ',' + to_string(s.direction) + ',';
        if (auto it = labels.find(s.timestamp); it != labels.end())
            out += format_double(it->second);
        out += '\n';
    }
    return out;
}

void write_trace_csv(const std::filesystem::path &path, const Trace &trace,
                     const std::vector<TransmissionRecord> &records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << format_trace_csv(trace, records);
}

// Synthetic scenarios ---------------------------------------------------------

GroundTruth parse_ground_truth(std::string_view text)
{
    if (text == "linear_sinr")
        return GroundTruth::LinearSinr;
    if (text == "step_sinr")
        return GroundTruth::StepSinr;
    if (text == "staircase")
        return GroundTruth::Staircase;
    if (text == "smooth")
        return GroundTruth::Smooth;
    throw ConfigError("unknown ground truth '" + std::string(text) + "'");
}

const char *to_string(GroundTruth g) noexcept
{
    switch (g) {
    case GroundTruth::LinearSinr: return "linear_sinr";
    case GroundTruth::StepSinr: return "step_sinr";
    case GroundTruth::Staircase: return "staircase";
    case GroundTruth::Smooth: return "smooth";
    }
    return "unknown";
}

double ground_truth_rate(const SyntheticConfig &config, const FeatureVector &x)
{
    const double sinr = x[kSinr];
    switch (config.truth) {
    case GroundTruth::LinearSinr:
        return config.intercept + config.slope * sinr;
    case GroundTruth::StepSinr:
        return sinr <= config.step_at ? config.low : config.high;
    case GroundTruth::Staircase: {
        double level = 3.0;
        if (sinr >= 20.0)
            level = 36.0;
        else if (sinr >= 15.0)
            level = 28.0;
        else if (sinr >= 10.0)
            level = 20.0;
        else if (sinr >= 5.0)
            level = 12.0;
        else if (sinr >= 0.0)
            level = 6.0;
        const double payload = x[kPayload];
        const double pf = payload < 0.5 ? 0.6 : (payload < 2.0 ? 0.8 : 1.0);
        return level * pf + (x[kCarrierFreq] >= 1800.0 ? 2.0 : 0.0);
    }
    case GroundTruth::Smooth: {
        const double payload = x[kPayload];
        return 3.0 + 33.0 / (1.0 + std::exp(-(sinr - 8.0) / 4.0)) * payload / (payload + 0.5) +
               0.05 * (x[kRsrp] + 100.0) - 0.02 * x[kVelocity];
    }
    }
    return 0.0;
}

namespace {

struct Enb
{
    Vec2 pos;
    double freq = 1800.0;
    double power_offset = 0.0;
    std::int64_t id = 0;
    // Shadowing as a sum of random plane waves.
    std::array<double, 8> kx{}, ky{}, phase{};
};

constexpr double kShadowStdDb = 5.0;

double shadowing(const Enb &e, const Vec2 &p)
{
    double s = 0.0;
    for (std::size_t i = 0; i < e.kx.size(); ++i)
        s += std::cos(e.kx[i] * p.x + e.ky[i] * p.y + e.phase[i]);
    return kShadowStdDb * std::sqrt(2.0 / static_cast<double>(e.kx.size())) * s;
}

void validate(const SyntheticConfig &c)
{
    if (c.n_samples == 0)
        throw ConfigError("synthetic scenario needs at least one sample");
    if (!(c.noise_std >= 0.0))
        throw ConfigError("synthetic noise_std must be >= 0");
    if (!(c.sample_interval_s > 0.0))
        throw ConfigError("synthetic sample_interval_s must be > 0");
    if (!(c.payload_min_mb > 0.0) || !(c.payload_max_mb >= c.payload_min_mb))
        throw ConfigError("synthetic payload range is invalid");
    if (!(c.labeled_fraction >= 0.0 && c.labeled_fraction <= 1.0))
        throw ConfigError("synthetic labeled_fraction must lie in [0, 1]");
    if (c.n_enb == 0)
        throw ConfigError("synthetic scenario needs at least one eNB");
    if (!(c.speed_kmh >= 0.0))
        throw ConfigError("synthetic speed must be >= 0");
    if (!(c.min_rate > 0.0))
        throw ConfigError("synthetic min_rate must be > 0");
}

double noisy_label(const SyntheticConfig &c, const FeatureVector &x, Rng &noise)
{
    std::normal_distribution<double> n01(0.0, 1.0);
    const double eps = n01(noise);
    return std::max(c.min_rate, ground_truth_rate(c, x) + c.noise_std * eps);
}

} // namespace

IngestResult generate_synthetic_scenario(const SyntheticConfig &config, std::uint64_t seed)
{
    validate(config);
    Rng feat(mix_seed({seed, 0}));
    Rng noise(mix_seed({seed, 1}));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double pi = std::numbers::pi;

    const std::size_t n = config.n_samples;

    // Route: piecewise-linear with random turns, speed as a mean-reverting walk.
    std::vector<Vec2> route(n);
    std::vector<double> speed(n);
    {
        Vec2 p{0.0, 0.0};
        double heading = 2.0 * pi * u01(feat);
        double segment_left = 300.0 + 500.0 * u01(feat);
        double v = config.speed_kmh;
        for (std::size_t i = 0; i < n; ++i) {
            route[i] = p;
            speed[i] = v;
            double dist = v / 3.6 * config.sample_interval_s;
            while (dist > 0.0) {
                const double step = std::min(dist, segment_left);
                p.x += step * std::sin(heading);
                p.y += step * std::cos(heading);
                dist -= step;
                segment_left -= step;
                if (segment_left <= 0.0) {
                    heading += pi * (u01(feat) - 0.5);
                    segment_left = 300.0 + 500.0 * u01(feat);
                }
            }
            v += 0.1 * (config.speed_kmh - v) + 0.05 * config.speed_kmh * n01(feat);
            v = std::clamp(v, 0.0, 2.0 * config.speed_kmh);
        }
    }

    // Base stations spread along the route.
    static constexpr std::array<double, 3> kFreqs = {800.0, 1800.0, 2600.0};
    std::vector<Enb> enbs(config.n_enb);
    for (std::size_t j = 0; j < enbs.size(); ++j) {
        auto &e = enbs[j];
        const auto idx = std::min(n - 1, static_cast<std::size_t>((static_cast<double>(j) + 0.5) * static_cast<double>(n) /
                                                                  static_cast<double>(enbs.size())));
        const double ang = 2.0 * pi * u01(feat);
        const double off = 150.0 + 350.0 * u01(feat);
        e.pos = {route[idx].x + off * std::sin(ang), route[idx].y + off * std::cos(ang)};
        e.freq = kFreqs[static_cast<std::size_t>(u01(feat) * 3.0) % 3];
        e.power_offset = 6.0 * (u01(feat) - 0.5);
        e.id = 100 + static_cast<std::int64_t>(j);
        for (std::size_t w = 0; w < e.kx.size(); ++w) {
            const double wavelength = 100.0 + 300.0 * u01(feat);
            const double dir = 2.0 * pi * u01(feat);
            e.kx[w] = 2.0 * pi / wavelength * std::sin(dir);
            e.ky[w] = 2.0 * pi / wavelength * std::cos(dir);
            e.phase[w] = 2.0 * pi * u01(feat);
        }
    }

    IngestResult out;
    out.trace.id = config.scenario + "-" + std::to_string(seed);
    out.trace.mno = config.mno;
    out.trace.direction = config.direction;
    out.trace.origin = config.origin;

    constexpr double kNoiseDbm = -118.0;
    constexpr double kLoad = 0.5;
    // Transmitter and receiver impairments cap the usable SINR near 30 dB.
    constexpr double kImpairment = 1e-3;
    const double log_pmin = std::log(config.payload_min_mb);
    const double log_pmax = std::log(config.payload_max_mb);

    std::vector<double> rx(enbs.size());
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 &p = route[i];
        std::size_t best = 0;
        for (std::size_t j = 0; j < enbs.size(); ++j) {
            const auto &e = enbs[j];
            const double d = std::max(20.0, std::hypot(p.x - e.pos.x, p.y - e.pos.y));
            const double pl = 128.1 + 37.6 * std::log10(d / 1000.0) + 20.0 * std::log10(e.freq / 1800.0);
            rx[j] = 18.0 + e.power_offset - pl + shadowing(e, p);
            if (rx[j] > rx[best])
                best = j;
        }
        const auto lin = [](double dbm) { return std::pow(10.0, dbm / 10.0); };
        const double signal = lin(rx[best]);
        double interference = lin(kNoiseDbm) + kImpairment * signal;
        for (std::size_t j = 0; j < enbs.size(); ++j)
            if (j != best)
                interference += kLoad * lin(rx[j]);

        const auto &e = enbs[best];
        ContextSample s;
        s.timestamp = static_cast<double>(i) * config.sample_interval_s;
        s.rsrp = rx[best];
        s.sinr = 10.0 * std::log10(signal / interference) + 1.5 * n01(feat);
        s.rsrq = std::clamp(10.0 * std::log10(signal / (2.0 * signal + interference)) - 3.0 + 0.5 * n01(feat), -19.5, -3.0);
        s.cqi = std::clamp(std::round((s.sinr + 6.0) / 2.0), 1.0, 15.0);
        const double d = std::hypot(p.x - e.pos.x, p.y - e.pos.y);
        s.ta = std::floor(d / 78.12);
        s.carrier_freq = e.freq;
        s.velocity = speed[i];
        s.enb_id = e.id;
        const double bearing = std::atan2(p.x - e.pos.x, p.y - e.pos.y) + pi;
        s.cell_id = e.id * 10 + static_cast<std::int64_t>(std::min(2.0, std::floor(bearing / (2.0 * pi / 3.0))));
        s.payload_mb = std::exp(log_pmin + (log_pmax - log_pmin) * u01(feat));
        s.geo = unproject_position(p, config.origin);
        s.position = project_position(s.geo.lat, s.geo.lon, config.origin);
        s.mno = config.mno;
        s.scenario = config.scenario;
        s.direction = config.direction;

        const bool labeled = u01(feat) < config.labeled_fraction;
        out.trace.samples.push_back(s);
        if (labeled)
            out.records.push_back({s, noisy_label(config, s.features(), noise)});
    }
    return out;
}

std::vector<TransmissionRecord> redraw_labels(const SyntheticConfig &config,
                                              const std::vector<TransmissionRecord> &records,
                                              std::uint64_t noise_seed)
{
    validate(config);
    Rng noise(mix_seed({noise_seed, 1}));
    std::vector<TransmissionRecord> out = records;
    for (auto &r : out)
        r.data_rate = noisy_label(config, r.context.features(), noise);
    return out;
}

} // namespace ddns
