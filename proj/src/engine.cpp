// SPDX-License-Identifier: Apache-2.0

#include "ddns/engine.hpp"

#include "ddns/error.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ddns {

void RunConfig::validate() const
{
    scheme.validate();
    if (!(source_rate_kbps > 0.0))
        throw ConfigError("source rate must be > 0");
}

namespace {

/// Index of the last sample with timestamp <= t, starting the search at `from`.
std::size_t locf(const std::vector<ContextSample> &samples, double t, std::size_t from)
{
    while (from + 1 < samples.size() && samples[from + 1].timestamp <= t)
        ++from;
    return from;
}

} // namespace

RunResult replay(const RunConfig &config, const Trace &trace)
{
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    if (trace.samples.empty())
        throw DataError("cannot replay an empty trace");
    const auto &forest = config.models.forest;
    const auto &derivation = config.models.derivation;
    if (!forest || !derivation)
        throw ModelError("replay needs a forest and a derivation model");
    if (forest->metadata().mno != trace.mno || forest->metadata().direction != trace.direction) {
        throw ModelError("model for " + forest->metadata().mno + "/" + to_string(forest->metadata().direction) +
                         " cannot replay trace '" + trace.id + "' (" + trace.mno + "/" + to_string(trace.direction) +
                         ")");
    }

    const auto &scheme = config.scheme;
    const MetricInputs inputs{forest.get(), config.models.map.get()};
    const double source_mb_per_s = config.source_rate_kbps / 1000.0;
    const double tick = 1.0 / scheme.evaluation_rate;
    const double t0 = trace.start_time();
    const auto n_ticks = static_cast<std::size_t>(std::floor((trace.end_time() - t0) / tick + 1e-9));
    const double payload_lo = forest->metadata().feature_min[kPayload];
    const double payload_hi = forest->metadata().feature_max[kPayload];

    Rng rng(config.seed);
    RunResult result;
    result.trace_id = trace.id;
    result.seed = config.seed;

    SchemeState state;
    state.last_tx_time = t0;
    std::size_t cursor = 0, ahead_cursor = 0;

    for (std::size_t k = 0; k <= n_ticks; ++k) {
        const double t = t0 + static_cast<double>(k) * tick;
        cursor = locf(trace.samples, t, cursor);
        const auto &ctx = trace.samples[cursor];
        state.delta_t = t - state.last_tx_time;
        state.buffer_mb = source_mb_per_s * state.delta_t;

        std::optional<Vec2> ahead;
        if (is_predictive(scheme.kind)) {
            const double tf = t + scheme.tau;
            if (tf <= trace.end_time()) {
                ahead_cursor = locf(trace.samples, tf, ahead_cursor);
                ahead = trace.samples[ahead_cursor].position;
            }
        }

        const auto metric = metric_source(scheme, ctx, ahead, state.buffer_mb, inputs);
        const auto d = decide(scheme, state, metric, rng);
        if (d.decision != Decision::Transmit || !(state.buffer_mb > 0.0))
            continue;

        FeatureVector x = ctx.features();
        x[kPayload] = std::clamp(state.buffer_mb, payload_lo, payload_hi);
        const double predicted = forest->predict(x);
        const auto vm = sample_virtual(*derivation, predicted, rng);

        TransmissionEvent ev;
        ev.time = t;
        ev.payload_mb = state.buffer_mb;
        ev.delta_t = state.delta_t;
        ev.predicted = predicted;
        ev.virtual_rate = vm.clipped;
        ev.duration = ev.payload_mb * 8.0 / ev.virtual_rate;
        ev.buffering_delay = config.delay_mode == DelayMode::HalfInterval ? state.delta_t / 2.0 : state.delta_t;
        result.events.push_back(ev);
        result.total_mb += ev.payload_mb;
        state.last_tx_time = t;
    }

    result.transmissions = result.events.size();
    if (!result.events.empty()) {
        result.mean_rate = mean_data_rate(result.events, config.rate_aggregation);
        result.mean_delay = buffering_delay(result.events, config.delay_mode);
    }
    result.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

double buffering_delay(std::span<const TransmissionEvent> events, DelayMode mode)
{
    if (events.empty())
        throw DataError("buffering delay of a run without transmissions");
    double weighted = 0.0, total = 0.0;
    for (const auto &e : events) {
        const double delay = mode == DelayMode::HalfInterval ? e.delta_t / 2.0 : e.delta_t;
        weighted += e.payload_mb * delay;
        total += e.payload_mb;
    }
    if (!(total > 0.0))
        throw DataError("buffering delay of a run without payload");
    return weighted / total;
}

double mean_data_rate(std::span<const TransmissionEvent> events, RateAggregation mode)
{
    if (events.empty())
        throw DataError("data rate of a run without transmissions");
    double num = 0.0, den = 0.0;
    for (const auto &e : events) {
        const double w = mode == RateAggregation::ByteWeighted ? e.payload_mb : 1.0;
        num += w * e.virtual_rate;
        den += w;
    }
    return num / den;
}

std::uint64_t run_seed(std::uint64_t base_seed, const std::string &trace_id, std::size_t phi_index,
                       std::size_t repetition)
{
    return mix_seed({base_seed, stable_hash(trace_id), phi_index, repetition});
}

SweepTable sweep(const RunConfig &base, std::span<const double> phi_max_values, std::span<const Trace> traces,
                 std::size_t seeds_per_point, std::size_t jobs)
{
    if (phi_max_values.empty() || traces.empty() || seeds_per_point == 0)
        throw ConfigError("sweep grid is empty");

    const std::size_t per_point = traces.size() * seeds_per_point;
    SweepTable table;
    table.kind = base.scheme.kind;
    table.runs.resize(phi_max_values.size() * per_point);

    detail::parallel_for(table.runs.size(), jobs, [&](std::size_t i) {
        const std::size_t p = i / per_point;
        const std::size_t tr = (i % per_point) / seeds_per_point;
        const std::size_t rep = i % seeds_per_point;
        RunConfig cfg = base;
        cfg.scheme.phi_max = phi_max_values[p];
        cfg.seed = run_seed(base.seed, traces[tr].id, p, rep);
        const auto r = replay(cfg, traces[tr]);

        auto &out = table.runs[i];
        out.phi_index = p;
        out.phi_max = phi_max_values[p];
        out.trace_id = traces[tr].id;
        out.repetition = rep;
        out.seed = cfg.seed;
        out.mean_rate = r.mean_rate;
        out.mean_delay = r.mean_delay;
        out.transmissions = r.transmissions;
        out.total_mb = r.total_mb;
    });

    for (std::size_t p = 0; p < phi_max_values.size(); ++p) {
        SweepPoint pt;
        pt.phi_max = phi_max_values[p];
        pt.runs = per_point;
        std::vector<double> rates, delays;
        double tx = 0.0;
        for (std::size_t j = 0; j < per_point; ++j) {
            const auto &run = table.runs[p * per_point + j];
            tx += static_cast<double>(run.transmissions);
            if (run.mean_rate) {
                rates.push_back(*run.mean_rate);
                delays.push_back(*run.mean_delay);
            }
        }
        pt.mean_transmissions = tx / static_cast<double>(per_point);
        pt.runs_with_transmissions = rates.size();
        if (rates.size() >= 2) {
            const auto rc = mean_ci(rates), dc = mean_ci(delays);
            pt.mean_rate = rc.mean;
            pt.rate_half_width = rc.half_width;
            pt.mean_delay = dc.mean;
            pt.delay_half_width = dc.half_width;
        } else if (rates.size() == 1) {
            pt.mean_rate = rates.front();
            pt.mean_delay = delays.front();
        }
        table.points.push_back(pt);
    }
    return table;
}

namespace {

std::string opt(const std::optional<double> &v) { return v ? detail::format_double(*v) : std::string(); }

} // namespace

std::string sweep_runs_csv(const SweepTable &table)
{
    using detail::format_double;
    std::string out = "scheme,phi_max,trace,repetition,seed,transmissions,total_mb,mean_rate_mbits,mean_delay_s\n";
    for (const auto &r : table.runs) {
        out += std::string(to_string(table.kind)) + ',' + format_double(r.phi_max) + ',' + r.trace_id + ',' +
               std::to_string(r.repetition) + ',' + std::to_string(r.seed) + ',' + std::to_string(r.transmissions) +
               ',' + format_double(r.total_mb) + ',' + opt(r.mean_rate) + ',' + opt(r.mean_delay) + '\n';
    }
    return out;
}

std::string sweep_points_csv(const SweepTable &table)
{
    using detail::format_double;
    std::string out = "scheme,phi_max,runs,runs_with_tx,mean_rate_mbits,rate_ci95,mean_delay_s,delay_ci95,mean_transmissions\n";
    for (const auto &p : table.points) {
        out += std::string(to_string(table.kind)) + ',' + format_double(p.phi_max) + ',' + std::to_string(p.runs) +
               ',' + std::to_string(p.runs_with_transmissions) + ',' + opt(p.mean_rate) + ',' +
               opt(p.rate_half_width) + ',' + opt(p.mean_delay) + ',' + opt(p.delay_half_width) + ',' +
               format_double(p.mean_transmissions) + '\n';
    }
    return out;
}

BenchmarkResult benchmark(const RunConfig &config, const Trace &trace, std::size_t repetitions)
{
    if (repetitions == 0)
        throw ConfigError("benchmark needs at least one repetition");
    BenchmarkResult b;
    for (std::size_t i = 0; i < repetitions; ++i) {
        const auto t = std::chrono::steady_clock::now();
        replay(config, trace);
        b.timings_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count());
    }
    b.mean_s = mean(b.timings_s);
    b.std_s = stddev(b.timings_s);
    return b;
}

} // namespace ddns
