// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/derivation.hpp"
#include "ddns/engine.hpp"
#include "ddns/regression.hpp"
#include "ddns/schemes.hpp"
#include "ddns/trace.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ddns::cli {

/// Scheme fields a config file may override on top of the operator defaults.
struct SchemeOverrides
{
    std::optional<double> phi_min, phi_max, alpha, gamma, tau, t_min, t_max, evaluation_rate, period;
};

struct ProjectConfig
{
    std::uint64_t seed = 1;
    std::size_t jobs = 0;
    std::filesystem::path out = "out";

    std::vector<std::filesystem::path> traces;
    /// "<mno>/<direction>" -> model document.
    std::map<std::string, std::filesystem::path> models;
    std::optional<std::filesystem::path> map;

    std::optional<std::string> mno;
    std::optional<Direction> direction;
    /// Shared projection origin; defaults to the first trace's first fix.
    std::optional<GeoPoint> origin;

    SyntheticConfig synthetic;
    std::size_t synthetic_traces = 1;

    ForestParams forest;
    std::size_t cv_folds = 10;
    KernelConfig kernel;

    double map_cell_size = 25.0;
    double map_payload_mb = 1.0;

    std::optional<SchemeKind> scheme;
    SchemeOverrides scheme_overrides;

    std::vector<double> sweep_phi_max{5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
    std::vector<SchemeKind> sweep_schemes;
    std::size_t sweep_seeds = 10;

    double source_rate_kbps = 50.0;
    DelayMode delay_mode = DelayMode::HalfInterval;
    RateAggregation rate_aggregation = RateAggregation::PerTransmission;

    std::size_t bench_repetitions = 10;
};

ProjectConfig parse_project_config(std::string_view json_text);
ProjectConfig load_project_config(const std::filesystem::path &path);

std::string model_key(const std::string &mno, Direction direction);

/// Runs one subcommand. Errors are reported on `err` as a single JSON line and
/// mapped to the exit codes 2 (config), 3 (data) and 4 (model).
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace ddns::cli
