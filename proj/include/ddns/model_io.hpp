// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/connmap.hpp"
#include "ddns/derivation.hpp"
#include "ddns/regression.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace ddns {

inline constexpr int kModelFormatVersion = 1;

struct TrainingSummary
{
    std::size_t folds = 0;
    double cv_r_squared = 0.0;
    std::array<double, kNumFeatures> mdi{};
};

/// Forest and derivation model for one (operator, direction) pair.
struct ModelBundle
{
    RegressionForest forest;
    DerivationModel derivation;
    std::optional<TrainingSummary> summary;
};

/// JSON document with sorted keys; doubles round-trip exactly.
std::string serialize_model(const ModelBundle &bundle);
ModelBundle parse_model(std::string_view text);
void save_model(const ModelBundle &bundle, const std::filesystem::path &path);
ModelBundle load_model(const std::filesystem::path &path);

std::string serialize_map(const ConnectivityMap &map);
ConnectivityMap parse_map(std::string_view text);
void save_map(const ConnectivityMap &map, const std::filesystem::path &path);
ConnectivityMap load_map(const std::filesystem::path &path);

std::string read_text_file(const std::filesystem::path &path);
void write_text_file(const std::filesystem::path &path, std::string_view text);

} // namespace ddns
