// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddns/regression.hpp"
#include "ddns/trace.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace ddns {

struct GridKey
{
    std::int64_t kx = 0;
    std::int64_t ky = 0;
    auto operator<=>(const GridKey &) const = default;
};

/// Componentwise floor(position / cell_size).
GridKey grid_key(const Vec2 &position, double cell_size);

struct CellAggregate
{
    std::size_t count = 0;
    FeatureVector mean{};

    void add(const FeatureVector &x);
    bool operator==(const CellAggregate &) const = default;
};

struct LayerKey
{
    std::string mno;
    Direction direction = Direction::Uplink;
    auto operator<=>(const LayerKey &) const = default;
};

/// Geospatial grid with a feature layer (running means of the nine model
/// inputs) and per-operator prediction layers derived from it.
class ConnectivityMap
{
public:
    explicit ConnectivityMap(double cell_size = 25.0);

    double cell_size() const { return cell_size_; }

    /// Geographic origin of the planar frame the positions are expressed in.
    const std::optional<GeoPoint> &origin() const { return origin_; }
    void set_origin(const GeoPoint &origin);

    void insert(const ContextSample &sample);
    void insert(const Vec2 &position, const FeatureVector &features);

    /// Replaces the layer for the model's (mno, direction).
    void build_prediction_layer(const RegressionForest &model, double payload_mb);

    /// Blocks further inserts and layer builds.
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    std::optional<double> query_rate(const Vec2 &position, const std::string &mno, Direction direction) const;
    std::optional<CellAggregate> query_features(const Vec2 &position) const;

    const std::map<GridKey, CellAggregate> &cells() const { return cells_; }
    const std::map<LayerKey, std::map<GridKey, double>> &layers() const { return layers_; }

    /// Restores a persisted map.
    static ConnectivityMap from_parts(double cell_size, std::map<GridKey, CellAggregate> cells,
                                      std::map<LayerKey, std::map<GridKey, double>> layers);

    /// Per-cell table for plotting heat layers.
    std::string to_csv() const;

    bool operator==(const ConnectivityMap &) const = default;

private:
    void require_mutable() const;

    double cell_size_;
    std::optional<GeoPoint> origin_;
    std::map<GridKey, CellAggregate> cells_;
    std::map<LayerKey, std::map<GridKey, double>> layers_;
    bool frozen_ = false;
};

} // namespace ddns
