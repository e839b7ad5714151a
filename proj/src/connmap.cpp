// SPDX-License-Identifier: Apache-2.0

#include "ddns/connmap.hpp"

#include "ddns/error.hpp"
#include "text_util.hpp"

#include <cmath>

namespace ddns {

GridKey grid_key(const Vec2 &position, double cell_size)
{
    if (!(cell_size > 0.0))
        throw ConfigError("cell size must be > 0");
    if (!std::isfinite(position.x) || !std::isfinite(position.y))
        throw DataError("non-finite map position");
    return {static_cast<std::int64_t>(std::floor(position.x / cell_size)),
            static_cast<std::int64_t>(std::floor(position.y / cell_size))};
}

void CellAggregate::add(const FeatureVector &x)
{
    ++count;
    const double n = static_cast<double>(count);
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        mean[f] += (x[f] - mean[f]) / n;
}

ConnectivityMap::ConnectivityMap(double cell_size) : cell_size_(cell_size)
{
    if (!(cell_size > 0.0))
        throw ConfigError("cell size must be > 0");
}

void ConnectivityMap::require_mutable() const
{
    if (frozen_)
        throw ModelError("connectivity map is frozen");
}

void ConnectivityMap::set_origin(const GeoPoint &origin)
{
    require_mutable();
    origin_ = origin;
}

void ConnectivityMap::insert(const ContextSample &sample) { insert(sample.position, sample.features()); }

void ConnectivityMap::insert(const Vec2 &position, const FeatureVector &features)
{
    require_mutable();
    cells_[grid_key(position, cell_size_)].add(features);
}

void ConnectivityMap::build_prediction_layer(const RegressionForest &model, double payload_mb)
{
    require_mutable();
    if (cells_.empty())
        throw DataError("prediction layer needs a non-empty feature layer");
    if (model.feature_names() != feature_names())
        throw ModelError("model feature schema does not match the map's feature layer");
    if (!(payload_mb > 0.0))
        throw ConfigError("payload assumption must be > 0");

    std::map<GridKey, double> layer;
    for (const auto &[key, cell] : cells_) {
        FeatureVector x = cell.mean;
        x[kPayload] = payload_mb;
        layer.emplace(key, model.predict(x));
    }
    layers_[{model.metadata().mno, model.metadata().direction}] = std::move(layer);
}

std::optional<double> ConnectivityMap::query_rate(const Vec2 &position, const std::string &mno,
                                                  Direction direction) const
{
    auto lit = layers_.find({mno, direction});
    if (lit == layers_.end())
        return std::nullopt;
    auto it = lit->second.find(grid_key(position, cell_size_));
    if (it == lit->second.end())
        return std::nullopt;
    return it->second;
}

std::optional<CellAggregate> ConnectivityMap::query_features(const Vec2 &position) const
{
    auto it = cells_.find(grid_key(position, cell_size_));
    if (it == cells_.end())
        return std::nullopt;
    return it->second;
}

ConnectivityMap ConnectivityMap::from_parts(double cell_size, std::map<GridKey, CellAggregate> cells,
                                            std::map<LayerKey, std::map<GridKey, double>> layers)
{
    ConnectivityMap m(cell_size);
    for (const auto &[key, cell] : cells)
        if (cell.count == 0)
            throw DataError("map cell with zero count");
    for (const auto &[lk, layer] : layers)
        for (const auto &[key, v] : layer)
            if (!cells.contains(key))
                throw DataError("prediction layer entry without feature data");
    m.cells_ = std::move(cells);
    m.layers_ = std::move(layers);
    return m;
}

std::string ConnectivityMap::to_csv() const
{
    using detail::format_double;
    std::string out = "kx,ky,x_center,y_center,count";
    for (const auto &name : feature_names())
        out += ",mean_" + name;
    for (const auto &[lk, layer] : layers_)
        out += ",rate_" + lk.mno + "_" + to_string(lk.direction);
    out += '\n';
    for (const auto &[key, cell] : cells_) {
        out += std::to_string(key.kx) + ',' + std::to_string(key.ky) + ',' +
               format_double((static_cast<double>(key.kx) + 0.5) * cell_size_) + ',' +
               format_double((static_cast<double>(key.ky) + 0.5) * cell_size_) + ',' + std::to_string(cell.count);
        for (double v : cell.mean)
            out += ',' + format_double(v);
        for (const auto &[lk, layer] : layers_) {
            out += ',';
            if (auto it = layer.find(key); it != layer.end())
                out += format_double(it->second);
        }
        out += '\n';
    }
    return out;
}

} // namespace ddns
