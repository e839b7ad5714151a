// SPDX-License-Identifier: Apache-2.0

#include "ddns/model_io.hpp"

#include "ddns/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ddns {

using nlohmann::json;

namespace {

json features_json(const FeatureVector &v) { return json(std::vector<double>(v.begin(), v.end())); }

FeatureVector features_from(const json &j)
{
    if (!j.is_array() || j.size() != kNumFeatures)
        throw ModelError("expected an array of " + std::to_string(kNumFeatures) + " feature values");
    FeatureVector v{};
    for (std::size_t i = 0; i < kNumFeatures; ++i)
        v[i] = j[i].get<double>();
    return v;
}

json tree_json(const RegressionTree &tree)
{
    // Columnar node table keeps documents compact.
    json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
         value = json::array(), count = json::array(), gain = json::array();
    for (const auto &n : tree.nodes()) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
        count.push_back(n.count);
        gain.push_back(n.impurity_decrease);
    }
    return {{"max_depth", tree.max_depth()},
            {"feature", feature},
            {"threshold", threshold},
            {"left", left},
            {"right", right},
            {"value", value},
            {"count", count},
            {"impurity_decrease", gain}};
}

RegressionTree tree_from(const json &j)
{
    const auto &feature = j.at("feature");
    const std::size_t n = feature.size();
    for (const char *key : {"threshold", "left", "right", "value", "count", "impurity_decrease"})
        if (j.at(key).size() != n)
            throw ModelError(std::string("tree column '") + key + "' has the wrong length");
    std::vector<RegressionTree::Node> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto &node = nodes[i];
        node.feature = feature[i].get<int>();
        node.threshold = j["threshold"][i].get<double>();
        node.left = j["left"][i].get<int>();
        node.right = j["right"][i].get<int>();
        node.value = j["value"][i].get<double>();
        node.count = j["count"][i].get<std::size_t>();
        node.impurity_decrease = j["impurity_decrease"][i].get<double>();
    }
    return RegressionTree(std::move(nodes), j.at("max_depth").get<std::size_t>());
}

json forest_json(const RegressionForest &f)
{
    const auto &p = f.params();
    const auto &m = f.metadata();
    json trees = json::array();
    for (const auto &t : f.trees())
        trees.push_back(tree_json(t));
    return {{"params",
             {{"n_trees", p.n_trees},
              {"max_depth", p.max_depth},
              {"min_leaf", p.min_leaf},
              {"max_features", p.max_features},
              {"bootstrap", p.bootstrap}}},
            {"metadata",
             {{"mno", m.mno},
              {"direction", to_string(m.direction)},
              {"y_min", m.y_min},
              {"y_max", m.y_max},
              {"feature_min", features_json(m.feature_min)},
              {"feature_max", features_json(m.feature_max)},
              {"n_rows", m.n_rows},
              {"seed", m.seed}}},
            {"feature_names", f.feature_names()},
            {"trees", trees}};
}

RegressionForest forest_from(const json &j)
{
    ForestParams p;
    const auto &jp = j.at("params");
    p.n_trees = jp.at("n_trees").get<std::size_t>();
    p.max_depth = jp.at("max_depth").get<std::size_t>();
    p.min_leaf = jp.at("min_leaf").get<std::size_t>();
    p.max_features = jp.at("max_features").get<std::size_t>();
    p.bootstrap = jp.at("bootstrap").get<bool>();

    ForestMetadata m;
    const auto &jm = j.at("metadata");
    m.mno = jm.at("mno").get<std::string>();
    m.direction = parse_direction(jm.at("direction").get<std::string>());
    m.y_min = jm.at("y_min").get<double>();
    m.y_max = jm.at("y_max").get<double>();
    m.feature_min = features_from(jm.at("feature_min"));
    m.feature_max = features_from(jm.at("feature_max"));
    m.n_rows = jm.at("n_rows").get<std::size_t>();
    m.seed = jm.at("seed").get<std::uint64_t>();

    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    if (names.size() != kNumFeatures)
        throw ModelError("model feature schema has " + std::to_string(names.size()) + " entries");
    std::array<std::string, kNumFeatures> arr;
    std::copy(names.begin(), names.end(), arr.begin());

    std::vector<RegressionTree> trees;
    for (const auto &t : j.at("trees"))
        trees.push_back(tree_from(t));
    if (trees.size() != p.n_trees)
        throw ModelError("model declares " + std::to_string(p.n_trees) + " trees but stores " +
                         std::to_string(trees.size()));
    return RegressionForest(std::move(trees), p, std::move(m), std::move(arr));
}

json derivation_json(const DerivationModel &d)
{
    json j = {{"passthrough", d.is_passthrough()},
              {"clip", {{"lo", d.clip_range().lo}, {"hi", d.clip_range().hi}}}};
    if (!d.is_passthrough()) {
        const auto &gp = d.gp();
        json x = json::array(), y = json::array(), noise = json::array();
        for (const auto &p : gp.points()) {
            x.push_back(p.x);
            y.push_back(p.y);
            noise.push_back(p.noise);
        }
        j["gp"] = {{"length_scale", gp.hyper().length_scale},
                   {"signal_variance", gp.hyper().signal_variance},
                   {"noise_variance", gp.hyper().noise_variance},
                   {"prior_mean", gp.prior_mean()},
                   {"x", x},
                   {"y", y},
                   {"noise", noise}};
    }
    return j;
}

DerivationModel derivation_from(const json &j)
{
    const ClipRange clip{j.at("clip").at("lo").get<double>(), j.at("clip").at("hi").get<double>()};
    if (j.at("passthrough").get<bool>())
        return DerivationModel::passthrough(clip);
    const auto &g = j.at("gp");
    GpHyperparameters h{g.at("length_scale").get<double>(), g.at("signal_variance").get<double>(),
                        g.at("noise_variance").get<double>()};
    const auto &x = g.at("x"), &y = g.at("y"), &noise = g.at("noise");
    if (y.size() != x.size() || noise.size() != x.size())
        throw ModelError("derivation inducing point columns differ in length");
    std::vector<GpPoint> points(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        points[i] = {x[i].get<double>(), y[i].get<double>(), noise[i].get<double>()};
    return DerivationModel(Gp1d(std::move(points), h, g.at("prior_mean").get<double>()), clip);
}

json parse_document(std::string_view text, std::string_view format)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ModelError(std::string("malformed ") + std::string(format) + " document: " + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != format)
        throw ModelError("not a " + std::string(format) + " document");
    if (doc.value("version", 0) != kModelFormatVersion)
        throw ModelError("unsupported " + std::string(format) + " version " + doc.value("version", json(0)).dump());
    return doc;
}

template <class Fn> auto wrap_json_errors(Fn &&fn)
{
    try {
        return fn();
    } catch (const json::exception &e) {
        throw ModelError(std::string("invalid document: ") + e.what());
    }
}

} // namespace

std::string serialize_model(const ModelBundle &bundle)
{
    json doc = {{"format", "ddns-model"},
                {"version", kModelFormatVersion},
                {"forest", forest_json(bundle.forest)},
                {"derivation", derivation_json(bundle.derivation)}};
    if (bundle.summary) {
        doc["summary"] = {{"folds", bundle.summary->folds},
                          {"cv_r_squared", bundle.summary->cv_r_squared},
                          {"mdi", bundle.summary->mdi}};
    }
    return doc.dump() + '\n';
}

ModelBundle parse_model(std::string_view text)
{
    const json doc = parse_document(text, "ddns-model");
    return wrap_json_errors([&] {
        ModelBundle b{forest_from(doc.at("forest")), derivation_from(doc.at("derivation")), std::nullopt};
        if (doc.contains("summary")) {
            const auto &s = doc["summary"];
            TrainingSummary ts;
            ts.folds = s.at("folds").get<std::size_t>();
            ts.cv_r_squared = s.at("cv_r_squared").get<double>();
            ts.mdi = features_from(s.at("mdi"));
            b.summary = ts;
        }
        return b;
    });
}

void save_model(const ModelBundle &bundle, const std::filesystem::path &path)
{
    write_text_file(path, serialize_model(bundle));
}

ModelBundle load_model(const std::filesystem::path &path) { return parse_model(read_text_file(path)); }

std::string serialize_map(const ConnectivityMap &map)
{
    json cells = json::array();
    for (const auto &[key, cell] : map.cells())
        cells.push_back({{"kx", key.kx}, {"ky", key.ky}, {"count", cell.count}, {"mean", features_json(cell.mean)}});
    json layers = json::array();
    for (const auto &[lk, layer] : map.layers()) {
        json entries = json::array();
        for (const auto &[key, v] : layer)
            entries.push_back({key.kx, key.ky, v});
        layers.push_back({{"mno", lk.mno}, {"direction", to_string(lk.direction)}, {"cells", entries}});
    }
    json doc = {{"format", "ddns-map"},
                {"version", kModelFormatVersion},
                {"cell_size", map.cell_size()},
                {"origin", map.origin() ? json{map.origin()->lat, map.origin()->lon} : json(nullptr)},
                {"feature_names", feature_names()},
                {"cells", cells},
                {"layers", layers}};
    return doc.dump() + '\n';
}

ConnectivityMap parse_map(std::string_view text)
{
    const json doc = parse_document(text, "ddns-map");
    return wrap_json_errors([&] {
        const auto names = doc.at("feature_names").get<std::vector<std::string>>();
        if (!std::equal(names.begin(), names.end(), feature_names().begin(), feature_names().end()))
            throw ModelError("map feature schema does not match");
        std::map<GridKey, CellAggregate> cells;
        for (const auto &c : doc.at("cells")) {
            CellAggregate agg;
            agg.count = c.at("count").get<std::size_t>();
            agg.mean = features_from(c.at("mean"));
            cells[{c.at("kx").get<std::int64_t>(), c.at("ky").get<std::int64_t>()}] = agg;
        }
        std::map<LayerKey, std::map<GridKey, double>> layers;
        for (const auto &l : doc.at("layers")) {
            auto &layer = layers[{l.at("mno").get<std::string>(),
                                  parse_direction(l.at("direction").get<std::string>())}];
            for (const auto &e : l.at("cells"))
                layer[{e.at(0).get<std::int64_t>(), e.at(1).get<std::int64_t>()}] = e.at(2).get<double>();
        }
        auto map = ConnectivityMap::from_parts(doc.at("cell_size").get<double>(), std::move(cells), std::move(layers));
        if (const auto &o = doc.at("origin"); !o.is_null())
            map.set_origin({o.at(0).get<double>(), o.at(1).get<double>()});
        map.freeze();
        return map;
    });
}

void save_map(const ConnectivityMap &map, const std::filesystem::path &path)
{
    write_text_file(path, serialize_map(map));
}

ConnectivityMap load_map(const std::filesystem::path &path) { return parse_map(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path &path, std::string_view text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw DataError("write to '" + path.string() + "' failed");
}

} // namespace ddns
