#include "geoaudit/regions.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "geoaudit/error.hpp"

namespace geoaudit {

namespace {

[[noreturn]] void invalid(const AdminRegion& r, const std::string& what) {
    throw Error("invalid_region", "region '" + r.id + "': " + what);
}

std::size_t level_slot(int level) {
    if (level < kMinLevel || level > kMaxLevel)
        throw Error("bad_level", "administrative level " + std::to_string(level) + " outside 1..5");
    return static_cast<std::size_t>(level - kMinLevel);
}

}  // namespace

void validate_region(const AdminRegion& r) {
    if (r.id.empty()) throw Error("invalid_region", "region with empty id");
    if (r.level < kMinLevel || r.level > kMaxLevel) invalid(r, "level " + std::to_string(r.level) + " outside 1..5");
    if (r.polygons.empty()) invalid(r, "no polygons");
    for (const auto& poly : r.polygons) {
        if (poly.rings.empty()) invalid(r, "polygon without rings");
        for (const auto& ring : poly.rings) {
            if (ring.size() < 4) invalid(r, "ring with fewer than 4 vertices");
            if (ring.front() != ring.back()) invalid(r, "unclosed ring");
            for (const auto& v : ring)
                if (!v.is_valid()) invalid(r, "vertex out of range");
        }
    }
}

BoundingBox bounding_box(const Polygon& polygon) {
    BoundingBox b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& v : polygon.rings.at(0)) {
        b.lat_lo = std::min(b.lat_lo, v.lat);
        b.lat_hi = std::max(b.lat_hi, v.lat);
        b.lon_lo = std::min(b.lon_lo, v.lon);
        b.lon_hi = std::max(b.lon_hi, v.lon);
    }
    return b;
}

BoundingBox bounding_box(const AdminRegion& region) {
    BoundingBox b = bounding_box(region.polygons.at(0));
    for (const auto& poly : region.polygons) {
        const auto pb = bounding_box(poly);
        b.lat_lo = std::min(b.lat_lo, pb.lat_lo);
        b.lat_hi = std::max(b.lat_hi, pb.lat_hi);
        b.lon_lo = std::min(b.lon_lo, pb.lon_lo);
        b.lon_hi = std::max(b.lon_hi, pb.lon_hi);
    }
    return b;
}

bool ring_crossings_odd(const Ring& ring, const GeoPoint& p) noexcept {
    bool odd = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const GeoPoint& a = ring[i];
        const GeoPoint& b = ring[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if (p.lon < x) odd = !odd;
        }
    }
    return odd;
}

bool region_contains(const AdminRegion& region, const GeoPoint& p) noexcept {
    bool inside = false;
    for (const auto& poly : region.polygons)
        for (const auto& ring : poly.rings)
            if (ring_crossings_odd(ring, p)) inside = !inside;
    return inside;
}

std::span<const RegionHandle> RegionIndex::candidates(int level, const CellId& cell) const {
    const auto& m = cells_[level_slot(level)];
    const auto it = m.find(cell.index);
    if (it == m.end()) return {};
    return it->second;
}

std::size_t RegionIndex::candidate_entry_count(int level) const {
    std::size_t n = 0;
    for (const auto& [cell, handles] : cells_[level_slot(level)]) n += handles.size();
    return n;
}

std::optional<RegionHandle> RegionIndex::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::vector<RegionHandle> RegionIndex::regions_at_level(int level) const {
    level_slot(level);
    std::vector<RegionHandle> out;
    for (RegionHandle h = 0; h < regions_.size(); ++h)
        if (regions_[h].level == level) out.push_back(h);
    return out;
}

RegionIndex build_region_index(std::vector<AdminRegion> regions, int resolution) {
    grid_side(resolution);  // range check
    RegionIndex index;
    index.resolution_ = resolution;
    index.regions_ = std::move(regions);
    index.boxes_.reserve(index.regions_.size());
    for (RegionHandle h = 0; h < index.regions_.size(); ++h) {
        const auto& region = index.regions_[h];
        validate_region(region);
        if (!index.by_id_.emplace(region.id, h).second)
            throw Error("invalid_region", "duplicate region id '" + region.id + "'");
        index.boxes_.push_back(bounding_box(region));
        auto& cells = index.cells_[level_slot(region.level)];
        for (const auto& poly : region.polygons) {
            const auto box = bounding_box(poly);
            const auto r0 = row_of(box.lat_lo, resolution), r1 = row_of(box.lat_hi, resolution);
            const auto c0 = col_of(box.lon_lo, resolution), c1 = col_of(box.lon_hi, resolution);
            for (auto row = r0; row <= r1; ++row) {
                for (auto col = c0; col <= c1; ++col) {
                    auto& list = cells[cell_at(row, col, resolution).index];
                    if (list.empty() || list.back() != h) list.push_back(h);
                }
            }
        }
    }
    return index;
}

std::optional<RegionHandle> region_of(const RegionIndex& index, const GeoPoint& p, int level) {
    std::optional<RegionHandle> found;
    for (const RegionHandle h : index.candidates(level, cell_of(p, index.resolution()))) {
        if (!region_contains(index.region(h), p)) continue;
        if (found)
            throw Error("ambiguous_region", "point (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) +
                                                ") lies in both '" + index.region(*found).id + "' and '" +
                                                index.region(h).id + "' at level " + std::to_string(level));
        found = h;
    }
    return found;
}

// ---------------------------------------------------------------------------
// GeoJSON

namespace {

using nlohmann::json;

Ring parse_ring(const json& coords, const std::string& id) {
    if (!coords.is_array()) throw Error("invalid_region", "region '" + id + "': ring is not an array");
    Ring ring;
    ring.reserve(coords.size());
    for (const auto& pos : coords) {
        if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
            throw Error("invalid_region", "region '" + id + "': bad position");
        ring.push_back(GeoPoint{pos[1].get<double>(), pos[0].get<double>()});
    }
    return ring;
}

Polygon parse_polygon(const json& coords, const std::string& id) {
    if (!coords.is_array()) throw Error("invalid_region", "region '" + id + "': polygon is not an array");
    Polygon poly;
    for (const auto& ring : coords) poly.rings.push_back(parse_ring(ring, id));
    return poly;
}

json ring_json(const Ring& ring) {
    json arr = json::array();
    for (const auto& v : ring) arr.push_back(json::array({v.lon, v.lat}));
    return arr;
}

}  // namespace

std::vector<AdminRegion> parse_regions_geojson(std::istream& in) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("parse", std::string("regions GeoJSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array())
        throw Error("parse", "regions GeoJSON: expected a FeatureCollection");

    std::vector<AdminRegion> out;
    out.reserve(doc["features"].size());
    for (const auto& f : doc["features"]) {
        const auto& props = f.value("properties", json::object());
        AdminRegion r;
        if (props.contains("id") && props["id"].is_string())
            r.id = props["id"].get<std::string>();
        else if (props.contains("id") && props["id"].is_number_integer())
            r.id = std::to_string(props["id"].get<long long>());
        else
            throw Error("invalid_region", "feature without string or integer 'id' property");
        if (!props.contains("level") || !props["level"].is_number_integer())
            throw Error("invalid_region", "region '" + r.id + "': missing integer 'level'");
        r.level = props["level"].get<int>();
        if (!props.contains("country") || !props["country"].is_string())
            throw Error("invalid_region", "region '" + r.id + "': missing 'country'");
        r.country = props["country"].get<std::string>();

        const auto& geom = f.value("geometry", json::object());
        const std::string type = geom.value("type", "");
        if (!geom.contains("coordinates")) throw Error("invalid_region", "region '" + r.id + "': no coordinates");
        if (type == "Polygon") {
            r.polygons.push_back(parse_polygon(geom["coordinates"], r.id));
        } else if (type == "MultiPolygon") {
            for (const auto& p : geom["coordinates"]) r.polygons.push_back(parse_polygon(p, r.id));
        } else {
            throw Error("invalid_region", "region '" + r.id + "': unsupported geometry '" + type + "'");
        }
        validate_region(r);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<AdminRegion> load_regions_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing_input", "cannot open regions file '" + path + "'");
    return parse_regions_geojson(in);
}

std::string regions_to_geojson(std::span<const AdminRegion> regions) {
    json features = json::array();
    for (const auto& r : regions) {
        json geometry;
        if (r.polygons.size() == 1) {
            json rings = json::array();
            for (const auto& ring : r.polygons[0].rings) rings.push_back(ring_json(ring));
            geometry = {{"type", "Polygon"}, {"coordinates", rings}};
        } else {
            json polys = json::array();
            for (const auto& poly : r.polygons) {
                json rings = json::array();
                for (const auto& ring : poly.rings) rings.push_back(ring_json(ring));
                polys.push_back(rings);
            }
            geometry = {{"type", "MultiPolygon"}, {"coordinates", polys}};
        }
        features.push_back({{"type", "Feature"},
                            {"properties", {{"id", r.id}, {"level", r.level}, {"country", r.country}}},
                            {"geometry", geometry}});
    }
    return json{{"type", "FeatureCollection"}, {"features", features}}.dump() + "\n";
}

}  // namespace geoaudit
