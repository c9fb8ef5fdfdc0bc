#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoaudit/geo.hpp"

namespace geoaudit {

/// Administrative levels, smallest (1, zip code) to largest (5, country).
inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 5;
inline constexpr int kLevelCount = kMaxLevel - kMinLevel + 1;

/// Closed ring: first vertex equals last vertex.
using Ring = std::vector<GeoPoint>;

/// rings[0] is the exterior ring, the rest are holes.
struct Polygon {
    std::vector<Ring> rings;
};

struct BoundingBox {
    double lat_lo, lat_hi, lon_lo, lon_hi;

    bool contains(const GeoPoint& p) const noexcept {
        return p.lat >= lat_lo && p.lat <= lat_hi && p.lon >= lon_lo && p.lon <= lon_hi;
    }
};

struct AdminRegion {
    std::string id;
    int level = kMinLevel;
    std::string country;
    std::vector<Polygon> polygons;
};

/// Throws Error("invalid_region") naming the region id on unclosed or short
/// rings, invalid vertices, empty geometry or a level outside 1..5.
void validate_region(const AdminRegion& region);

BoundingBox bounding_box(const Polygon& polygon);
BoundingBox bounding_box(const AdminRegion& region);

/// Even-odd ray cast towards +lon over every ring of every polygon. Edges are
/// half-open in latitude, so a vertex lying on the ray is counted once.
bool ring_crossings_odd(const Ring& ring, const GeoPoint& p) noexcept;
bool region_contains(const AdminRegion& region, const GeoPoint& p) noexcept;

using RegionHandle = std::uint32_t;

/// Per-level grid prefilter over a region store. Immutable once built.
class RegionIndex {
public:
    RegionIndex() = default;

    int resolution() const noexcept { return resolution_; }
    const std::vector<AdminRegion>& regions() const noexcept { return regions_; }
    const AdminRegion& region(RegionHandle h) const { return regions_.at(h); }
    bool empty() const noexcept { return regions_.empty(); }

    /// Candidate regions for a cell at the index resolution (possibly empty).
    std::span<const RegionHandle> candidates(int level, const CellId& cell) const;

    /// Number of (cell, region) entries for a level.
    std::size_t candidate_entry_count(int level) const;

    std::optional<RegionHandle> find(std::string_view id) const;
    std::vector<RegionHandle> regions_at_level(int level) const;

    friend RegionIndex build_region_index(std::vector<AdminRegion> regions, int resolution);

private:
    int resolution_ = kDefaultGridResolution;
    std::vector<AdminRegion> regions_;
    std::vector<BoundingBox> boxes_;
    std::array<std::unordered_map<std::uint64_t, std::vector<RegionHandle>>, kLevelCount> cells_;
    std::unordered_map<std::string, RegionHandle> by_id_;
};

/// Validates every region and lists each one under every grid cell its
/// polygon bounding boxes touch. Duplicate region ids are rejected.
RegionIndex build_region_index(std::vector<AdminRegion> regions, int resolution = kDefaultGridResolution);

/// The region of `level` containing `p`, or nothing. Throws
/// Error("ambiguous_region") if two regions of the level both contain `p`.
std::optional<RegionHandle> region_of(const RegionIndex& index, const GeoPoint& p, int level);

/// GeoJSON FeatureCollection with Polygon/MultiPolygon features whose
/// properties carry `id`, `level` and `country`. Positions are [lon, lat].
std::vector<AdminRegion> parse_regions_geojson(std::istream& in);
std::vector<AdminRegion> load_regions_file(const std::string& path);
std::string regions_to_geojson(std::span<const AdminRegion> regions);

}  // namespace geoaudit
