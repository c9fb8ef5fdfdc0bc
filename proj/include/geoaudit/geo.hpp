#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace geoaudit {

/// Mean Earth radius in kilometres.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool is_valid() const noexcept;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
    /// Lexicographic on (lat, lon); the tie-break order for nearest-anchor queries.
    friend std::partial_ordering operator<=>(const GeoPoint&, const GeoPoint&) = default;
};

/// Throws Error("invalid_point") when lat/lon are non-finite or out of range.
GeoPoint make_point(double lat, double lon);

/// Great-circle distance in km on a sphere of radius kEarthRadiusKm.
double haversine(const GeoPoint& a, const GeoPoint& b) noexcept;

/// Point reached by travelling `distance_km` from `origin` along the initial
/// bearing `bearing_rad` (clockwise from north). Longitude wrapped to [-180, 180].
GeoPoint destination(const GeoPoint& origin, double bearing_rad, double distance_km) noexcept;

struct GeoPointHash {
    std::size_t operator()(const GeoPoint& p) const noexcept;
};

// ---------------------------------------------------------------------------
// Equal-angle grid. At resolution r the globe is split into 2^r rows of
// 180/2^r degrees latitude and 2^r columns of 360/2^r degrees longitude.
// Cells are half-open [lo, hi) except the last row/column, which also takes
// lat = 90 and lon = 180.

inline constexpr int kMaxGridResolution = 30;
inline constexpr int kDefaultGridResolution = 9;

struct CellId {
    int resolution = 0;
    std::uint64_t index = 0;

    friend bool operator==(const CellId&, const CellId&) = default;
    friend auto operator<=>(const CellId&, const CellId&) = default;
};

struct CellIdHash {
    std::size_t operator()(const CellId& c) const noexcept;
};

struct CellBounds {
    double lat_lo, lat_hi, lon_lo, lon_hi;

    bool contains(const GeoPoint& p) const noexcept;
};

std::uint64_t grid_side(int resolution);
std::uint64_t row_of(double lat, int resolution);
std::uint64_t col_of(double lon, int resolution);
double row_lat_lo(std::uint64_t row, int resolution);
double col_lon_lo(std::uint64_t col, int resolution);

CellId cell_of(const GeoPoint& p, int resolution);
CellId cell_at(std::uint64_t row, std::uint64_t col, int resolution);
CellBounds cell_bounds(const CellId& cell);
GeoPoint cell_center(const CellId& cell);

/// Text form "<resolution>/<index>".
std::string to_string(const CellId& cell);
CellId parse_cell_id(const std::string& text);

}  // namespace geoaudit
