#include "geoaudit/geo.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "geoaudit/error.hpp"
#include "geoaudit/text.hpp"

namespace geoaudit {

namespace {

constexpr double deg2rad(double d) noexcept { return d * std::numbers::pi / 180.0; }
constexpr double rad2deg(double r) noexcept { return r * 180.0 / std::numbers::pi; }

void check_resolution(int r) {
    if (r < 0 || r > kMaxGridResolution)
        throw Error("bad_resolution", "grid resolution " + std::to_string(r) + " outside [0, " +
                                          std::to_string(kMaxGridResolution) + "]");
}

}  // namespace

bool GeoPoint::is_valid() const noexcept {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 &&
           lon <= 180.0;
}

GeoPoint make_point(double lat, double lon) {
    GeoPoint p{lat, lon};
    if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) throw Error("invalid_point", "lat out of range");
    if (!std::isfinite(lon) || lon < -180.0 || lon > 180.0) throw Error("invalid_point", "lon out of range");
    return p;
}

double haversine(const GeoPoint& a, const GeoPoint& b) noexcept {
    const double phi1 = deg2rad(a.lat);
    const double phi2 = deg2rad(b.lat);
    const double s_dphi = std::sin((phi2 - phi1) / 2.0);
    const double s_dlam = std::sin(deg2rad(b.lon - a.lon) / 2.0);
    double h = s_dphi * s_dphi + std::cos(phi1) * std::cos(phi2) * s_dlam * s_dlam;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

GeoPoint destination(const GeoPoint& origin, double bearing_rad, double distance_km) noexcept {
    const double delta = distance_km / kEarthRadiusKm;
    const double phi1 = deg2rad(origin.lat);
    const double lam1 = deg2rad(origin.lon);
    const double sin_phi2 =
        std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(bearing_rad);
    const double phi2 = std::asin(std::min(1.0, std::max(-1.0, sin_phi2)));
    const double y = std::sin(bearing_rad) * std::sin(delta) * std::cos(phi1);
    const double x = std::cos(delta) - std::sin(phi1) * sin_phi2;
    double lon = rad2deg(lam1 + std::atan2(y, x));
    lon = std::fmod(lon + 540.0, 360.0) - 180.0;
    return {rad2deg(phi2), lon};
}

std::size_t GeoPointHash::operator()(const GeoPoint& p) const noexcept {
    const auto a = std::bit_cast<std::uint64_t>(p.lat);
    const auto b = std::bit_cast<std::uint64_t>(p.lon);
    return std::hash<std::uint64_t>{}(a * 0x9e3779b97f4a7c15ULL ^ (b + 0x7f4a7c15ULL + (a << 6)));
}

std::size_t CellIdHash::operator()(const CellId& c) const noexcept {
    return std::hash<std::uint64_t>{}(c.index * 64u + static_cast<std::uint64_t>(c.resolution));
}

bool CellBounds::contains(const GeoPoint& p) const noexcept {
    const bool lat_ok = p.lat >= lat_lo && (p.lat < lat_hi || (lat_hi == 90.0 && p.lat == 90.0));
    const bool lon_ok = p.lon >= lon_lo && (p.lon < lon_hi || (lon_hi == 180.0 && p.lon == 180.0));
    return lat_ok && lon_ok;
}

std::uint64_t grid_side(int resolution) {
    check_resolution(resolution);
    return std::uint64_t{1} << resolution;
}

double row_lat_lo(std::uint64_t row, int resolution) {
    const double step = 180.0 / static_cast<double>(grid_side(resolution));
    return -90.0 + static_cast<double>(row) * step;
}

double col_lon_lo(std::uint64_t col, int resolution) {
    const double step = 360.0 / static_cast<double>(grid_side(resolution));
    return -180.0 + static_cast<double>(col) * step;
}

// The floor() estimate can be one off near a boundary; nudge it so the result
// agrees with the bounds reported by row_lat_lo/col_lon_lo.
std::uint64_t row_of(double lat, int resolution) {
    const std::uint64_t n = grid_side(resolution);
    const double step = 180.0 / static_cast<double>(n);
    double est = std::floor((lat + 90.0) / step);
    std::uint64_t row = est <= 0.0 ? 0 : std::min<std::uint64_t>(n - 1, static_cast<std::uint64_t>(est));
    while (row > 0 && lat < row_lat_lo(row, resolution)) --row;
    while (row + 1 < n && lat >= row_lat_lo(row + 1, resolution)) ++row;
    return row;
}

std::uint64_t col_of(double lon, int resolution) {
    const std::uint64_t n = grid_side(resolution);
    const double step = 360.0 / static_cast<double>(n);
    double est = std::floor((lon + 180.0) / step);
    std::uint64_t col = est <= 0.0 ? 0 : std::min<std::uint64_t>(n - 1, static_cast<std::uint64_t>(est));
    while (col > 0 && lon < col_lon_lo(col, resolution)) --col;
    while (col + 1 < n && lon >= col_lon_lo(col + 1, resolution)) ++col;
    return col;
}

CellId cell_at(std::uint64_t row, std::uint64_t col, int resolution) {
    return CellId{resolution, row * grid_side(resolution) + col};
}

CellId cell_of(const GeoPoint& p, int resolution) {
    return cell_at(row_of(p.lat, resolution), col_of(p.lon, resolution), resolution);
}

CellBounds cell_bounds(const CellId& cell) {
    const std::uint64_t n = grid_side(cell.resolution);
    const std::uint64_t row = cell.index / n;
    const std::uint64_t col = cell.index % n;
    return CellBounds{row_lat_lo(row, cell.resolution),
                      row + 1 == n ? 90.0 : row_lat_lo(row + 1, cell.resolution),
                      col_lon_lo(col, cell.resolution),
                      col + 1 == n ? 180.0 : col_lon_lo(col + 1, cell.resolution)};
}

GeoPoint cell_center(const CellId& cell) {
    const auto b = cell_bounds(cell);
    return {(b.lat_lo + b.lat_hi) / 2.0, (b.lon_lo + b.lon_hi) / 2.0};
}

std::string to_string(const CellId& cell) {
    return std::to_string(cell.resolution) + "/" + std::to_string(cell.index);
}

CellId parse_cell_id(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) throw Error("bad_cell_id", "cell id '" + s + "' is not <resolution>/<index>");
    const auto r = text::parse_int64(std::string_view(s).substr(0, slash));
    const auto idx = text::parse_uint64(std::string_view(s).substr(slash + 1));
    if (!r || !idx || *r < 0 || *r > kMaxGridResolution)
        throw Error("bad_cell_id", "cell id '" + s + "' is not <resolution>/<index>");
    const int res = static_cast<int>(*r);
    const std::uint64_t n = grid_side(res);
    if (*idx / n >= n) throw Error("bad_cell_id", "cell id '" + s + "' index out of range");
    return CellId{res, *idx};
}

}  // namespace geoaudit
