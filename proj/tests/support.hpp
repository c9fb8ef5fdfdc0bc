#pragma once

// Helpers shared by the test executables: scratch directories and small
// random generators for property checks.

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <unistd.h>

#include "geoaudit/geo.hpp"
#include "geoaudit/rng.hpp"

namespace testing {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("geoaudit-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

    std::string write(const std::string& name, const std::string& content) const {
        const auto p = path_ / name;
        std::filesystem::create_directories(p.parent_path());
        std::ofstream(p, std::ios::binary) << content;
        return p.string();
    }

private:
    std::filesystem::path path_;
};

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline geoaudit::GeoPoint random_point(geoaudit::Rng& rng) {
    // Uniform on the sphere.
    const double lat = std::asin(rng.uniform(-1.0, 1.0)) * 180.0 / std::numbers::pi;
    return {lat, rng.uniform(-180.0, 180.0)};
}

inline geoaudit::GeoPoint random_point_in(geoaudit::Rng& rng, double lat_lo, double lat_hi, double lon_lo,
                                          double lon_hi) {
    return {rng.uniform(lat_lo, lat_hi), rng.uniform(lon_lo, lon_hi)};
}

/// Central angle from unit vectors, atan2(|a x b|, a . b).
inline double vector_great_circle_km(const geoaudit::GeoPoint& a, const geoaudit::GeoPoint& b) {
    constexpr double k = std::numbers::pi / 180.0;
    auto unit = [&](const geoaudit::GeoPoint& p) {
        return std::array<double, 3>{std::cos(p.lat * k) * std::cos(p.lon * k), std::cos(p.lat * k) * std::sin(p.lon * k),
                                     std::sin(p.lat * k)};
    };
    const auto u = unit(a), v = unit(b);
    const std::array<double, 3> c{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    const double cross = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    return geoaudit::kEarthRadiusKm * std::atan2(cross, dot);
}

}  // namespace testing
