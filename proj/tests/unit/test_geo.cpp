#include <doctest.h>

#include <cmath>

#include "geoaudit/error.hpp"
#include "geoaudit/geo.hpp"
#include "support.hpp"

using namespace geoaudit;

TEST_CASE("haversine of identical points is zero") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto p = testing::random_point(rng);
        CHECK(haversine(p, p) == 0.0);
    }
}

TEST_CASE("haversine is symmetric bit for bit") {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const auto a = testing::random_point(rng);
        const auto b = testing::random_point(rng);
        CHECK(haversine(a, b) == haversine(b, a));
    }
}

TEST_CASE("haversine agrees with the vector-form great circle") {
    Rng rng(3);
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto a = testing::random_point(rng);
        const auto b = testing::random_point(rng);
        const double ref = testing::vector_great_circle_km(a, b);
        if (ref <= 1.0) continue;
        CHECK(std::abs(haversine(a, b) - ref) / ref < 1e-9);
        ++checked;
    }
    CHECK(checked > 1900);
}

TEST_CASE("haversine known values") {
    // A quarter meridian and half the equator.
    const double quarter = kEarthRadiusKm * std::numbers::pi / 2.0;
    CHECK(haversine({0, 0}, {90, 0}) == doctest::Approx(quarter).epsilon(1e-12));
    CHECK(haversine({0, 0}, {0, 180}) == doctest::Approx(2 * quarter).epsilon(1e-12));
    CHECK(haversine({0, 179.5}, {0, -179.5}) == doctest::Approx(kEarthRadiusKm * std::numbers::pi / 180.0).epsilon(1e-9));
    // One degree of latitude.
    CHECK(haversine({40, -3}, {41, -3}) == doctest::Approx(111.19508).epsilon(1e-6));
}

TEST_CASE("haversine stays finite for antipodal points") {
    const double d = haversine({10, 20}, {-10, -160});
    CHECK(std::isfinite(d));
    // The haversine form loses about half the digits next to the antipode.
    CHECK(d == doctest::Approx(kEarthRadiusKm * std::numbers::pi).epsilon(1e-7));
}

TEST_CASE("destination travels the requested distance") {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        GeoPoint o{rng.uniform(-80, 80), rng.uniform(-180, 180)};
        const double km = rng.uniform(0.01, 3000.0);
        const auto p = destination(o, rng.uniform(0, 2 * std::numbers::pi), km);
        CHECK(p.is_valid());
        CHECK(haversine(o, p) == doctest::Approx(km).epsilon(1e-7));
    }
}

TEST_CASE("make_point rejects invalid coordinates") {
    CHECK_NOTHROW(make_point(90, 180));
    CHECK_NOTHROW(make_point(-90, -180));
    CHECK_THROWS_AS(make_point(90.0001, 0), Error);
    CHECK_THROWS_AS(make_point(0, -180.5), Error);
    CHECK_THROWS_AS(make_point(std::nan(""), 0), Error);
    CHECK_THROWS_AS(make_point(0, INFINITY), Error);
    try {
        make_point(100, 0);
    } catch (const Error& e) {
        CHECK(e.code() == "invalid_point");
    }
}

TEST_CASE("cell_of agrees with recomputed cell bounds") {
    Rng rng(5);
    for (int r : {0, 1, 5, 9, 16, 30}) {
        for (int i = 0; i < 300; ++i) {
            const auto p = testing::random_point(rng);
            const auto c = cell_of(p, r);
            CHECK(c.resolution == r);
            CHECK(c.index < grid_side(r) * grid_side(r));
            CHECK(cell_bounds(c).contains(p));
        }
    }
}

TEST_CASE("cell edges belong to the upper cell except at the poles and antimeridian") {
    const int r = 3;  // 22.5 by 45 degree cells
    const auto a = cell_of({0.0, 0.0}, r);
    CHECK(cell_bounds(a).lat_lo == 0.0);
    CHECK(cell_bounds(a).lon_lo == 0.0);
    const auto top = cell_of({90.0, 180.0}, r);
    CHECK(top == cell_at(grid_side(r) - 1, grid_side(r) - 1, r));
    const auto bottom = cell_of({-90.0, -180.0}, r);
    CHECK(bottom == cell_at(0, 0, r));
}

TEST_CASE("cell ids round-trip through text") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        const auto c = cell_of(testing::random_point(rng), static_cast<int>(rng.below(31)));
        CHECK(parse_cell_id(to_string(c)) == c);
    }
    CHECK(to_string(CellId{9, 1234}) == "9/1234");
}

TEST_CASE("malformed cell ids are rejected") {
    CHECK_THROWS_AS(parse_cell_id("9-12"), Error);
    CHECK_THROWS_AS(parse_cell_id("x/12"), Error);
    CHECK_THROWS_AS(parse_cell_id("31/0"), Error);
    CHECK_THROWS_AS(parse_cell_id("2/16"), Error);
    CHECK_NOTHROW(parse_cell_id("2/15"));
}

TEST_CASE("cell centre lies in its own cell") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const auto c = cell_of(testing::random_point(rng), 9);
        CHECK(cell_of(cell_center(c), 9) == c);
    }
}

TEST_CASE("grid resolution out of range is rejected") {
    CHECK_THROWS_AS(cell_of({0, 0}, -1), Error);
    CHECK_THROWS_AS(cell_of({0, 0}, kMaxGridResolution + 1), Error);
}
