#include <doctest.h>

#include <fstream>

#include "geoaudit/error.hpp"
#include "geoaudit/oracle.hpp"
#include "geoaudit/synth.hpp"
#include "support.hpp"

using namespace geoaudit;

namespace {

WorldConfig small_world(std::uint64_t seed) {
    WorldConfig c;
    c.seed = seed;
    c.countries[0].n_anchors = 80;
    c.countries[0].n_ranges = 800;
    c.countries[0].n_events = 4000;
    c.countries[0].n_bids = 100;
    return c;
}

AuditData load(const WorldFiles& f, const std::string& events = {}) {
    return load_audit_data({events.empty() ? f.events : events, f.snapshots_a, f.regions, f.urbanization},
                           kDefaultGridResolution);
}

void check_equivalent(const AuditData& data) {
    const auto run = run_audit(data, 3);
    const auto diffs = compare_reports(audit_json(oracle::audit(data)), audit_json(run.results));
    for (const auto& d : diffs) INFO(d);
    CHECK(diffs.empty());
    const auto ub = upper_bound_report(run.joined.samples, AnchorIndexSeries::from_series(data.series), data.regions, 2);
    const auto ub_diffs = compare_reports(upper_bound_json(oracle::upper_bound(data)), upper_bound_json(ub));
    for (const auto& d : ub_diffs) INFO(d);
    CHECK(ub_diffs.empty());
}

}  // namespace

TEST_CASE("oracle primitives agree with the library") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const auto a = testing::random_point(rng), b = testing::random_point(rng);
        CHECK(oracle::great_circle_km(a, b) == doctest::Approx(haversine(a, b)).epsilon(1e-9));
    }
    testing::TempDir dir;
    const auto w = generate_world(small_world(2), dir.path().string());
    const auto data = load(w.files);
    for (int i = 0; i < 2000; ++i) {
        const auto p = testing::random_point_in(rng, 35, 44, -10, 4);
        for (const auto& r : data.region_list) CHECK(oracle::polygon_contains(r, p) == region_contains(r, p));
    }
}

TEST_CASE("pipeline and oracle agree on seeded worlds") {
    for (std::uint64_t seed : {101u, 202u, 303u}) {
        CAPTURE(seed);
        testing::TempDir dir;
        auto c = small_world(seed);
        c.placement = seed == 202 ? AnchorPlacement::uniform : AnchorPlacement::clustered;
        c.snapshots = 1 + seed % 3;
        const auto w = generate_world(c, dir.path().string());
        check_equivalent(load(w.files));
    }
}

TEST_CASE("empty and single-event inputs") {
    testing::TempDir dir;
    const auto w = generate_world(small_world(4), dir.file("w"));
    const auto lines = testing::read_text(w.files.events);
    const auto header_end = lines.find('\n') + 1;

    const auto empty = dir.write("empty.csv", lines.substr(0, header_end));
    const auto e = load(w.files, empty);
    const auto run = run_audit(e);
    CHECK(run.results.matched == 0);
    CHECK_FALSE(run.results.density.has_value());
    CHECK_FALSE(run.results.stability.has_value());
    CHECK(run.results.precision.at(GroupDimension::none).groups.empty());
    check_equivalent(e);

    const auto one = dir.write("one.csv", lines.substr(0, lines.find('\n', header_end) + 1));
    const auto s = load(w.files, one);
    CHECK(s.ingest.events.size() == 1);
    check_equivalent(s);
}

TEST_CASE("comparison flags a perturbed value") {
    testing::TempDir dir;
    const auto w = generate_world(small_world(5), dir.path().string());
    const auto data = load(w.files);
    const auto expected = audit_json(oracle::audit(data));
    auto actual = audit_json(run_audit(data).results);
    CHECK(compare_reports(expected, actual).empty());
    actual["join"]["matched"] = actual["join"]["matched"].get<std::uint64_t>() + 1;
    CHECK(compare_reports(expected, actual).size() == 1);
}

TEST_CASE("the oracle refuses inputs beyond its scale") {
    testing::TempDir dir;
    const auto w = generate_world(small_world(6), dir.path().string());
    const auto data = load(w.files);
    CHECK_THROWS_AS(oracle::check_scale(data, {100, 1000}), Error);
    CHECK_THROWS_AS(oracle::audit(data, {100000, 3}), Error);
    CHECK_NOTHROW(oracle::check_scale(data));
}
