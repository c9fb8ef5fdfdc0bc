#include <doctest.h>

#include <set>
#include <sstream>

#include "geoaudit/error.hpp"
#include "geoaudit/ip_space.hpp"
#include "support.hpp"

using namespace geoaudit;

namespace {

IpAddress ip(const char* s) { return parse_ip(s); }

// Random non-overlapping ranges with gaps, in shuffled order.
std::vector<IpRange> random_ranges(Rng& rng, std::size_t n, std::size_t n_anchors) {
    std::vector<GeoPoint> anchors;
    for (std::size_t i = 0; i < n_anchors; ++i) anchors.push_back({rng.uniform(-60, 60), rng.uniform(-170, 170)});
    std::vector<IpRange> out;
    std::uint32_t cursor = static_cast<std::uint32_t>(rng.below(1000));
    for (std::size_t i = 0; i < n; ++i) {
        cursor += static_cast<std::uint32_t>(rng.below(3) * rng.below(50));
        const auto size = 1 + static_cast<std::uint32_t>(rng.below(300));
        out.push_back({IpAddress{cursor}, IpAddress{cursor + size - 1}, anchors[rng.below(n_anchors)],
                       rng.bernoulli(0.5) ? ConnType::fixed : ConnType::cellular});
        cursor += size;
    }
    for (std::size_t i = 0; i + 1 < out.size(); ++i) std::swap(out[i], out[i + rng.below(out.size() - i)]);
    return out;
}

const IpRange* linear_lookup(const std::vector<IpRange>& ranges, IpAddress a) {
    for (const auto& r : ranges)
        if (r.start.value <= a.value && a.value <= r.end.value) return &r;
    return nullptr;
}

}  // namespace

TEST_CASE("IPv4 parsing and printing") {
    CHECK(ip("0.0.0.0").value == 0u);
    CHECK(ip("255.255.255.255").value == 0xFFFFFFFFu);
    CHECK(ip("10.1.2.3").value == 0x0A010203u);
    CHECK(to_string(IpAddress{0x0A010203u}) == "10.1.2.3");
    for (const char* bad : {"", "1.2.3", "1.2.3.4.5", "256.0.0.1", "1..2.3", "a.b.c.d", "1.2.3.-4", "1.2.3.4 x"})
        CHECK_THROWS_AS(parse_ip(bad), Error);
}

TEST_CASE("IPv6 input is rejected with its own code") {
    try {
        parse_ip("2001:db8::1");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == "ipv6_unsupported");
    }
}

TEST_CASE("lookup matches a linear scan") {
    Rng rng(21);
    for (int world = 0; world < 20; ++world) {
        const auto ranges = random_ranges(rng, 1 + rng.below(400), 1 + rng.below(40));
        const GeoIpSnapshot snap(ranges, {0, 10}, "p");
        const std::uint32_t hi = snap.ranges().back().end.value + 100;
        for (int q = 0; q < 500; ++q) {
            const IpAddress a{static_cast<std::uint32_t>(rng.below(hi))};
            const IpRange* expected = linear_lookup(ranges, a);
            const IpRange* got = snap.lookup(a);
            REQUIRE((expected == nullptr) == (got == nullptr));
            if (got) {
                CHECK(got->start == expected->start);
                CHECK(got->anchor == expected->anchor);
            }
        }
        // Edges of every range resolve to that range.
        for (const auto& r : snap.ranges()) {
            CHECK(snap.lookup(r.start)->start == r.start);
            CHECK(snap.lookup(r.end)->start == r.start);
        }
    }
}

TEST_CASE("lookup at the ends of the address space") {
    const GeoIpSnapshot snap({{IpAddress{0}, IpAddress{0}, {1, 1}, ConnType::fixed},
                              {IpAddress{0xFFFFFFFFu}, IpAddress{0xFFFFFFFFu}, {2, 2}, ConnType::fixed}},
                             {0, 1}, "p");
    CHECK(snap.lookup(IpAddress{0})->anchor == GeoPoint{1, 1});
    CHECK(snap.lookup(IpAddress{0xFFFFFFFFu})->anchor == GeoPoint{2, 2});
    CHECK(snap.lookup(IpAddress{5}) == nullptr);
}

TEST_CASE("overlapping ranges are rejected naming both") {
    std::istringstream in(std::string(kSnapshotHeader) +
                          "\n10.0.0.0,10.0.0.255,1,1,fixed\n11.0.0.0,11.0.0.9,1,1,fixed\n10.0.0.128,10.0.1.0,2,2,cellular\n");
    try {
        parse_snapshot(in, {0, 1});
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == "overlap");
        const std::string msg = e.what();
        CHECK(msg.find("10.0.0.0-10.0.0.255") != std::string::npos);
        CHECK(msg.find("10.0.0.128-10.0.1.0") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
    }
    CHECK_THROWS_AS(GeoIpSnapshot({{ip("1.0.0.0"), ip("1.0.0.5"), {0, 0}, ConnType::fixed},
                                   {ip("1.0.0.5"), ip("1.0.0.9"), {0, 0}, ConnType::fixed}},
                                  {0, 1}, "p"),
                    Error);
}

TEST_CASE("snapshot parse errors carry line numbers") {
    auto line_of = [](const std::string& body) -> std::size_t {
        std::istringstream in(std::string(kSnapshotHeader) + "\n" + body);
        try {
            parse_snapshot(in, {0, 1});
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("1.0.0.0,1.0.0.1,1,1,fixed\n1.0.0.9,1.0.0.2,1,1,fixed\n") == 3);
    CHECK(line_of("1.0.0.0,1.0.0.1,91,1,fixed\n") == 2);
    CHECK(line_of("1.0.0.0,1.0.0.1,1,1,satellite\n") == 2);
    CHECK(line_of("1.0.0.0,1.0.0.1,1,1\n") == 2);
    CHECK(line_of("::1,::2,1,1,fixed\n") == 2);
    std::istringstream bad_header("a,b\n");
    CHECK_THROWS_AS(parse_snapshot(bad_header, {0, 1}), ParseError);
}

TEST_CASE("bad windows are rejected") {
    CHECK_THROWS_AS(GeoIpSnapshot({}, {5, 5}, "p"), Error);
    CHECK_THROWS_AS(GeoIpSnapshot({}, {6, 5}, "p"), Error);
}

TEST_CASE("serialize and parse round-trip") {
    Rng rng(22);
    const auto ranges = random_ranges(rng, 300, 30);
    const GeoIpSnapshot snap(ranges, {100, 200}, "p");
    const auto text = serialize_snapshot(snap);
    std::istringstream in(text);
    const auto again = parse_snapshot(in, {100, 200}, "p");
    REQUIRE(again.size() == snap.size());
    for (std::size_t i = 0; i < snap.size(); ++i) {
        CHECK(again.ranges()[i].start == snap.ranges()[i].start);
        CHECK(again.ranges()[i].end == snap.ranges()[i].end);
        CHECK(again.ranges()[i].anchor == snap.ranges()[i].anchor);
        CHECK(again.ranges()[i].conn_type == snap.ranges()[i].conn_type);
    }
    CHECK(serialize_snapshot(again) == text);
}

TEST_CASE("anchor extraction matches naive dedup") {
    Rng rng(23);
    for (int world = 0; world < 10; ++world) {
        const auto ranges = random_ranges(rng, 1 + rng.below(500), 1 + rng.below(60));
        const GeoIpSnapshot snap(ranges, {0, 1}, "p");
        const auto set = extract_anchors(snap);
        std::vector<GeoPoint> naive;
        for (const auto& r : ranges)
            if (std::find(naive.begin(), naive.end(), r.anchor) == naive.end()) naive.push_back(r.anchor);
        CHECK(set.anchors.size() == naive.size());
        CHECK(set.range_count == ranges.size());
        CHECK(std::is_sorted(set.anchors.begin(), set.anchors.end()));
        for (const auto& a : naive) CHECK(set.contains(a));
        CHECK(set.reuse_factor() == doctest::Approx(double(ranges.size()) / double(naive.size())));
    }
}

TEST_CASE("one anchor shared by every range gives reuse equal to the range count") {
    std::vector<IpRange> ranges;
    for (std::uint32_t i = 0; i < 37; ++i) ranges.push_back({IpAddress{i * 10}, IpAddress{i * 10 + 5}, {40, -3}, ConnType::fixed});
    const auto set = extract_anchors(GeoIpSnapshot(ranges, {0, 1}, "p"));
    CHECK(set.anchors.size() == 1);
    CHECK(set.reuse_factor() == 37.0);
}

TEST_CASE("anchors that differ in the last bit stay distinct") {
    const double lat = 40.0;
    const double next = std::nextafter(lat, 90.0);
    const auto set = extract_anchors(GeoIpSnapshot(
        {{IpAddress{0}, IpAddress{1}, {lat, 0}, ConnType::fixed}, {IpAddress{2}, IpAddress{3}, {next, 0}, ConnType::fixed}},
        {0, 1}, "p"));
    CHECK(set.anchors.size() == 2);
}

TEST_CASE("empty snapshot has no anchor set") {
    CHECK_THROWS_AS(extract_anchors(GeoIpSnapshot({}, {0, 1}, "p")), Error);
}

TEST_CASE("series picks the covering snapshot and reports the nearest window otherwise") {
    std::vector<GeoIpSnapshot> snaps;
    snaps.emplace_back(std::vector<IpRange>{{IpAddress{0}, IpAddress{9}, {1, 1}, ConnType::fixed}}, TimeWindow{200, 300}, "p");
    snaps.emplace_back(std::vector<IpRange>{{IpAddress{0}, IpAddress{9}, {2, 2}, ConnType::fixed}}, TimeWindow{100, 200}, "p");
    const SnapshotSeries series(std::move(snaps));
    CHECK(series.ordinal_at(100) == 0u);
    CHECK(series.ordinal_at(199) == 0u);
    CHECK(series.ordinal_at(200) == 1u);
    CHECK_FALSE(series.ordinal_at(300));
    CHECK(snapshot_at(series, 150).ranges()[0].anchor == GeoPoint{2, 2});
    try {
        snapshot_at(series, 350);
        FAIL("no throw");
    } catch (const NoCoverageError& e) {
        CHECK(e.nearest_from() == 200);
        CHECK(e.nearest_to() == 300);
    }
    try {
        snapshot_at(series, 10);
        FAIL("no throw");
    } catch (const NoCoverageError& e) {
        CHECK(e.nearest_from() == 100);
    }
    const auto all = series.all_anchors();
    CHECK(all.anchors.size() == 2);
    CHECK(all.range_count == 2);
}

TEST_CASE("overlapping snapshot windows are rejected") {
    std::vector<GeoIpSnapshot> snaps;
    snaps.emplace_back(std::vector<IpRange>{}, TimeWindow{0, 10}, "p");
    snaps.emplace_back(std::vector<IpRange>{}, TimeWindow{9, 20}, "p");
    CHECK_THROWS_AS(SnapshotSeries(std::move(snaps)), Error);
    CHECK_THROWS_AS(SnapshotSeries(std::vector<GeoIpSnapshot>{}), Error);
}

TEST_CASE("series manifest loads files relative to itself") {
    testing::TempDir dir;
    dir.write("s/one.csv", std::string(kSnapshotHeader) + "\n1.0.0.0,1.0.0.255,40,-3,fixed\n");
    dir.write("s/two.csv", std::string(kSnapshotHeader) + "\n1.0.0.0,1.0.0.255,41,-3,cellular\n");
    const auto manifest = dir.write(
        "s/series.json",
        R"({"provider":"x","snapshots":[{"file":"two.csv","valid_from":50,"valid_to":90},{"file":"one.csv","valid_from":0,"valid_to":50}]})");
    const auto series = load_snapshot_series(manifest);
    REQUIRE(series.size() == 2);
    CHECK(series[0].ranges()[0].anchor == GeoPoint{40, -3});
    CHECK(series[1].provider_id() == "x");
    CHECK(series[1].ranges()[0].conn_type == ConnType::cellular);
    CHECK_THROWS_AS(load_snapshot_series(dir.file("nope.json")), Error);
}
