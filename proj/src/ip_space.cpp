#include "geoaudit/ip_space.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "geoaudit/error.hpp"
#include "geoaudit/text.hpp"

namespace geoaudit {

IpAddress parse_ip(std::string_view s) {
    s = text::trim(s);
    if (s.find(':') != std::string_view::npos)
        throw Error("ipv6_unsupported", "IPv6 address '" + std::string(s) + "' is not supported (IPv4 only)");
    const auto parts = text::split(s, '.');
    if (parts.size() != 4) throw Error("bad_ip", "malformed IPv4 address '" + std::string(s) + "'");
    std::uint32_t v = 0;
    for (const auto part : parts) {
        if (part.empty() || part.size() > 3) throw Error("bad_ip", "malformed IPv4 address '" + std::string(s) + "'");
        const auto octet = text::parse_uint64(part);
        if (!octet || *octet > 255 || !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw Error("bad_ip", "malformed IPv4 address '" + std::string(s) + "'");
        v = (v << 8) | static_cast<std::uint32_t>(*octet);
    }
    return IpAddress{v};
}

std::string to_string(IpAddress ip) {
    const auto v = ip.value;
    return std::to_string(v >> 24) + "." + std::to_string((v >> 16) & 0xff) + "." + std::to_string((v >> 8) & 0xff) +
           "." + std::to_string(v & 0xff);
}

std::string_view to_string(ConnType c) noexcept {
    switch (c) {
        case ConnType::fixed: return "fixed";
        case ConnType::cellular: return "cellular";
        case ConnType::unknown: break;
    }
    return "unknown";
}

std::optional<ConnType> parse_conn_type(std::string_view s) noexcept {
    s = text::trim(s);
    if (s == "fixed") return ConnType::fixed;
    if (s == "cellular") return ConnType::cellular;
    if (s == "unknown") return ConnType::unknown;
    return std::nullopt;
}

namespace {

std::string describe(const IpRange& r) { return to_string(r.start) + "-" + to_string(r.end); }

}  // namespace

GeoIpSnapshot::GeoIpSnapshot(std::vector<IpRange> ranges, TimeWindow window, std::string provider_id)
    : ranges_(std::move(ranges)), window_(window), provider_(std::move(provider_id)) {
    if (window_.from >= window_.to)
        throw Error("bad_window", "snapshot window [" + std::to_string(window_.from) + ", " +
                                      std::to_string(window_.to) + ") is empty");
    for (const auto& r : ranges_) {
        if (r.start > r.end) throw Error("bad_range", "range " + describe(r) + " has start > end");
        if (!r.anchor.is_valid()) throw Error("bad_range", "range " + describe(r) + " has an invalid anchor");
    }
    std::sort(ranges_.begin(), ranges_.end(), [](const IpRange& a, const IpRange& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < ranges_.size(); ++i)
        if (ranges_[i].start <= ranges_[i - 1].end)
            throw Error("overlap", "ranges " + describe(ranges_[i - 1]) + " and " + describe(ranges_[i]) + " overlap");
}

const IpRange* GeoIpSnapshot::lookup(IpAddress ip) const noexcept {
    // First range whose start is > ip; its predecessor is the only candidate.
    auto it = std::upper_bound(ranges_.begin(), ranges_.end(), ip,
                               [](IpAddress v, const IpRange& r) { return v < r.start; });
    if (it == ranges_.begin()) return nullptr;
    --it;
    return it->contains(ip) ? &*it : nullptr;
}

GeoIpSnapshot parse_snapshot(std::istream& in, TimeWindow window, std::string provider_id) {
    text::LineReader reader(in);
    text::expect_header(reader, kSnapshotHeader);

    struct Numbered {
        IpRange range;
        std::size_t line;
    };
    std::vector<Numbered> rows;
    std::string line;
    while (reader.next(line)) {
        const auto ln = reader.line_number();
        if (text::trim(line).empty()) continue;
        const auto f = text::split(line);
        if (f.size() != 5) throw ParseError(ln, "expected 5 fields, got " + std::to_string(f.size()));
        IpRange r;
        try {
            r.start = parse_ip(f[0]);
            r.end = parse_ip(f[1]);
        } catch (const Error& e) {
            throw ParseError(ln, e.what());
        }
        const auto lat = text::parse_double(f[2]);
        const auto lon = text::parse_double(f[3]);
        if (!lat || *lat < -90.0 || *lat > 90.0) throw ParseError(ln, "lat out of range");
        if (!lon || *lon < -180.0 || *lon > 180.0) throw ParseError(ln, "lon out of range");
        r.anchor = GeoPoint{*lat, *lon};
        const auto ct = parse_conn_type(f[4]);
        if (!ct) throw ParseError(ln, "unknown conn_type '" + std::string(f[4]) + "'");
        r.conn_type = *ct;
        if (r.start > r.end) throw ParseError(ln, "start_ip greater than end_ip");
        rows.push_back({r, ln});
    }

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Numbered& a, const Numbered& b) { return a.range.start < b.range.start; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& prev = rows[i - 1];
        const auto& cur = rows[i];
        if (cur.range.start <= prev.range.end)
            throw Error("overlap", "range " + describe(prev.range) + " (line " + std::to_string(prev.line) +
                                       ") overlaps range " + describe(cur.range) + " (line " +
                                       std::to_string(cur.line) + ")");
    }

    std::vector<IpRange> ranges;
    ranges.reserve(rows.size());
    for (auto& r : rows) ranges.push_back(r.range);
    return GeoIpSnapshot(std::move(ranges), window, std::move(provider_id));
}

std::string serialize_snapshot(const GeoIpSnapshot& snapshot) {
    std::string out(kSnapshotHeader);
    out += '\n';
    for (const auto& r : snapshot.ranges()) {
        out += to_string(r.start);
        out += ',';
        out += to_string(r.end);
        out += ',';
        out += text::format_double(r.anchor.lat);
        out += ',';
        out += text::format_double(r.anchor.lon);
        out += ',';
        out += to_string(r.conn_type);
        out += '\n';
    }
    return out;
}

bool AnchorSet::contains(const GeoPoint& p) const noexcept {
    return std::binary_search(anchors.begin(), anchors.end(), p,
                              [](const GeoPoint& a, const GeoPoint& b) { return a < b; });
}

namespace {

void sort_unique(std::vector<GeoPoint>& pts) {
    std::sort(pts.begin(), pts.end(), [](const GeoPoint& a, const GeoPoint& b) { return a < b; });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
}

}  // namespace

AnchorSet extract_anchors(const GeoIpSnapshot& snapshot) {
    if (snapshot.size() == 0) throw Error("empty_set", "snapshot has no ranges; anchor set is empty");
    AnchorSet set;
    set.range_count = snapshot.size();
    set.anchors.reserve(snapshot.size());
    for (const auto& r : snapshot.ranges()) set.anchors.push_back(r.anchor);
    sort_unique(set.anchors);
    return set;
}

SnapshotSeries::SnapshotSeries(std::vector<GeoIpSnapshot> snapshots) : snapshots_(std::move(snapshots)) {
    if (snapshots_.empty()) throw Error("bad_series", "snapshot series is empty");
    std::sort(snapshots_.begin(), snapshots_.end(),
              [](const GeoIpSnapshot& a, const GeoIpSnapshot& b) { return a.window().from < b.window().from; });
    for (std::size_t i = 1; i < snapshots_.size(); ++i)
        if (snapshots_[i].window().from < snapshots_[i - 1].window().to)
            throw Error("bad_series", "snapshot windows " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                          " overlap");
}

std::optional<std::size_t> SnapshotSeries::ordinal_at(std::int64_t t) const noexcept {
    auto it = std::upper_bound(snapshots_.begin(), snapshots_.end(), t,
                               [](std::int64_t v, const GeoIpSnapshot& s) { return v < s.window().from; });
    if (it == snapshots_.begin()) return std::nullopt;
    --it;
    if (!it->window().contains(t)) return std::nullopt;
    return static_cast<std::size_t>(it - snapshots_.begin());
}

AnchorSet SnapshotSeries::all_anchors() const {
    AnchorSet set;
    for (const auto& s : snapshots_) {
        set.range_count += s.size();
        for (const auto& r : s.ranges()) set.anchors.push_back(r.anchor);
    }
    if (set.anchors.empty()) throw Error("empty_set", "snapshot series has no ranges");
    sort_unique(set.anchors);
    return set;
}

const GeoIpSnapshot& snapshot_at(const SnapshotSeries& series, std::int64_t t) {
    if (const auto i = series.ordinal_at(t)) return series[*i];
    if (series.size() == 0) throw Error("bad_series", "snapshot series is empty");
    // Nearest window by distance from t to the window edges.
    std::size_t best = 0;
    std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& w = series[i].window();
        const std::int64_t gap = t < w.from ? w.from - t : t - (w.to - 1);
        if (gap < best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    throw NoCoverageError(t, series[best].window().from, series[best].window().to);
}

SnapshotSeries load_snapshot_series(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) throw Error("missing_input", "cannot open snapshot series manifest '" + manifest_path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("parse", "snapshot series manifest '" + manifest_path + "': " + e.what());
    }
    const std::string provider = doc.value("provider", "");
    if (!doc.contains("snapshots") || !doc["snapshots"].is_array())
        throw Error("parse", "snapshot series manifest '" + manifest_path + "' has no 'snapshots' array");
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<GeoIpSnapshot> snaps;
    for (const auto& entry : doc["snapshots"]) {
        const auto file = base / entry.at("file").get<std::string>();
        const TimeWindow window{entry.at("valid_from").get<std::int64_t>(), entry.at("valid_to").get<std::int64_t>()};
        std::ifstream f(file);
        if (!f) throw Error("missing_input", "cannot open snapshot file '" + file.string() + "'");
        try {
            snaps.push_back(parse_snapshot(f, window, provider));
        } catch (const ParseError& e) {
            throw Error("parse", file.string() + ": " + e.what());
        }
    }
    return SnapshotSeries(std::move(snaps));
}

}  // namespace geoaudit
