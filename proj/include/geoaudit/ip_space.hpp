#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoaudit/geo.hpp"

namespace geoaudit {

/// IPv4 address in host order.
struct IpAddress {
    std::uint32_t value = 0;

    friend bool operator==(const IpAddress&, const IpAddress&) = default;
    friend auto operator<=>(const IpAddress&, const IpAddress&) = default;
};

/// Dotted-quad parse. IPv6 text is rejected with Error("ipv6_unsupported");
/// anything else malformed with Error("bad_ip").
IpAddress parse_ip(std::string_view text);
std::string to_string(IpAddress ip);

enum class ConnType { fixed, cellular, unknown };

std::string_view to_string(ConnType c) noexcept;
std::optional<ConnType> parse_conn_type(std::string_view s) noexcept;

struct IpRange {
    IpAddress start;
    IpAddress end;  // inclusive
    GeoPoint anchor;
    ConnType conn_type = ConnType::unknown;

    bool contains(IpAddress ip) const noexcept { return start <= ip && ip <= end; }
};

/// Half-open validity interval [from, to) in UTC epoch seconds.
struct TimeWindow {
    std::int64_t from = 0;
    std::int64_t to = 0;

    bool contains(std::int64_t t) const noexcept { return from <= t && t < to; }
    friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Immutable, validated set of non-overlapping ranges sorted by start.
class GeoIpSnapshot {
public:
    /// Sorts and validates; throws Error("overlap") naming both ranges,
    /// Error("bad_range") for start > end, Error("bad_window") for from >= to.
    GeoIpSnapshot(std::vector<IpRange> ranges, TimeWindow window, std::string provider_id);

    std::span<const IpRange> ranges() const noexcept { return ranges_; }
    const TimeWindow& window() const noexcept { return window_; }
    const std::string& provider_id() const noexcept { return provider_; }
    std::size_t size() const noexcept { return ranges_.size(); }

    /// The unique range containing `ip`, or nothing. O(log n).
    const IpRange* lookup(IpAddress ip) const noexcept;

private:
    std::vector<IpRange> ranges_;
    TimeWindow window_;
    std::string provider_;
};

inline constexpr std::string_view kSnapshotHeader = "start_ip,end_ip,lat,lon,conn_type";

GeoIpSnapshot parse_snapshot(std::istream& in, TimeWindow window, std::string provider_id = {});
std::string serialize_snapshot(const GeoIpSnapshot& snapshot);

/// Deduplicated anchor coordinates (sorted lexicographically) plus reuse.
struct AnchorSet {
    std::vector<GeoPoint> anchors;
    std::uint64_t range_count = 0;

    double reuse_factor() const noexcept {
        return anchors.empty() ? 0.0 : static_cast<double>(range_count) / static_cast<double>(anchors.size());
    }
    bool contains(const GeoPoint& p) const noexcept;
};

/// Exact-equality dedup of anchors. Throws Error("empty_set") on an empty snapshot.
AnchorSet extract_anchors(const GeoIpSnapshot& snapshot);

/// Snapshots of one provider ordered by validity window.
class SnapshotSeries {
public:
    SnapshotSeries() = default;
    /// Sorts by window start; throws Error("bad_series") when empty or when
    /// two windows overlap.
    explicit SnapshotSeries(std::vector<GeoIpSnapshot> snapshots);

    std::span<const GeoIpSnapshot> snapshots() const noexcept { return snapshots_; }
    std::size_t size() const noexcept { return snapshots_.size(); }
    const GeoIpSnapshot& operator[](std::size_t i) const { return snapshots_.at(i); }

    /// Position in the series of the snapshot covering t, or nothing.
    std::optional<std::size_t> ordinal_at(std::int64_t t) const noexcept;

    /// Union of anchors across every snapshot; range_count sums all snapshots.
    AnchorSet all_anchors() const;

private:
    std::vector<GeoIpSnapshot> snapshots_;
};

/// The snapshot whose window contains t. Throws NoCoverageError carrying
/// the nearest window otherwise.
const GeoIpSnapshot& snapshot_at(const SnapshotSeries& series, std::int64_t t);

/// A series manifest is JSON: {"provider": "...", "snapshots": [{"file":
/// "...", "valid_from": s, "valid_to": s}, ...]}; file paths are relative
/// to the manifest's directory.
SnapshotSeries load_snapshot_series(const std::string& manifest_path);

}  // namespace geoaudit
