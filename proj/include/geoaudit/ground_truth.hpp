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
#include "geoaudit/ip_space.hpp"
#include "geoaudit/regions.hpp"

namespace geoaudit {

struct LocationEvent {
    std::int64_t timestamp = 0;
    GeoPoint pos_gt;
    IpAddress ip;
    std::string carrier;  // trimmed and lower-cased at ingestion
    std::string country;  // upper-cased ISO code
};

inline constexpr std::string_view kEventsHeader = "timestamp,lat,lon,ip,carrier,country";

std::string normalize_carrier(std::string_view raw);

struct IngestOptions {
    /// Abort when more than this fraction of records is invalid.
    double max_invalid_fraction = 0.01;
    std::optional<TimeWindow> study_window;
};

struct RejectedRecord {
    std::size_t line = 0;
    std::string reason;
};

struct IngestResult {
    std::vector<LocationEvent> events;  // input order
    std::vector<RejectedRecord> rejects;
    std::size_t outside_window = 0;  // valid rows dropped by the study window

    /// Rows considered for the invalid-share limit.
    std::size_t total() const noexcept { return events.size() + rejects.size(); }
};

/// Reads the events CSV. Invalid rows are collected in `rejects`; if their
/// share exceeds the configured limit the whole ingest fails with
/// Error("too_many_invalid").
IngestResult ingest_events(std::istream& in, const IngestOptions& options = {});

enum class Urbanization { urban, semi_urban, rural, unknown };

std::string_view to_string(Urbanization u) noexcept;
std::optional<Urbanization> parse_urbanization(std::string_view s) noexcept;

/// Cell -> class lookup at one fixed grid resolution; unknown elsewhere.
class UrbanizationMap {
public:
    UrbanizationMap() = default;
    explicit UrbanizationMap(int resolution) : resolution_(resolution) {}

    int resolution() const noexcept { return resolution_; }
    std::size_t size() const noexcept { return cells_.size(); }
    void set(const CellId& cell, Urbanization u);
    Urbanization classify(const GeoPoint& p) const;
    Urbanization classify(const CellId& cell) const;
    std::vector<std::pair<CellId, Urbanization>> sorted_entries() const;

private:
    int resolution_ = kDefaultGridResolution;
    std::unordered_map<std::uint64_t, Urbanization> cells_;
};

inline constexpr std::string_view kUrbanizationHeader = "cell_id,class";

UrbanizationMap parse_urbanization_map(std::istream& in);
std::string serialize_urbanization_map(const UrbanizationMap& map);

using RegionLabels = std::array<std::optional<RegionHandle>, kLevelCount>;

/// Region of `p` at every level 1..5 (slot 0 is level 1).
RegionLabels label_regions(const RegionIndex& index, const GeoPoint& p);

struct JoinedSample {
    LocationEvent event;
    GeoPoint pos_ip;
    double error_km = 0.0;
    ConnType conn_type = ConnType::unknown;
    Urbanization urbanization = Urbanization::unknown;
    std::uint32_t snapshot_ordinal = 0;
    RegionLabels region_gt{};
    RegionLabels region_ip{};
};

struct UnmatchedEvent {
    LocationEvent event;
    std::string reason;  // "no_snapshot" or "ip_not_found"
};

struct JoinResult {
    std::vector<JoinedSample> samples;     // input order
    std::vector<UnmatchedEvent> unmatched;  // input order
};

/// Joins each event to the time-matched snapshot and labels it. Work is
/// split over `threads`; the result is identical for any thread count.
JoinResult join(std::span<const LocationEvent> events, const SnapshotSeries& series,
                const UrbanizationMap& urbanization, const RegionIndex& regions, unsigned threads = 1);

inline constexpr std::string_view kUnmatchedHeader = "timestamp,lat,lon,ip,carrier,country,reason";

std::string serialize_events(std::span<const LocationEvent> events);
std::string serialize_unmatched(std::span<const UnmatchedEvent> unmatched);

}  // namespace geoaudit
