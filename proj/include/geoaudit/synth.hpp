#pragma once

// Synthetic worlds with planted ground truth. A world is a directory holding
// every input file the audit, upper-bound and simulation commands read, plus
// a manifest with the generating config and file hashes.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoaudit/ip_space.hpp"
#include "geoaudit/regions.hpp"

namespace geoaudit {

enum class AnchorPlacement { uniform, clustered };

struct LogNormalError {
    double median_km = 5.0;  // 0 plants no displacement at all
    double sigma = 1.0;      // log-space standard deviation
};

struct CountryConfig {
    std::string code = "ES";
    BoundingBox box{36.0, 43.5, -9.0, 3.0};
    std::size_t n_anchors = 200;
    std::size_t n_ranges = 2000;
    std::size_t n_events = 10000;
    std::size_t n_bids = 4000;
    double bid_median_geoip = 1.0;
    double bid_median_gps = 2.34;
};

struct WorldConfig {
    std::uint64_t seed = 42;
    std::vector<CountryConfig> countries{CountryConfig{}};

    AnchorPlacement placement = AnchorPlacement::clustered;
    std::size_t n_clusters = 8;
    double cluster_spread_km = 30.0;
    double cluster_share = 0.7;  // share of anchors drawn around a cluster centre

    double cellular_share = 0.4;  // share of ranges tagged cellular
    LogNormalError fixed_error{3.0, 1.0};
    LogNormalError cellular_error{30.0, 1.0};

    int region_splits = 2;  // each level splits its parent into splits x splits
    int urbanization_resolution = kDefaultGridResolution;
    std::size_t urban_min_anchors = 3;
    std::size_t semi_urban_min_anchors = 1;

    std::int64_t start_time = 1614556800;  // 2021-03-01T00:00:00Z
    int days = 30;
    std::size_t snapshots = 2;        // per provider, equal windows over the study period
    double reassign_share = 0.02;     // ranges moved to another anchor in each later snapshot
    double provider_b_share = 0.10;   // ranges provider B places differently from A
    double unmatched_ip_share = 0.005;  // events/bids whose IP no range covers
    double invalid_event_share = 0.0;   // deliberately corrupt event rows

    double gps_share = 0.45;
    double geoip_share = 0.45;
    double user_share = 0.05;  // rest of the bids carry no location
};

nlohmann::json to_json(const WorldConfig& c);
/// Missing keys keep their defaults.
WorldConfig world_config_from_json(const nlohmann::json& j);

/// Named presets: "desk" (default config), "spain" and "gb" (range and
/// anchor counts at national scale, few events).
WorldConfig world_preset(const std::string& name);

/// Throws Error("infeasible_config") describing the first problem found.
void validate_world_config(const WorldConfig& c);

struct PlantedTruth {
    /// Displacement from the assigned anchor, one per events.csv data row
    /// (nothing for deliberately invalid rows).
    std::vector<std::optional<double>> event_displacement_km;
    /// Anchor of every range in the first snapshot of provider A.
    std::vector<GeoPoint> range_anchor;
    double expected_reuse_factor = 0.0;  // first snapshot of provider A
    std::map<std::string, double> bid_floor_medians;  // "<country>/<source>"
    std::size_t valid_events = 0;
    std::size_t unmatched_events = 0;
};

/// Relative file locations inside a world directory.
struct WorldFiles {
    std::string snapshots_a;
    std::string snapshots_b;
    std::string regions;
    std::string urbanization;
    std::string events;
    std::string bidstream;

    /// Reads <dir>/manifest.json and returns absolute paths.
    static WorldFiles from_directory(const std::string& dir);
};

struct GeneratedWorld {
    WorldFiles files;
    PlantedTruth truth;
    std::map<std::string, std::string> sha256;  // relative file name -> hash
};

/// Writes the world into `out_dir` (created if needed). Identical configs
/// give byte-identical files. Every emitted snapshot is re-parsed as a
/// self-check before returning.
GeneratedWorld generate_world(const WorldConfig& config, const std::string& out_dir);

}  // namespace geoaudit
