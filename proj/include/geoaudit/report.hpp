#pragma once

// Audit results in a form shared by the main pipeline and the reference
// oracle, and their JSON / CSV renderings.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoaudit/anchor_analysis.hpp"
#include "geoaudit/campaign.hpp"
#include "geoaudit/ground_truth.hpp"
#include "geoaudit/ip_space.hpp"
#include "geoaudit/metrics.hpp"
#include "geoaudit/regions.hpp"

namespace geoaudit {

struct AuditPaths {
    std::string events;
    std::string snapshots;  // series manifest (JSON)
    std::string regions;
    std::string urbanization;
};

struct AuditData {
    IngestResult ingest;
    SnapshotSeries series;
    std::vector<AdminRegion> region_list;
    RegionIndex regions;
    UrbanizationMap urbanization;
};

/// Loads and validates every audit input. A missing file is reported as
/// Error("missing_input", "<role>").
AuditData load_audit_data(const AuditPaths& paths, int grid_resolution, const IngestOptions& ingest = {});

struct SnapshotExtent {
    std::string provider;
    TimeWindow window;
    std::uint64_t ranges = 0;
    std::uint64_t anchors = 0;
    double reuse_factor = 0.0;
};

struct AuditResults {
    std::uint64_t events_total = 0;
    std::uint64_t events_rejected = 0;
    std::uint64_t events_outside_window = 0;
    std::map<std::string, std::uint64_t> reject_reasons;
    std::uint64_t matched = 0;
    std::map<std::string, std::uint64_t> unmatched_reasons;

    std::vector<SnapshotExtent> snapshots;
    std::uint64_t series_anchors = 0;  // distinct over every snapshot
    std::uint64_t series_ranges = 0;

    std::map<GroupDimension, PrecisionBreakdown> precision;
    std::map<int, std::map<GroupDimension, AccuracyReport>> accuracy;
    std::optional<DensityCorrelation> density;  // nothing: insufficient data
    std::optional<StabilityReport> stability;   // nothing: insufficient data
};

struct AuditRun {
    AuditResults results;
    JoinResult joined;
};

AuditRun run_audit(const AuditData& data, unsigned threads = 1);

nlohmann::json precision_json(const std::map<GroupDimension, PrecisionBreakdown>& precision);
nlohmann::json accuracy_json(const std::map<int, std::map<GroupDimension, AccuracyReport>>& accuracy);
nlohmann::json audit_json(const AuditResults& r);

/// The upper-bound section without per-sample rows.
nlohmann::json upper_bound_json(const UpperBoundReport& r);

nlohmann::json decision_json(const Decision& d);
nlohmann::json cost_json(const CostModel& c);
/// Per-campaign detail, fixed evaluations, flagged targets and notes.
nlohmann::json decision_table_json(const DecisionTable& t);

/// Reals render through this so +-inf and NaN stay distinguishable.
nlohmann::json real_json(double v);

/// Field-by-field comparison: integers, strings and booleans exactly, reals
/// within `rel` relative tolerance (or `abs_floor` absolute, whichever is
/// larger). Keys named "provenance" are skipped. Returns one line per
/// difference, empty when equal.
std::vector<std::string> compare_reports(const nlohmann::json& expected, const nlohmann::json& actual,
                                         double rel = 1e-9, double abs_floor = 1e-12);

// CSV renderings. Each starts with the given header line (without newline).
std::string precision_csv(const AuditResults& r);
std::string accuracy_csv(const AuditResults& r);
/// Overall CDF: distance_km,cumulative_fraction.
std::string cdf_csv(const AuditResults& r);
std::string cdf_by_group_csv(const AuditResults& r);

}  // namespace geoaudit
