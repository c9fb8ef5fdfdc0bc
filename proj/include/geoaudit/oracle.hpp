#pragma once

// Straight-line reference implementations of every audit metric: linear IP
// scans, membership tested against every polygon, exhaustive nearest-anchor
// search, full-sort quantiles and two-pass statistics. Slow on purpose and
// single-threaded; used to check the main pipeline on desk-scale worlds.

#include <cstddef>

#include "geoaudit/anchor_analysis.hpp"
#include "geoaudit/report.hpp"

namespace geoaudit::oracle {

struct Limits {
    std::size_t max_events = 100000;
    std::size_t max_regions = 1000;
};

/// Throws Error("scale_guard") stating the limits when the inputs exceed them.
void check_scale(const AuditData& data, const Limits& limits = {});

double great_circle_km(const GeoPoint& a, const GeoPoint& b);
bool polygon_contains(const AdminRegion& region, const GeoPoint& p);
double sorted_quantile(const std::vector<double>& sorted, double p);
std::optional<double> pearson_two_pass(const std::vector<double>& x, const std::vector<double>& y);
/// Minimum haversine distance, ties to the lowest (lat, lon).
NearestAnchor nearest_exhaustive(const std::vector<GeoPoint>& anchors, const GeoPoint& p);

/// The same results run_audit computes, derived independently.
AuditResults audit(const AuditData& data, const Limits& limits = {});

/// The same report upper_bound_report computes, derived independently.
UpperBoundReport upper_bound(const AuditData& data, const Limits& limits = {});

}  // namespace geoaudit::oracle
