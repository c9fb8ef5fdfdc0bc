#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoaudit/ground_truth.hpp"
#include "geoaudit/ip_space.hpp"

namespace geoaudit {

enum class GroupDimension { none, country, urbanization, conn_type, carrier };

inline constexpr std::array kAllDimensions = {GroupDimension::none, GroupDimension::country,
                                              GroupDimension::urbanization, GroupDimension::conn_type,
                                              GroupDimension::carrier};

std::string_view to_string(GroupDimension d) noexcept;
std::optional<GroupDimension> parse_group_dimension(std::string_view s) noexcept;

struct GroupKey {
    GroupDimension dimension = GroupDimension::none;
    std::string value;

    friend bool operator==(const GroupKey&, const GroupKey&) = default;
    friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

/// The sample's value along `d`; "all" for GroupDimension::none.
std::string group_value(const JoinedSample& s, GroupDimension d);

// ---------------------------------------------------------------------------
// Precision (distribution of the error in km)

inline constexpr std::array<double, 9> kQuantileLevels = {0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99};
inline constexpr std::array<std::string_view, 9> kQuantileNames = {"p1",  "p5",  "p10", "p25", "p50",
                                                                   "p75", "p90", "p95", "p99"};

/// Quantiles interpolate linearly between order statistics: for sorted x of
/// size n, q(p) = x[h] + (h - floor h)(x[floor h + 1] - x[floor h]) with
/// h = (n - 1) p.
double quantile_of(std::vector<double>& values, double p);

struct CdfPoint {
    double distance_km;
    double fraction;  // share of samples with error <= distance_km
};

/// Log-spaced support, ten points per decade from 0.01 km to 10^4 km.
std::vector<double> cdf_support();

struct PrecisionDistribution {
    std::uint64_t sample_count = 0;
    std::array<double, 9> quantiles{};
    /// Evaluated at cdf_support(); if any error exceeds 10^4 km a final
    /// point at the maximum error is appended so the CDF ends at 1.
    std::vector<CdfPoint> cdf;

    double median() const noexcept { return quantiles[4]; }
};

/// Throws InsufficientDataError on an empty input.
PrecisionDistribution summarize_errors(std::vector<double> errors_km);

struct PrecisionBreakdown {
    GroupDimension dimension = GroupDimension::none;
    std::map<std::string, PrecisionDistribution> groups;
    std::vector<std::string> notes;  // omitted groups
};

PrecisionBreakdown precision_distribution(std::span<const JoinedSample> samples, GroupDimension by);

// ---------------------------------------------------------------------------
// Accuracy: among samples GeoIP places in a region of the level, the share
// whose ground truth lies in that same region. Micro-averaged over regions.

struct AccuracyCell {
    std::uint64_t matched_in_region = 0;
    std::uint64_t claimed_in_region = 0;

    std::optional<double> accuracy() const noexcept {
        if (claimed_in_region == 0) return std::nullopt;
        return static_cast<double>(matched_in_region) / static_cast<double>(claimed_in_region);
    }
};

struct AccuracyReport {
    int level = kMinLevel;
    GroupDimension dimension = GroupDimension::none;
    std::map<std::string, AccuracyCell> groups;
};

AccuracyReport accuracy(std::span<const JoinedSample> samples, int level, GroupDimension by);

// ---------------------------------------------------------------------------
// Anchor density vs. precision

/// Pearson correlation; nothing when either variable has zero variance.
/// Requires x.size() == y.size() >= 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct DensityCorrelation {
    int resolution = kDefaultGridResolution;
    std::optional<double> pearson_r;
    std::size_t usable_cells = 0;
    std::size_t excluded_zero_anchor_cells = 0;
    std::size_t excluded_zero_error_cells = 0;
};

/// Groups samples by the grid cell of their ground-truth position and
/// correlates log10(median error) with log10(anchor count) over cells. Cells
/// with no anchors or a zero median are excluded and counted. Throws
/// InsufficientDataError with fewer than two usable cells.
DensityCorrelation anchor_density_correlation(std::span<const JoinedSample> samples, const AnchorSet& anchors,
                                              int resolution);

// ---------------------------------------------------------------------------
// Temporal stability

using DayPartition = std::function<std::int64_t(std::int64_t timestamp)>;

/// UTC calendar day.
std::int64_t utc_day(std::int64_t timestamp) noexcept;

struct DailyMedian {
    std::int64_t day;
    double median_km;
};

struct StabilityReport {
    std::vector<DailyMedian> daily;  // ordered by day
    double variance_km2 = 0.0;       // population variance of daily medians in km
    double variance_m2 = 0.0;        // same, medians expressed in metres
};

/// Throws InsufficientDataError with fewer than two days.
StabilityReport temporal_stability(std::span<const JoinedSample> samples, const DayPartition& day = utc_day);

}  // namespace geoaudit
