#include "geoaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "geoaudit/error.hpp"

namespace geoaudit {

std::string_view to_string(GroupDimension d) noexcept {
    switch (d) {
        case GroupDimension::none: return "none";
        case GroupDimension::country: return "country";
        case GroupDimension::urbanization: return "urbanization";
        case GroupDimension::conn_type: return "conn_type";
        case GroupDimension::carrier: return "carrier";
    }
    return "none";
}

std::optional<GroupDimension> parse_group_dimension(std::string_view s) noexcept {
    for (auto d : kAllDimensions)
        if (to_string(d) == s) return d;
    return std::nullopt;
}

std::string group_value(const JoinedSample& s, GroupDimension d) {
    switch (d) {
        case GroupDimension::none: return "all";
        case GroupDimension::country: return s.event.country;
        case GroupDimension::urbanization: return std::string(to_string(s.urbanization));
        case GroupDimension::conn_type: return std::string(to_string(s.conn_type));
        case GroupDimension::carrier: return s.event.carrier;
    }
    return "all";
}

double quantile_of(std::vector<double>& values, double p) {
    if (values.empty()) throw InsufficientDataError("quantile of an empty set");
    const double h = static_cast<double>(values.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    auto nth = values.begin() + static_cast<std::ptrdiff_t>(lo);
    std::nth_element(values.begin(), nth, values.end());
    const double x_lo = *nth;
    if (lo + 1 >= values.size()) return x_lo;
    // After nth_element everything right of nth is >= it; the next order
    // statistic is the minimum of that tail.
    const double x_hi = *std::min_element(nth + 1, values.end());
    return x_lo + (h - static_cast<double>(lo)) * (x_hi - x_lo);
}

std::vector<double> cdf_support() {
    std::vector<double> pts;
    for (int i = -20; i <= 40; ++i) pts.push_back(std::pow(10.0, static_cast<double>(i) / 10.0));
    return pts;
}

PrecisionDistribution summarize_errors(std::vector<double> errors) {
    if (errors.empty()) throw InsufficientDataError("no samples");
    PrecisionDistribution d;
    d.sample_count = errors.size();
    for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) d.quantiles[i] = quantile_of(errors, kQuantileLevels[i]);

    std::sort(errors.begin(), errors.end());
    const double n = static_cast<double>(errors.size());
    for (const double x : cdf_support()) {
        const auto count = std::upper_bound(errors.begin(), errors.end(), x) - errors.begin();
        d.cdf.push_back({x, static_cast<double>(count) / n});
    }
    if (errors.back() > d.cdf.back().distance_km) d.cdf.push_back({errors.back(), 1.0});
    return d;
}

PrecisionBreakdown precision_distribution(std::span<const JoinedSample> samples, GroupDimension by) {
    PrecisionBreakdown out;
    out.dimension = by;
    std::map<std::string, std::vector<double>> groups;
    for (const auto& s : samples) groups[group_value(s, by)].push_back(s.error_km);
    if (groups.empty()) out.notes.push_back("no samples; all groups omitted");
    for (auto& [key, errors] : groups) out.groups.emplace(key, summarize_errors(std::move(errors)));
    return out;
}

AccuracyReport accuracy(std::span<const JoinedSample> samples, int level, GroupDimension by) {
    if (level < kMinLevel || level > kMaxLevel)
        throw Error("bad_level", "administrative level " + std::to_string(level) + " outside 1..5");
    AccuracyReport report;
    report.level = level;
    report.dimension = by;
    const auto slot = static_cast<std::size_t>(level - kMinLevel);
    for (const auto& s : samples) {
        auto& cell = report.groups[group_value(s, by)];
        const auto& claimed = s.region_ip[slot];
        if (!claimed) continue;
        ++cell.claimed_in_region;
        if (s.region_gt[slot] == claimed) ++cell.matched_in_region;
    }
    return report;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InsufficientDataError("pearson needs two equal series of >= 2 values");
    // Single pass with running means and co-moments.
    double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double k = static_cast<double>(i + 1);
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        mx += dx / k;
        my += dy / k;
        sxx += dx * (x[i] - mx);
        syy += dy * (y[i] - my);
        sxy += dx * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

DensityCorrelation anchor_density_correlation(std::span<const JoinedSample> samples, const AnchorSet& anchors,
                                              int resolution) {
    DensityCorrelation out;
    out.resolution = resolution;
    std::unordered_map<std::uint64_t, std::uint64_t> anchor_counts;
    for (const auto& a : anchors.anchors) ++anchor_counts[cell_of(a, resolution).index];

    std::map<std::uint64_t, std::vector<double>> by_cell;
    for (const auto& s : samples) by_cell[cell_of(s.event.pos_gt, resolution).index].push_back(s.error_km);

    std::vector<double> log_median, log_anchors;
    for (auto& [cell, errors] : by_cell) {
        const auto it = anchor_counts.find(cell);
        if (it == anchor_counts.end()) {
            ++out.excluded_zero_anchor_cells;
            continue;
        }
        const double median = quantile_of(errors, 0.5);
        if (!(median > 0.0)) {
            ++out.excluded_zero_error_cells;
            continue;
        }
        log_median.push_back(std::log10(median));
        log_anchors.push_back(std::log10(static_cast<double>(it->second)));
    }
    out.usable_cells = log_median.size();
    if (out.usable_cells < 2)
        throw InsufficientDataError("anchor density correlation needs >= 2 cells with samples and anchors, got " +
                                    std::to_string(out.usable_cells));
    out.pearson_r = pearson(log_median, log_anchors);
    return out;
}

std::int64_t utc_day(std::int64_t t) noexcept {
    constexpr std::int64_t kDay = 86400;
    return t >= 0 ? t / kDay : -((-t + kDay - 1) / kDay);
}

StabilityReport temporal_stability(std::span<const JoinedSample> samples, const DayPartition& day) {
    std::map<std::int64_t, std::vector<double>> by_day;
    for (const auto& s : samples) by_day[day(s.event.timestamp)].push_back(s.error_km);
    if (by_day.size() < 2)
        throw InsufficientDataError("temporal stability needs >= 2 days, got " + std::to_string(by_day.size()));

    StabilityReport out;
    for (auto& [d, errors] : by_day) out.daily.push_back({d, quantile_of(errors, 0.5)});

    auto population_variance = [&](double scale) {
        double mean = 0.0;
        for (const auto& dm : out.daily) mean += dm.median_km * scale;
        mean /= static_cast<double>(out.daily.size());
        double acc = 0.0;
        for (const auto& dm : out.daily) {
            const double d = dm.median_km * scale - mean;
            acc += d * d;
        }
        return acc / static_cast<double>(out.daily.size());
    };
    out.variance_km2 = population_variance(1.0);
    out.variance_m2 = population_variance(1000.0);
    return out;
}

}  // namespace geoaudit
