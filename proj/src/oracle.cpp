#include "geoaudit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "geoaudit/error.hpp"

namespace geoaudit::oracle {

void check_scale(const AuditData& data, const Limits& limits) {
    const auto events = data.ingest.events.size();
    const auto regions = data.region_list.size();
    if (events > limits.max_events || regions > limits.max_regions)
        throw Error("scale_guard", "oracle limited to " + std::to_string(limits.max_events) + " events and " +
                                       std::to_string(limits.max_regions) + " regions; got " + std::to_string(events) +
                                       " events and " + std::to_string(regions) + " regions");
}

double great_circle_km(const GeoPoint& a, const GeoPoint& b) {
    constexpr double k = std::numbers::pi / 180.0;
    const double s_lat = std::sin((b.lat - a.lat) * k / 2.0);
    const double s_lon = std::sin((b.lon - a.lon) * k / 2.0);
    const double h = s_lat * s_lat + std::cos(a.lat * k) * std::cos(b.lat * k) * s_lon * s_lon;
    return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(std::max(0.0, 1.0 - h)));
}

bool polygon_contains(const AdminRegion& region, const GeoPoint& p) {
    // Crossing parity with the crossing side decided by orientation sign.
    std::size_t crossings = 0;
    for (const auto& poly : region.polygons) {
        for (const auto& ring : poly.rings) {
            for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
                const GeoPoint& a = ring[i];
                const GeoPoint& b = ring[i + 1];
                const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
                if (a.lat <= p.lat && p.lat < b.lat && cross < 0.0) ++crossings;
                if (b.lat <= p.lat && p.lat < a.lat && cross > 0.0) ++crossings;
            }
        }
    }
    return crossings % 2 == 1;
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted[lo];
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::optional<double> pearson_two_pass(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

NearestAnchor nearest_exhaustive(const std::vector<GeoPoint>& anchors, const GeoPoint& p) {
    NearestAnchor best{anchors.front(), great_circle_km(p, anchors.front())};
    for (const auto& a : anchors) {
        const double d = great_circle_km(p, a);
        if (d < best.distance_km || (d == best.distance_km && a < best.anchor)) best = {a, d};
    }
    return best;
}

namespace {

using Labels = std::array<std::optional<std::size_t>, kLevelCount>;

struct Sample {
    const LocationEvent* event;
    GeoPoint pos_ip;
    double error_km;
    ConnType conn;
    Urbanization urbanization;
    std::size_t ordinal;
    Labels gt;
    Labels ip;
};

Labels labels_of(const std::vector<AdminRegion>& regions, const GeoPoint& p) {
    Labels out{};
    for (std::size_t h = 0; h < regions.size(); ++h) {
        const auto slot = static_cast<std::size_t>(regions[h].level - kMinLevel);
        if (!polygon_contains(regions[h], p)) continue;
        if (out[slot]) throw Error("ambiguous_region", "'" + regions[*out[slot]].id + "' and '" + regions[h].id + "'");
        out[slot] = h;
    }
    return out;
}

std::string value_of(const Sample& s, GroupDimension d) {
    switch (d) {
        case GroupDimension::none: return "all";
        case GroupDimension::country: return s.event->country;
        case GroupDimension::urbanization: return std::string(to_string(s.urbanization));
        case GroupDimension::conn_type: return std::string(to_string(s.conn));
        case GroupDimension::carrier: return s.event->carrier;
    }
    return "all";
}

struct Joined {
    std::vector<Sample> samples;
    std::map<std::string, std::uint64_t> unmatched;
};

Joined join_linear(const AuditData& data) {
    Joined out;
    const auto snaps = data.series.snapshots();
    for (const auto& ev : data.ingest.events) {
        std::optional<std::size_t> ordinal;
        for (std::size_t k = 0; k < snaps.size(); ++k)
            if (snaps[k].window().from <= ev.timestamp && ev.timestamp < snaps[k].window().to) ordinal = k;
        if (!ordinal) {
            ++out.unmatched["no_snapshot"];
            continue;
        }
        const IpRange* hit = nullptr;
        for (const auto& r : snaps[*ordinal].ranges())
            if (r.start.value <= ev.ip.value && ev.ip.value <= r.end.value) hit = &r;
        if (!hit) {
            ++out.unmatched["ip_not_found"];
            continue;
        }
        out.samples.push_back({&ev, hit->anchor, great_circle_km(ev.pos_gt, hit->anchor), hit->conn_type,
                               data.urbanization.classify(ev.pos_gt), *ordinal, labels_of(data.region_list, ev.pos_gt),
                               labels_of(data.region_list, hit->anchor)});
    }
    return out;
}

PrecisionDistribution distribution(std::vector<double> errors) {
    std::sort(errors.begin(), errors.end());
    PrecisionDistribution d;
    d.sample_count = errors.size();
    for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) d.quantiles[i] = sorted_quantile(errors, kQuantileLevels[i]);
    for (int i = -20; i <= 40; ++i) {
        const double x = std::pow(10.0, static_cast<double>(i) / 10.0);
        std::uint64_t count = 0;
        for (const double e : errors)
            if (e <= x) ++count;
        d.cdf.push_back({x, static_cast<double>(count) / static_cast<double>(errors.size())});
    }
    if (errors.back() > d.cdf.back().distance_km) d.cdf.push_back({errors.back(), 1.0});
    return d;
}

void metrics_into(const std::vector<Sample>& samples, const std::vector<AdminRegion>& regions,
                  std::map<GroupDimension, PrecisionBreakdown>& precision,
                  std::map<int, std::map<GroupDimension, AccuracyReport>>& accuracy) {
    for (const auto dim : kAllDimensions) {
        PrecisionBreakdown b;
        b.dimension = dim;
        std::set<std::string> groups;
        for (const auto& s : samples) groups.insert(value_of(s, dim));
        if (groups.empty()) b.notes.push_back("no samples; all groups omitted");
        for (const auto& g : groups) {
            std::vector<double> errors;
            for (const auto& s : samples)
                if (value_of(s, dim) == g) errors.push_back(s.error_km);
            b.groups.emplace(g, distribution(std::move(errors)));
        }
        precision.emplace(dim, std::move(b));

        // Double membership counted region by region.
        for (int level = kMinLevel; level <= kMaxLevel; ++level) {
            const auto slot = static_cast<std::size_t>(level - kMinLevel);
            AccuracyReport rep;
            rep.level = level;
            rep.dimension = dim;
            for (const auto& g : groups) rep.groups[g];
            for (std::size_t h = 0; h < regions.size(); ++h) {
                if (regions[h].level != level) continue;
                for (const auto& s : samples) {
                    if (s.ip[slot] != h) continue;
                    auto& cell = rep.groups[value_of(s, dim)];
                    ++cell.claimed_in_region;
                    if (s.gt[slot] == h) ++cell.matched_in_region;
                }
            }
            accuracy[level].emplace(dim, std::move(rep));
        }
    }
}

std::vector<GeoPoint> distinct_anchors(std::span<const IpRange> ranges) {
    std::set<GeoPoint> set;
    for (const auto& r : ranges) set.insert(r.anchor);
    return {set.begin(), set.end()};
}

std::int64_t day_of(std::int64_t t) {
    std::int64_t d = t / 86400;
    if (t % 86400 != 0 && t < 0) --d;
    return d;
}

double population_variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (const double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size());
}

}  // namespace

AuditResults audit(const AuditData& data, const Limits& limits) {
    check_scale(data, limits);
    AuditResults r;
    r.events_total = data.ingest.events.size() + data.ingest.rejects.size();
    r.events_rejected = data.ingest.rejects.size();
    r.events_outside_window = data.ingest.outside_window;
    for (const auto& rej : data.ingest.rejects) ++r.reject_reasons[rej.reason];

    std::set<GeoPoint> all;
    for (const auto& snap : data.series.snapshots()) {
        const auto anchors = distinct_anchors(snap.ranges());
        all.insert(anchors.begin(), anchors.end());
        r.series_ranges += snap.ranges().size();
        r.snapshots.push_back({snap.provider_id(), snap.window(), snap.ranges().size(), anchors.size(),
                               static_cast<double>(snap.ranges().size()) / static_cast<double>(anchors.size())});
    }
    r.series_anchors = all.size();

    const auto joined = join_linear(data);
    r.matched = joined.samples.size();
    r.unmatched_reasons = joined.unmatched;
    metrics_into(joined.samples, data.region_list, r.precision, r.accuracy);

    // Anchor density per grid cell of the ground truth.
    const int res = data.regions.resolution();
    std::map<std::uint64_t, std::uint64_t> anchors_in;
    for (const auto& a : all) ++anchors_in[cell_of(a, res).index];
    std::map<std::uint64_t, std::vector<double>> errors_in;
    for (const auto& s : joined.samples) errors_in[cell_of(s.event->pos_gt, res).index].push_back(s.error_km);
    DensityCorrelation dc;
    dc.resolution = res;
    std::vector<double> x, y;
    for (auto& [cell, errors] : errors_in) {
        const auto n = anchors_in.find(cell);
        if (n == anchors_in.end()) {
            ++dc.excluded_zero_anchor_cells;
            continue;
        }
        std::sort(errors.begin(), errors.end());
        const double median = sorted_quantile(errors, 0.5);
        if (median == 0.0) {
            ++dc.excluded_zero_error_cells;
            continue;
        }
        x.push_back(std::log10(median));
        y.push_back(std::log10(static_cast<double>(n->second)));
    }
    dc.usable_cells = x.size();
    if (dc.usable_cells >= 2) {
        dc.pearson_r = pearson_two_pass(x, y);
        r.density = dc;
    }

    std::map<std::int64_t, std::vector<double>> by_day;
    for (const auto& s : joined.samples) by_day[day_of(s.event->timestamp)].push_back(s.error_km);
    if (by_day.size() >= 2) {
        StabilityReport st;
        std::vector<double> km, m;
        for (auto& [day, errors] : by_day) {
            std::sort(errors.begin(), errors.end());
            const double median = sorted_quantile(errors, 0.5);
            st.daily.push_back({day, median});
            km.push_back(median);
            m.push_back(median * 1000.0);
        }
        st.variance_km2 = population_variance(km);
        st.variance_m2 = population_variance(m);
        r.stability = st;
    }
    return r;
}

UpperBoundReport upper_bound(const AuditData& data, const Limits& limits) {
    check_scale(data, limits);
    std::vector<std::vector<GeoPoint>> anchors;
    for (const auto& snap : data.series.snapshots()) anchors.push_back(distinct_anchors(snap.ranges()));

    auto joined = join_linear(data);
    UpperBoundReport r;
    r.sample_count = joined.samples.size();
    std::uint64_t same = 0;
    for (auto& s : joined.samples) {
        const auto best = nearest_exhaustive(anchors[s.ordinal], s.event->pos_gt);
        r.per_sample.push_back({best.anchor, best.distance_km});
        if (best.distance_km > s.error_km) ++r.dominance_violations;
        if (best.anchor == s.pos_ip) {
            ++same;
        } else {
            ++r.reassigned_count;
            s.ip = labels_of(data.region_list, best.anchor);
        }
        s.pos_ip = best.anchor;
        s.error_km = best.distance_km;
    }
    if (r.sample_count > 0) r.internal_accuracy = static_cast<double>(same) / static_cast<double>(r.sample_count);
    metrics_into(joined.samples, data.region_list, r.optimal_precision, r.optimal_accuracy);
    return r;
}

}  // namespace geoaudit::oracle
