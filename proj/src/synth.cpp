#include "geoaudit/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include "geoaudit/campaign.hpp"
#include "geoaudit/error.hpp"
#include "geoaudit/ground_truth.hpp"
#include "geoaudit/io.hpp"
#include "geoaudit/rng.hpp"
#include "geoaudit/text.hpp"
#include "geoaudit/version.hpp"

namespace geoaudit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config (de)serialisation

namespace {

json box_json(const BoundingBox& b) { return {{"lat", {b.lat_lo, b.lat_hi}}, {"lon", {b.lon_lo, b.lon_hi}}}; }

BoundingBox box_from_json(const json& j) {
    return {j.at("lat").at(0).get<double>(), j.at("lat").at(1).get<double>(), j.at("lon").at(0).get<double>(),
            j.at("lon").at(1).get<double>()};
}

json error_json(const LogNormalError& e) { return {{"median_km", e.median_km}, {"sigma", e.sigma}}; }

LogNormalError error_from_json(const json& j, LogNormalError d) {
    d.median_km = j.value("median_km", d.median_km);
    d.sigma = j.value("sigma", d.sigma);
    return d;
}

}  // namespace

json to_json(const WorldConfig& c) {
    json countries = json::array();
    for (const auto& cc : c.countries)
        countries.push_back({{"code", cc.code},
                             {"box", box_json(cc.box)},
                             {"anchors", cc.n_anchors},
                             {"ranges", cc.n_ranges},
                             {"events", cc.n_events},
                             {"bids", cc.n_bids},
                             {"bid_median_geoip", cc.bid_median_geoip},
                             {"bid_median_gps", cc.bid_median_gps}});
    return {{"seed", c.seed},
            {"countries", countries},
            {"placement", c.placement == AnchorPlacement::uniform ? "uniform" : "clustered"},
            {"clusters", c.n_clusters},
            {"cluster_spread_km", c.cluster_spread_km},
            {"cluster_share", c.cluster_share},
            {"cellular_share", c.cellular_share},
            {"fixed_error", error_json(c.fixed_error)},
            {"cellular_error", error_json(c.cellular_error)},
            {"region_splits", c.region_splits},
            {"urbanization_resolution", c.urbanization_resolution},
            {"urban_min_anchors", c.urban_min_anchors},
            {"semi_urban_min_anchors", c.semi_urban_min_anchors},
            {"start_time", c.start_time},
            {"days", c.days},
            {"snapshots", c.snapshots},
            {"reassign_share", c.reassign_share},
            {"provider_b_share", c.provider_b_share},
            {"unmatched_ip_share", c.unmatched_ip_share},
            {"invalid_event_share", c.invalid_event_share},
            {"gps_share", c.gps_share},
            {"geoip_share", c.geoip_share},
            {"user_share", c.user_share}};
}

WorldConfig world_config_from_json(const json& j) {
    WorldConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("countries")) {
            c.countries.clear();
            for (const auto& cj : j.at("countries")) {
                CountryConfig cc;
                cc.code = cj.value("code", cc.code);
                if (cj.contains("box")) cc.box = box_from_json(cj.at("box"));
                cc.n_anchors = cj.value("anchors", cc.n_anchors);
                cc.n_ranges = cj.value("ranges", cc.n_ranges);
                cc.n_events = cj.value("events", cc.n_events);
                cc.n_bids = cj.value("bids", cc.n_bids);
                cc.bid_median_geoip = cj.value("bid_median_geoip", cc.bid_median_geoip);
                cc.bid_median_gps = cj.value("bid_median_gps", cc.bid_median_gps);
                c.countries.push_back(cc);
            }
        }
        const std::string placement = j.value("placement", "clustered");
        if (placement != "uniform" && placement != "clustered")
            throw Error("infeasible_config", "placement must be 'uniform' or 'clustered'");
        c.placement = placement == "uniform" ? AnchorPlacement::uniform : AnchorPlacement::clustered;
        c.n_clusters = j.value("clusters", c.n_clusters);
        c.cluster_spread_km = j.value("cluster_spread_km", c.cluster_spread_km);
        c.cluster_share = j.value("cluster_share", c.cluster_share);
        c.cellular_share = j.value("cellular_share", c.cellular_share);
        if (j.contains("fixed_error")) c.fixed_error = error_from_json(j.at("fixed_error"), c.fixed_error);
        if (j.contains("cellular_error")) c.cellular_error = error_from_json(j.at("cellular_error"), c.cellular_error);
        c.region_splits = j.value("region_splits", c.region_splits);
        c.urbanization_resolution = j.value("urbanization_resolution", c.urbanization_resolution);
        c.urban_min_anchors = j.value("urban_min_anchors", c.urban_min_anchors);
        c.semi_urban_min_anchors = j.value("semi_urban_min_anchors", c.semi_urban_min_anchors);
        c.start_time = j.value("start_time", c.start_time);
        c.days = j.value("days", c.days);
        c.snapshots = j.value("snapshots", c.snapshots);
        c.reassign_share = j.value("reassign_share", c.reassign_share);
        c.provider_b_share = j.value("provider_b_share", c.provider_b_share);
        c.unmatched_ip_share = j.value("unmatched_ip_share", c.unmatched_ip_share);
        c.invalid_event_share = j.value("invalid_event_share", c.invalid_event_share);
        c.gps_share = j.value("gps_share", c.gps_share);
        c.geoip_share = j.value("geoip_share", c.geoip_share);
        c.user_share = j.value("user_share", c.user_share);
    } catch (const json::exception& e) {
        throw Error("infeasible_config", std::string("world config: ") + e.what());
    }
    return c;
}

WorldConfig world_preset(const std::string& name) {
    WorldConfig c;
    if (name == "desk") return c;
    c.snapshots = 1;
    auto& cc = c.countries.front();
    cc.n_events = 20000;
    cc.n_bids = 4000;
    if (name == "spain") {
        cc.n_ranges = 139687;
        cc.n_anchors = 5288;
        cc.bid_median_gps = 1.01;
        return c;
    }
    if (name == "france") {
        cc.code = "FR";
        cc.box = {42.3, 51.1, -4.8, 8.2};
        cc.n_ranges = 399500;
        cc.n_anchors = 16367;
        cc.bid_median_gps = 2.34;
        return c;
    }
    if (name == "gb") {
        cc.code = "GB";
        cc.box = {49.9, 58.7, -8.2, 1.8};
        cc.n_ranges = 1051937;
        cc.n_anchors = 10448;
        cc.bid_median_gps = 2.08;
        return c;
    }
    throw Error("infeasible_config", "unknown world preset '" + name + "' (desk, spain, france, gb)");
}

namespace {

constexpr std::uint32_t kFirstIp = 0x01000000;      // 1.0.0.0
constexpr std::uint32_t kUnmatchedBase = 0xF0000000;  // 240.0.0.0, never allocated
constexpr double kKmPerDegree = kEarthRadiusKm * std::numbers::pi / 180.0;
constexpr double kAnchorMargin = 1e-3;  // degrees kept clear of the country edge

[[noreturn]] void infeasible(const std::string& what) { throw Error("infeasible_config", what); }

bool share_ok(double s) { return std::isfinite(s) && s >= 0.0 && s <= 1.0; }

}  // namespace

void validate_world_config(const WorldConfig& c) {
    if (c.countries.empty()) infeasible("no countries configured");
    std::set<std::string> codes;
    std::uint64_t total_ranges = 0;
    for (std::size_t i = 0; i < c.countries.size(); ++i) {
        const auto& cc = c.countries[i];
        if (cc.code.size() < 2 || cc.code.size() > 3 ||
            !std::all_of(cc.code.begin(), cc.code.end(), [](char ch) { return std::isupper(static_cast<unsigned char>(ch)); }))
            infeasible("country code '" + cc.code + "' must be 2-3 upper-case letters");
        if (!codes.insert(cc.code).second) infeasible("duplicate country code '" + cc.code + "'");
        const auto& b = cc.box;
        if (!(b.lat_lo >= -89.0 && b.lat_hi <= 89.0 && b.lat_lo + 0.1 < b.lat_hi && b.lon_lo >= -179.0 &&
              b.lon_hi <= 179.0 && b.lon_lo + 0.1 < b.lon_hi))
            infeasible("country '" + cc.code + "' has an invalid bounding box");
        for (std::size_t k = 0; k < i; ++k) {
            const auto& o = c.countries[k].box;
            if (b.lat_lo < o.lat_hi && o.lat_lo < b.lat_hi && b.lon_lo < o.lon_hi && o.lon_lo < b.lon_hi)
                infeasible("bounding boxes of '" + cc.code + "' and '" + c.countries[k].code + "' overlap");
        }
        if (cc.n_anchors == 0) infeasible("country '" + cc.code + "' needs at least one anchor");
        if (cc.n_anchors > cc.n_ranges)
            infeasible("country '" + cc.code + "' has more anchors (" + std::to_string(cc.n_anchors) + ") than ranges (" +
                       std::to_string(cc.n_ranges) + ")");
        if (!(cc.bid_median_geoip > 0.1 && cc.bid_median_gps > 0.1 && std::isfinite(cc.bid_median_geoip) &&
              std::isfinite(cc.bid_median_gps)))
            infeasible("country '" + cc.code + "' bid-floor medians must be > 0.1");
        total_ranges += cc.n_ranges;
    }
    // Worst case 257 addresses per range plus an occasional gap of up to 256.
    if (total_ranges * 513 > kUnmatchedBase - kFirstIp) infeasible("too many ranges for the IPv4 space");
    for (const auto* e : {&c.fixed_error, &c.cellular_error})
        if (!(std::isfinite(e->median_km) && e->median_km >= 0.0 && std::isfinite(e->sigma) && e->sigma >= 0.0))
            infeasible("error distribution parameters must be finite and non-negative");
    for (double s : {c.cluster_share, c.cellular_share, c.reassign_share, c.provider_b_share, c.unmatched_ip_share,
                     c.invalid_event_share, c.gps_share, c.geoip_share, c.user_share})
        if (!share_ok(s)) infeasible("shares must lie in [0, 1]");
    if (c.gps_share + c.geoip_share + c.user_share > 1.0) infeasible("bid source shares sum above 1");
    if (!(std::isfinite(c.cluster_spread_km) && c.cluster_spread_km >= 0.0)) infeasible("cluster spread must be >= 0");
    if (c.placement == AnchorPlacement::clustered && c.n_clusters == 0) infeasible("clustered placement needs clusters");
    if (c.region_splits < 1 || c.region_splits > 8) infeasible("region_splits must lie in 1..8");
    if (c.urbanization_resolution < 0 || c.urbanization_resolution > 16)
        infeasible("urbanization_resolution must lie in 0..16");
    if (c.days < 1) infeasible("study period must be at least one day");
    if (c.snapshots < 1 || c.snapshots > static_cast<std::size_t>(c.days) * 24)
        infeasible("snapshots must lie in 1..(24 * days)");
}

// ---------------------------------------------------------------------------

WorldFiles WorldFiles::from_directory(const std::string& dir) {
    const fs::path base(dir);
    const auto manifest_path = (base / "manifest.json").string();
    json doc;
    try {
        doc = json::parse(io::read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw Error("parse", manifest_path + ": " + e.what());
    }
    WorldFiles f;
    try {
        const auto& files = doc.at("files");
        f.snapshots_a = (base / files.at("snapshots_a").get<std::string>()).string();
        f.snapshots_b = (base / files.at("snapshots_b").get<std::string>()).string();
        f.regions = (base / files.at("regions").get<std::string>()).string();
        f.urbanization = (base / files.at("urbanization").get<std::string>()).string();
        f.events = (base / files.at("events").get<std::string>()).string();
        f.bidstream = (base / files.at("bidstream").get<std::string>()).string();
    } catch (const json::exception& e) {
        throw Error("parse", manifest_path + ": " + e.what());
    }
    return f;
}

namespace {

// Nearest value with `decimals` decimal digits, so it prints short.
double quantize(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(v * scale) / scale;
}

// Half-open like the region ray cast, so planted points always fall inside
// the country polygon.
bool in_box(const BoundingBox& b, const GeoPoint& p) {
    return p.lat >= b.lat_lo && p.lat < b.lat_hi && p.lon >= b.lon_lo && p.lon < b.lon_hi;
}

GeoPoint uniform_in(Rng& rng, const BoundingBox& b, double margin) {
    return {rng.uniform(b.lat_lo + margin, b.lat_hi - margin), rng.uniform(b.lon_lo + margin, b.lon_hi - margin)};
}

struct Country {
    const CountryConfig* cfg = nullptr;
    std::size_t anchor_begin = 0;  // into World::anchors
    std::size_t range_begin = 0;   // into World::ranges
};

struct RangeSlot {
    std::uint32_t start;
    std::uint32_t end;
    ConnType conn;
    std::size_t country;
};

struct World {
    std::vector<Country> countries;
    std::vector<GeoPoint> anchors;
    std::vector<RangeSlot> ranges;
    // assignment[provider][snapshot][range] -> anchor index
    std::vector<std::vector<std::uint32_t>> assign_a;
    std::vector<std::vector<std::uint32_t>> assign_b;
    std::vector<TimeWindow> windows;
};

double draw_error(Rng& rng, const WorldConfig& c, ConnType conn) {
    const auto& e = conn == ConnType::cellular ? c.cellular_error : c.fixed_error;
    if (e.median_km == 0.0) return 0.0;
    return rng.lognormal_median(e.median_km, e.sigma);
}

// Moves `anchor` by a planted distance in a random direction, keeping the
// result inside the country box. Returns the planted distance.
double displace(Rng& rng, const WorldConfig& c, ConnType conn, const GeoPoint& anchor, const BoundingBox& box,
                GeoPoint& out) {
    double d = draw_error(rng, c, conn);
    for (int attempt = 0; attempt < 64; ++attempt) {
        if (d == 0.0) {
            out = anchor;
            return 0.0;
        }
        if (attempt > 0 && attempt % 8 == 0) d = draw_error(rng, c, conn);
        const GeoPoint p = destination(anchor, rng.uniform(0.0, 2.0 * std::numbers::pi), d);
        if (in_box(box, p)) {
            out = p;
            return d;
        }
    }
    out = anchor;
    return 0.0;
}

std::vector<GeoPoint> place_anchors(const WorldConfig& c, const CountryConfig& cc, std::size_t country_idx) {
    Rng rng(mix_seed({c.seed, country_idx, 1}));
    std::vector<GeoPoint> centres;
    if (c.placement == AnchorPlacement::clustered)
        for (std::size_t i = 0; i < c.n_clusters; ++i) centres.push_back(uniform_in(rng, cc.box, kAnchorMargin));

    const BoundingBox inner{cc.box.lat_lo + kAnchorMargin, cc.box.lat_hi - kAnchorMargin,
                            cc.box.lon_lo + kAnchorMargin, cc.box.lon_hi - kAnchorMargin};
    std::unordered_set<GeoPoint, GeoPointHash> seen;
    std::vector<GeoPoint> out;
    out.reserve(cc.n_anchors);
    std::uint64_t attempts = 0;
    while (out.size() < cc.n_anchors) {
        if (++attempts > 100 * cc.n_anchors + 1000)
            infeasible("cannot place " + std::to_string(cc.n_anchors) + " distinct anchors in '" + cc.code + "'");
        GeoPoint p;
        if (!centres.empty() && rng.bernoulli(c.cluster_share)) {
            const auto& ctr = centres[rng.below(centres.size())];
            const double north = rng.normal() * c.cluster_spread_km;
            const double east = rng.normal() * c.cluster_spread_km;
            p.lat = ctr.lat + north / kKmPerDegree;
            p.lon = ctr.lon + east / (kKmPerDegree * std::cos(ctr.lat * std::numbers::pi / 180.0));
            if (!in_box(inner, p)) p = uniform_in(rng, cc.box, kAnchorMargin);
        } else {
            p = uniform_in(rng, cc.box, kAnchorMargin);
        }
        p = {quantize(p.lat, 4), quantize(p.lon, 4)};
        if (!in_box(inner, p)) continue;
        if (seen.insert(p).second) out.push_back(p);
    }
    return out;
}

World build_world(const WorldConfig& c) {
    World w;
    std::uint32_t cursor = kFirstIp;
    for (std::size_t ci = 0; ci < c.countries.size(); ++ci) {
        const auto& cc = c.countries[ci];
        Country country{&cc, w.anchors.size(), w.ranges.size()};
        const auto anchors = place_anchors(c, cc, ci);
        w.anchors.insert(w.anchors.end(), anchors.begin(), anchors.end());

        Rng rng(mix_seed({c.seed, ci, 2}));
        for (std::size_t r = 0; r < cc.n_ranges; ++r) {
            if (rng.bernoulli(0.02)) cursor += 1 + static_cast<std::uint32_t>(rng.below(256));
            const auto size = 1 + static_cast<std::uint32_t>(rng.below(256));
            const ConnType conn = rng.bernoulli(c.cellular_share) ? ConnType::cellular : ConnType::fixed;
            w.ranges.push_back({cursor, cursor + size - 1, conn, ci});
            cursor += size;
        }
        w.countries.push_back(country);
    }

    const std::int64_t span = static_cast<std::int64_t>(c.days) * 86400;
    const auto k = static_cast<std::int64_t>(c.snapshots);
    for (std::int64_t i = 0; i < k; ++i)
        w.windows.push_back({c.start_time + span * i / k, c.start_time + span * (i + 1) / k});

    // First snapshot: every anchor gets at least one range, the rest uniformly.
    std::vector<std::uint32_t> base(w.ranges.size());
    for (std::size_t ci = 0; ci < w.countries.size(); ++ci) {
        const auto& country = w.countries[ci];
        const auto n_anchors = country.cfg->n_anchors;
        const auto n_ranges = country.cfg->n_ranges;
        Rng rng(mix_seed({c.seed, ci, 3}));
        std::vector<std::uint32_t> order(n_ranges);
        for (std::size_t i = 0; i < n_ranges; ++i) order[i] = static_cast<std::uint32_t>(i);
        for (std::size_t i = 0; i + 1 < n_ranges; ++i)
            std::swap(order[i], order[i + rng.below(n_ranges - i)]);
        for (std::size_t i = 0; i < n_ranges; ++i) {
            const std::size_t a = i < n_anchors ? i : rng.below(n_anchors);
            base[country.range_begin + order[i]] = static_cast<std::uint32_t>(country.anchor_begin + a);
        }
    }

    auto reassign = [&](std::vector<std::uint32_t> assign, Rng& rng, double share) {
        for (std::size_t r = 0; r < assign.size(); ++r) {
            if (!rng.bernoulli(share)) continue;
            const auto& country = w.countries[w.ranges[r].country];
            assign[r] = static_cast<std::uint32_t>(country.anchor_begin + rng.below(country.cfg->n_anchors));
        }
        return assign;
    };
    Rng drift(mix_seed({c.seed, 4}));
    w.assign_a.push_back(base);
    for (std::size_t s = 1; s < c.snapshots; ++s) w.assign_a.push_back(reassign(w.assign_a.back(), drift, c.reassign_share));
    Rng other(mix_seed({c.seed, 5}));
    for (const auto& a : w.assign_a) w.assign_b.push_back(reassign(a, other, c.provider_b_share));
    return w;
}

std::string snapshot_csv(const World& w, const std::vector<std::uint32_t>& assign) {
    std::string out(kSnapshotHeader);
    out += '\n';
    for (std::size_t r = 0; r < w.ranges.size(); ++r) {
        const auto& slot = w.ranges[r];
        const auto& a = w.anchors[assign[r]];
        out += to_string(IpAddress{slot.start});
        out += ',';
        out += to_string(IpAddress{slot.end});
        out += ',';
        out += text::format_double(a.lat);
        out += ',';
        out += text::format_double(a.lon);
        out += ',';
        out += to_string(slot.conn);
        out += '\n';
    }
    return out;
}

std::vector<AdminRegion> build_regions(const WorldConfig& c) {
    std::vector<AdminRegion> out;
    const std::size_t s = static_cast<std::size_t>(c.region_splits);
    std::size_t finest = 1;
    for (int i = 0; i < kMaxLevel - kMinLevel; ++i) finest *= s;
    for (const auto& cc : c.countries) {
        const auto& b = cc.box;
        // Shared edge arrays so nested rectangles meet exactly.
        std::vector<double> lat_edge(finest + 1), lon_edge(finest + 1);
        for (std::size_t i = 0; i <= finest; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(finest);
            lat_edge[i] = i == finest ? b.lat_hi : b.lat_lo + (b.lat_hi - b.lat_lo) * t;
            lon_edge[i] = i == finest ? b.lon_hi : b.lon_lo + (b.lon_hi - b.lon_lo) * t;
        }
        for (int level = kMaxLevel; level >= kMinLevel; --level) {
            std::size_t g = 1;
            for (int i = level; i < kMaxLevel; ++i) g *= s;
            const std::size_t stride = finest / g;
            for (std::size_t i = 0; i < g; ++i) {
                for (std::size_t j = 0; j < g; ++j) {
                    AdminRegion r;
                    r.id = level == kMaxLevel
                               ? cc.code
                               : cc.code + "-L" + std::to_string(level) + "-" + std::to_string(i) + "-" + std::to_string(j);
                    r.level = level;
                    r.country = cc.code;
                    const double la0 = lat_edge[i * stride], la1 = lat_edge[(i + 1) * stride];
                    const double lo0 = lon_edge[j * stride], lo1 = lon_edge[(j + 1) * stride];
                    r.polygons.push_back(Polygon{{Ring{{la0, lo0}, {la0, lo1}, {la1, lo1}, {la1, lo0}, {la0, lo0}}}});
                    out.push_back(std::move(r));
                }
            }
        }
    }
    return out;
}

UrbanizationMap build_urbanization(const WorldConfig& c, const World& w) {
    const int res = c.urbanization_resolution;
    std::map<std::uint64_t, std::size_t> counts;
    for (const auto& a : w.anchors) ++counts[cell_of(a, res).index];
    UrbanizationMap map(res);
    for (const auto& cc : c.countries) {
        const auto& b = cc.box;
        for (auto row = row_of(b.lat_lo, res); row <= row_of(b.lat_hi, res); ++row) {
            for (auto col = col_of(b.lon_lo, res); col <= col_of(b.lon_hi, res); ++col) {
                const auto cell = cell_at(row, col, res);
                const auto it = counts.find(cell.index);
                const std::size_t n = it == counts.end() ? 0 : it->second;
                map.set(cell, n >= c.urban_min_anchors        ? Urbanization::urban
                              : n >= c.semi_urban_min_anchors ? Urbanization::semi_urban
                                                              : Urbanization::rural);
            }
        }
    }
    return map;
}

const std::vector<std::string>& carriers_for(const std::string& code) {
    static const std::map<std::string, std::vector<std::string>> kByCountry = {
        {"ES", {"Movistar", "Vodafone", "Orange", "Yoigo"}},
        {"FR", {"Orange", "SFR", "Bouygues", "Free"}},
        {"GB", {"EE", "Vodafone", "O2", "Three"}},
    };
    static const std::vector<std::string> kDefault = {"Carrier One", "Carrier Two", "Carrier Three"};
    const auto it = kByCountry.find(code);
    return it == kByCountry.end() ? kDefault : it->second;
}

// The raw carrier field is noisy: random case and padding.
std::string noisy_carrier(Rng& rng, const std::string& name) {
    std::string s = name;
    switch (rng.below(4)) {
        case 1: s = text::to_lower(s); break;
        case 2:
            for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            break;
        default: break;
    }
    if (rng.bernoulli(0.2)) s = " " + s;
    if (rng.bernoulli(0.2)) s += " ";
    return s;
}

IpAddress ip_in(Rng& rng, const RangeSlot& slot) {
    return IpAddress{slot.start + static_cast<std::uint32_t>(rng.below(std::uint64_t{slot.end} - slot.start + 1))};
}

IpAddress unmatched_ip(Rng& rng) { return IpAddress{kUnmatchedBase + static_cast<std::uint32_t>(rng.below(1u << 24))}; }

std::size_t window_of(const World& w, std::int64_t t) {
    for (std::size_t i = 0; i < w.windows.size(); ++i)
        if (w.windows[i].contains(t)) return i;
    return w.windows.size() - 1;
}

struct EventRow {
    std::int64_t ts;
    std::string line;
    std::optional<double> displacement;
    bool invalid;
    bool unmatched;
};

std::vector<EventRow> build_events(const WorldConfig& c, const World& w) {
    std::vector<EventRow> rows;
    const std::int64_t span = static_cast<std::int64_t>(c.days) * 86400;
    for (std::size_t ci = 0; ci < w.countries.size(); ++ci) {
        const auto& country = w.countries[ci];
        const auto& cc = *country.cfg;
        const auto& carriers = carriers_for(cc.code);
        Rng rng(mix_seed({c.seed, ci, 6}));
        for (std::size_t e = 0; e < cc.n_events; ++e) {
            const std::int64_t ts = c.start_time + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)));
            const auto carrier = noisy_carrier(rng, carriers[rng.below(carriers.size())]);
            EventRow row{ts, {}, std::nullopt, false, false};
            GeoPoint pos;
            IpAddress ip;
            if (rng.bernoulli(c.unmatched_ip_share)) {
                ip = unmatched_ip(rng);
                pos = uniform_in(rng, cc.box, kAnchorMargin);
                row.unmatched = true;
            } else {
                const std::size_t r = country.range_begin + rng.below(cc.n_ranges);
                const auto& slot = w.ranges[r];
                ip = ip_in(rng, slot);
                const auto& anchor = w.anchors[w.assign_a[window_of(w, ts)][r]];
                row.displacement = displace(rng, c, slot.conn, anchor, cc.box, pos);
            }
            std::string lat = text::format_double(pos.lat);
            if (rng.bernoulli(c.invalid_event_share)) {
                lat = "95";
                row.invalid = true;
                row.unmatched = false;
                row.displacement.reset();
            }
            row.line = std::to_string(ts) + "," + lat + "," + text::format_double(pos.lon) + "," + to_string(ip) + "," +
                       carrier + "," + cc.code;
            rows.push_back(std::move(row));
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const EventRow& a, const EventRow& b) { return a.ts < b.ts; });
    return rows;
}

// Floors for one (country, source) group whose median is exactly `median`:
// the middle one or two values equal it, half the rest lie strictly below and
// half strictly above.
std::vector<double> planted_floors(Rng& rng, std::size_t n, double median) {
    std::vector<double> v;
    v.reserve(n);
    const std::size_t middle = n % 2 == 1 ? 1 : 2;
    const std::size_t side = n >= middle ? (n - middle) / 2 : 0;
    for (std::size_t i = 0; i < side; ++i)
        v.push_back(quantize(median * std::exp(-1e-3 - std::abs(0.5 * rng.normal())), 4));
    for (std::size_t i = 0; i < side; ++i)
        v.push_back(quantize(median * std::exp(1e-3 + std::abs(0.5 * rng.normal())), 4));
    for (std::size_t i = 0; i < std::min(middle, n); ++i) v.push_back(median);
    for (std::size_t i = 0; i + 1 < v.size(); ++i) std::swap(v[i], v[i + rng.below(v.size() - i)]);
    return v;
}

std::vector<BidRequest> build_bids(const WorldConfig& c, const World& w, PlantedTruth& truth) {
    std::vector<BidRequest> bids;
    std::vector<std::size_t> country_of;
    const std::int64_t span = static_cast<std::int64_t>(c.days) * 86400;
    for (std::size_t ci = 0; ci < w.countries.size(); ++ci) {
        const auto& country = w.countries[ci];
        const auto& cc = *country.cfg;
        Rng rng(mix_seed({c.seed, ci, 7}));
        for (std::size_t i = 0; i < cc.n_bids; ++i) {
            BidRequest b;
            b.timestamp = c.start_time + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)));
            const double u = rng.uniform();
            b.loc_source = u < c.gps_share                                  ? LocationSource::gps
                           : u < c.gps_share + c.geoip_share                ? LocationSource::geoip
                           : u < c.gps_share + c.geoip_share + c.user_share ? LocationSource::user
                                                                            : LocationSource::unavailable;
            // GeoIP-priced bids always resolve so their country is known.
            const bool unmatched = b.loc_source != LocationSource::geoip && rng.bernoulli(c.unmatched_ip_share);
            const std::size_t r = country.range_begin + rng.below(cc.n_ranges);
            const auto& slot = w.ranges[r];
            b.ip = unmatched ? unmatched_ip(rng) : ip_in(rng, slot);
            if (b.loc_source == LocationSource::gps) {
                GeoPoint pos;
                if (unmatched)
                    pos = uniform_in(rng, cc.box, kAnchorMargin);
                else
                    displace(rng, c, slot.conn, w.anchors[w.assign_a[window_of(w, b.timestamp)][r]], cc.box, pos);
                b.pos = pos;
            } else if (b.loc_source == LocationSource::user) {
                b.pos = uniform_in(rng, cc.box, kAnchorMargin);
            }
            bids.push_back(b);
            country_of.push_back(ci);
        }
    }

    for (std::size_t ci = 0; ci < w.countries.size(); ++ci) {
        const auto& cc = *w.countries[ci].cfg;
        Rng rng(mix_seed({c.seed, ci, 8}));
        for (const auto src : {LocationSource::geoip, LocationSource::gps, LocationSource::user,
                               LocationSource::unavailable}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < bids.size(); ++i)
                if (country_of[i] == ci && bids[i].loc_source == src) idx.push_back(i);
            if (idx.empty()) continue;
            const double median = src == LocationSource::geoip ? cc.bid_median_geoip
                                  : src == LocationSource::gps ? cc.bid_median_gps
                                                               : 1.5;
            const auto floors = planted_floors(rng, idx.size(), median);
            for (std::size_t i = 0; i < idx.size(); ++i) bids[idx[i]].bid_floor = floors[i];
            truth.bid_floor_medians[cc.code + "/" + std::string(to_string(src))] = median;
        }
    }
    std::stable_sort(bids.begin(), bids.end(),
                     [](const BidRequest& a, const BidRequest& b) { return a.timestamp < b.timestamp; });
    return bids;
}

}  // namespace

GeneratedWorld generate_world(const WorldConfig& config, const std::string& out_dir) {
    validate_world_config(config);
    const World w = build_world(config);
    GeneratedWorld out;
    const fs::path base(out_dir);
    fs::create_directories(base / "snapshots");

    auto emit = [&](const std::string& rel, const std::string& content) {
        io::write_file_atomic((base / rel).string(), content);
        out.sha256[rel] = io::sha256_hex(content);
    };

    auto emit_series = [&](const std::string& name, const std::vector<std::vector<std::uint32_t>>& assign) {
        json entries = json::array();
        for (std::size_t s = 0; s < assign.size(); ++s) {
            const std::string rel = "snapshots/" + name + "_" + std::to_string(s) + ".csv";
            const std::string csv = snapshot_csv(w, assign[s]);
            std::istringstream check(csv);
            parse_snapshot(check, w.windows[s], name);  // self-test on emit
            emit(rel, csv);
            entries.push_back({{"file", name + "_" + std::to_string(s) + ".csv"},
                               {"valid_from", w.windows[s].from},
                               {"valid_to", w.windows[s].to}});
        }
        const std::string rel = "snapshots/" + name + ".json";
        emit(rel, json{{"provider", name}, {"snapshots", entries}}.dump(2) + "\n");
        return rel;
    };

    const auto series_a = emit_series("a", w.assign_a);
    const auto series_b = emit_series("b", w.assign_b);

    const auto regions = build_regions(config);
    emit("regions.geojson", regions_to_geojson(regions));
    emit("urbanization.csv", serialize_urbanization_map(build_urbanization(config, w)));

    auto& truth = out.truth;
    const auto events = build_events(config, w);
    std::string events_csv(kEventsHeader);
    events_csv += '\n';
    std::string planted_csv = "row,displacement_km\n";
    for (std::size_t i = 0; i < events.size(); ++i) {
        events_csv += events[i].line;
        events_csv += '\n';
        truth.event_displacement_km.push_back(events[i].displacement);
        if (!events[i].invalid) ++truth.valid_events;
        if (events[i].unmatched) ++truth.unmatched_events;
        planted_csv += std::to_string(i) + "," +
                       (events[i].displacement ? text::format_double(*events[i].displacement) : std::string()) + "\n";
    }
    emit("events.csv", events_csv);
    emit("planted_events.csv", planted_csv);

    emit("bidstream.csv", serialize_bidstream(build_bids(config, w, truth)));

    truth.range_anchor.reserve(w.ranges.size());
    for (const auto a : w.assign_a.front()) truth.range_anchor.push_back(w.anchors[a]);
    {
        std::unordered_set<GeoPoint, GeoPointHash> used(truth.range_anchor.begin(), truth.range_anchor.end());
        truth.expected_reuse_factor = static_cast<double>(w.ranges.size()) / static_cast<double>(used.size());
    }

    json medians = json::object();
    for (const auto& [k, v] : truth.bid_floor_medians) medians[k] = v;
    emit("planted_truth.json", json{{"expected_reuse_factor", truth.expected_reuse_factor},
                                    {"valid_events", truth.valid_events},
                                    {"unmatched_events", truth.unmatched_events},
                                    {"bid_floor_medians", medians},
                                    {"per_event", "planted_events.csv"}}
                                       .dump(2) + "\n");

    const json files = {{"snapshots_a", series_a}, {"snapshots_b", series_b}, {"regions", "regions.geojson"},
                        {"urbanization", "urbanization.csv"}, {"events", "events.csv"}, {"bidstream", "bidstream.csv"}};
    json hashes = json::object();
    for (const auto& [k, v] : out.sha256) hashes[k] = v;
    const json manifest = {{"tool", kToolName},  {"version", kToolVersion}, {"seed", config.seed},
                           {"config", to_json(config)}, {"files", files}, {"sha256", hashes}};
    io::write_file_atomic((base / "manifest.json").string(), manifest.dump(2) + "\n");
    out.files = WorldFiles::from_directory(out_dir);
    return out;
}

}  // namespace geoaudit
