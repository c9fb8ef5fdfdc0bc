#include "geoaudit/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <tuple>

#include <json.hpp>

#include "geoaudit/error.hpp"
#include "geoaudit/metrics.hpp"
#include "geoaudit/parallel.hpp"
#include "geoaudit/rng.hpp"
#include "geoaudit/text.hpp"

namespace geoaudit {

std::string_view to_string(LocationSource s) noexcept {
    switch (s) {
        case LocationSource::gps: return "gps";
        case LocationSource::geoip: return "geoip";
        case LocationSource::user: return "user";
        case LocationSource::unavailable: break;
    }
    return "unavailable";
}

std::optional<LocationSource> parse_location_source(std::string_view s) noexcept {
    s = text::trim(s);
    if (s == "gps") return LocationSource::gps;
    if (s == "geoip") return LocationSource::geoip;
    if (s == "user") return LocationSource::user;
    if (s == "unavailable") return LocationSource::unavailable;
    return std::nullopt;
}

std::string_view to_string(Database d) noexcept { return d == Database::a ? "a" : "b"; }

std::string_view to_string(Strategy s) noexcept { return s == Strategy::gps ? "gps" : "geoip"; }

std::string_view to_string(CampaignMode m) noexcept { return m == CampaignMode::actual ? "actual" : "optimal"; }

std::vector<BidRequest> parse_bidstream(std::istream& in) {
    text::LineReader reader(in);
    text::expect_header(reader, kBidstreamHeader);
    std::vector<BidRequest> out;
    std::string line;
    while (reader.next(line)) {
        const auto ln = reader.line_number();
        if (text::trim(line).empty()) continue;
        const auto f = text::split(line);
        if (f.size() != 6) throw ParseError(ln, "expected 6 fields, got " + std::to_string(f.size()));
        BidRequest b;
        const auto ts = text::parse_int64(f[0]);
        if (!ts) throw ParseError(ln, "bad timestamp");
        b.timestamp = *ts;
        try {
            b.ip = parse_ip(f[1]);
        } catch (const Error& e) {
            throw ParseError(ln, e.what());
        }
        const auto src = parse_location_source(f[2]);
        if (!src) throw ParseError(ln, "unknown loc_source '" + std::string(f[2]) + "'");
        b.loc_source = *src;
        const bool has_lat = !text::trim(f[3]).empty();
        const bool has_lon = !text::trim(f[4]).empty();
        if (has_lat != has_lon) throw ParseError(ln, "lat and lon must both be present or both empty");
        if (has_lat) {
            const auto lat = text::parse_double(f[3]);
            const auto lon = text::parse_double(f[4]);
            if (!lat || *lat < -90.0 || *lat > 90.0) throw ParseError(ln, "lat out of range");
            if (!lon || *lon < -180.0 || *lon > 180.0) throw ParseError(ln, "lon out of range");
            b.pos = GeoPoint{*lat, *lon};
        }
        if (b.loc_source == LocationSource::gps && !b.pos) throw ParseError(ln, "gps bid without a position");
        const auto floor = text::parse_double(f[5]);
        if (!floor || *floor < 0.0) throw ParseError(ln, "bid_floor must be a non-negative number");
        b.bid_floor = *floor;
        out.push_back(b);
    }
    return out;
}

std::string serialize_bidstream(std::span<const BidRequest> bids) {
    std::string out(kBidstreamHeader);
    out += '\n';
    for (const auto& b : bids) {
        out += std::to_string(b.timestamp);
        out += ',';
        out += to_string(b.ip);
        out += ',';
        out += to_string(b.loc_source);
        out += ',';
        if (b.pos) {
            out += text::format_double(b.pos->lat);
            out += ',';
            out += text::format_double(b.pos->lon);
        } else {
            out += ',';
        }
        out += ',';
        out += text::format_double(b.bid_floor);
        out += '\n';
    }
    return out;
}

EnrichmentResult build_ground_truth_bids(std::span<const BidRequest> bids, const SnapshotSeries& series_a,
                                         const SnapshotSeries* series_b) {
    EnrichmentResult r;
    auto resolve = [](const BidRequest& b, const SnapshotSeries& s, std::optional<GeoPoint>& pos,
                      std::optional<std::uint32_t>& ordinal) {
        const auto ord = s.ordinal_at(b.timestamp);
        if (!ord) return false;
        const IpRange* range = s[*ord].lookup(b.ip);
        if (!range) return false;
        pos = range->anchor;
        ordinal = static_cast<std::uint32_t>(*ord);
        return true;
    };
    for (const auto& b : bids) {
        if (b.loc_source != LocationSource::gps) {
            ++r.dropped_non_gps;
            continue;
        }
        EnrichedBid e;
        e.bid = b;
        e.pos_gt = *b.pos;
        if (!resolve(b, series_a, e.pos_ip_a, e.ordinal_a)) ++r.unmatched_a;
        if (series_b && !resolve(b, *series_b, e.pos_ip_b, e.ordinal_b)) ++r.unmatched_b;
        if (!series_b) ++r.unmatched_b;
        r.bids.push_back(std::move(e));
    }
    return r;
}

CostModel CostModel::from_raw(double c_ip, double c_gps) {
    if (!std::isfinite(c_ip) || !std::isfinite(c_gps) || c_ip <= 0.0 || c_gps <= 0.0)
        throw Error("bad_cost", "raw costs must be finite and positive (c_ip=" + text::format_double(c_ip) +
                                    ", c_gps=" + text::format_double(c_gps) + ")");
    CostModel m;
    m.c_ip = c_ip;
    m.c_gps = c_gps;
    const double lowest = std::min(c_ip, c_gps);
    m.c_star_ip = c_ip / lowest;
    m.c_star_gps = c_gps / lowest;
    return m;
}

CostModel normalized_costs(std::span<const BidRequest> bids) {
    std::vector<double> ip, gps;
    for (const auto& b : bids) {
        if (b.loc_source == LocationSource::geoip) ip.push_back(b.bid_floor);
        if (b.loc_source == LocationSource::gps) gps.push_back(b.bid_floor);
    }
    if (ip.empty()) throw Error("missing_source", "no geoip-source bids to price GeoIP inventory");
    if (gps.empty()) throw Error("missing_source", "no gps-source bids to price GPS inventory");
    return CostModel::from_raw(quantile_of(ip, 0.5), quantile_of(gps, 0.5));
}

std::optional<std::string> bid_country(const BidRequest& bid, const SnapshotSeries& series, const RegionIndex& regions) {
    std::optional<GeoPoint> where = bid.pos;
    if (!where) {
        if (const auto ord = series.ordinal_at(bid.timestamp))
            if (const IpRange* r = series[*ord].lookup(bid.ip)) where = r->anchor;
    }
    if (!where) return std::nullopt;
    const auto h = region_of(regions, *where, kMaxLevel);
    if (!h) return std::nullopt;
    return regions.region(*h).country;
}

std::map<std::string, CostModel> normalized_costs_by_country(std::span<const BidRequest> bids,
                                                             const SnapshotSeries& series, const RegionIndex& regions) {
    std::map<std::string, std::vector<BidRequest>> by_country;
    for (const auto& b : bids) {
        if (b.loc_source != LocationSource::gps && b.loc_source != LocationSource::geoip) continue;
        if (auto c = bid_country(b, series, regions)) by_country[*c].push_back(b);
    }
    std::map<std::string, CostModel> out;
    for (const auto& [country, list] : by_country) {
        const bool has_ip = std::any_of(list.begin(), list.end(),
                                        [](const BidRequest& b) { return b.loc_source == LocationSource::geoip; });
        const bool has_gps = std::any_of(list.begin(), list.end(),
                                         [](const BidRequest& b) { return b.loc_source == LocationSource::gps; });
        if (has_ip && has_gps) out.emplace(country, normalized_costs(list));
    }
    return out;
}

Decision decide(double a_ip, const CostModel& costs) {
    if (!(a_ip >= 0.0 && a_ip <= 1.0)) throw Error("bad_accuracy", "a_ip must lie in [0, 1]");
    Decision d;
    d.a_ip = a_ip;
    d.a_gps = 1.0;
    d.phi_gps = costs.c_star_gps / d.a_gps;
    if (a_ip == 0.0) {
        d.phi_ip = std::numeric_limits<double>::infinity();
        d.gain = -std::numeric_limits<double>::infinity();
        d.strategy = Strategy::gps;
        return d;
    }
    d.phi_ip = costs.c_star_ip / a_ip;
    d.gain = std::log10(d.phi_gps / d.phi_ip);
    d.strategy = d.phi_ip < d.phi_gps ? Strategy::geoip : Strategy::gps;
    return d;
}

CampaignResult run_campaign(const CampaignSpec& spec, std::span<const EnrichedBid> bids, const CostModel& costs,
                            const RegionIndex& regions, const AnchorIndexSeries* optimal_index) {
    const auto handle = regions.find(spec.target_region_id);
    if (!handle) throw Error("unknown_region", "campaign target '" + spec.target_region_id + "' is not a known region");
    const AdminRegion& target = regions.region(*handle);
    if (target.level != spec.level)
        throw Error("bad_campaign", "target '" + target.id + "' is level " + std::to_string(target.level) +
                                        ", campaign asks for level " + std::to_string(spec.level));
    if (spec.window.from >= spec.window.to) throw Error("bad_campaign", "campaign window is empty");
    if (!(spec.win_rate > 0.0 && spec.win_rate <= 1.0)) throw Error("bad_campaign", "win_rate must lie in (0, 1]");
    if (spec.mode == CampaignMode::optimal && !optimal_index)
        throw Error("bad_campaign", "optimal mode needs a nearest-anchor index");

    std::vector<std::uint32_t> candidates;
    for (std::uint32_t i = 0; i < bids.size(); ++i) {
        const auto& b = bids[i];
        if (!spec.window.contains(b.bid.timestamp)) continue;
        const auto& pos_ip = b.pos_ip(spec.database);
        if (!pos_ip) continue;
        GeoPoint placed = *pos_ip;
        if (spec.mode == CampaignMode::optimal)
            placed = optimal_index->at(*b.ordinal(spec.database)).nearest(b.pos_gt).anchor;
        if (region_contains(target, placed)) candidates.push_back(i);
    }

    CampaignResult r;
    r.candidate_count = candidates.size();
    const auto k = static_cast<std::size_t>(std::floor(spec.win_rate * static_cast<double>(candidates.size())));
    r.delivered_count = k;
    if (k == 0) return r;

    // Partial Fisher-Yates: the first k slots are a uniform sample.
    Rng rng(spec.rng_seed);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < k; ++i)
        if (region_contains(target, bids[candidates[i]].pos_gt)) ++hits;
    r.a_ip = static_cast<double>(hits) / static_cast<double>(k);
    r.decision = decide(*r.a_ip, costs);
    return r;
}

// ---------------------------------------------------------------------------

std::string Scenario::level_label() const { return std::to_string(level) + (urban_only ? "-urban" : ""); }

namespace {

std::pair<double, double> read_range(const nlohmann::json& j, const char* key, std::pair<double, double> dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw Error("parse", std::string("scenario '") + key + "' must be [lo, hi]");
    const double lo = v[0].get<double>(), hi = v[1].get<double>();
    if (!(lo <= hi)) throw Error("parse", std::string("scenario '") + key + "' has lo > hi");
    return {lo, hi};
}

CampaignMode read_mode(const std::string& s) {
    if (s == "actual") return CampaignMode::actual;
    if (s == "optimal") return CampaignMode::optimal;
    throw Error("parse", "unknown campaign mode '" + s + "'");
}

}  // namespace

ScenarioFile parse_scenario_file(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("parse", std::string("scenario file: ") + e.what());
    }
    ScenarioFile out;
    try {
        for (const auto& s : doc.value("scenarios", nlohmann::json::array())) {
            Scenario sc;
            sc.country = s.at("country").get<std::string>();
            sc.level = s.at("level").get<int>();
            if (sc.level < kMinLevel || sc.level > kMaxLevel)
                throw Error("parse", "scenario level " + std::to_string(sc.level) + " outside 1..5");
            sc.urban_only = s.value("urban_only", false);
            sc.n_targets = s.value("targets", std::size_t{5});
            sc.repetitions = s.value("repetitions", std::size_t{3});
            std::tie(sc.min_days, sc.max_days) = read_range(s, "duration_days", {7.0, 14.0});
            std::tie(sc.min_win_rate, sc.max_win_rate) = read_range(s, "win_rate", {0.20, 0.40});
            if (sc.min_days <= 0.0) throw Error("parse", "scenario duration must be positive");
            if (sc.min_win_rate <= 0.0 || sc.max_win_rate > 1.0) throw Error("parse", "scenario win_rate outside (0, 1]");
            const std::string db = s.value("database", "a");
            if (db != "a" && db != "b") throw Error("parse", "scenario database must be \"a\" or \"b\"");
            sc.database = db == "a" ? Database::a : Database::b;
            out.scenarios.push_back(sc);
        }
        for (const auto& f : doc.value("fixed", nlohmann::json::array())) {
            FixedEvaluation fe;
            fe.country = f.value("country", "");
            fe.level = f.at("level").is_string() ? f.at("level").get<std::string>() : f.at("level").dump();
            fe.mode = read_mode(f.value("mode", "actual"));
            fe.a_ip = f.at("a_ip").get<double>();
            fe.c_ip = f.at("c_ip").get<double>();
            fe.c_gps = f.at("c_gps").get<double>();
            out.fixed.push_back(fe);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("parse", std::string("scenario file: ") + e.what());
    }
    return out;
}

bool region_is_urban(const AdminRegion& region, const UrbanizationMap& urbanization) {
    const int res = urbanization.resolution();
    const auto box = bounding_box(region);
    std::size_t inside = 0, urban = 0;
    for (auto row = row_of(box.lat_lo, res); row <= row_of(box.lat_hi, res); ++row) {
        for (auto col = col_of(box.lon_lo, res); col <= col_of(box.lon_hi, res); ++col) {
            const CellId cell = cell_at(row, col, res);
            if (!region_contains(region, cell_center(cell))) continue;
            ++inside;
            if (urbanization.classify(cell) == Urbanization::urban) ++urban;
        }
    }
    if (inside == 0) {
        const GeoPoint c{(box.lat_lo + box.lat_hi) / 2.0, (box.lon_lo + box.lon_hi) / 2.0};
        return urbanization.classify(c) == Urbanization::urban;
    }
    return 2 * urban > inside;
}

namespace {

constexpr std::uint64_t kTargetStream = 0x7461726765747321ULL;
constexpr std::uint64_t kDeliveryStream = 0x64656c6976657279ULL;

bool row_less(const DecisionRow& a, const DecisionRow& b) {
    return std::tie(a.country, a.level, a.mode, a.strategy) < std::tie(b.country, b.level, b.mode, b.strategy);
}

std::vector<DecisionRow> tally(const std::vector<DecisionRow>& singles) {
    std::map<std::tuple<std::string, std::string, CampaignMode, Strategy>, std::uint64_t> counts;
    for (const auto& r : singles) counts[{r.country, r.level, r.mode, r.strategy}] += r.count;
    std::vector<DecisionRow> rows;
    for (const auto& [key, n] : counts)
        rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), n});
    std::sort(rows.begin(), rows.end(), row_less);
    return rows;
}

}  // namespace

std::vector<DecisionRow> tally_decisions(const DecisionTable& table) {
    std::vector<DecisionRow> singles;
    for (const auto& c : table.campaigns) {
        if (!c.result.a_ip) continue;
        // Recompute phi from the stored accuracy and costs rather than
        // trusting the stored decision.
        const double phi_gps = c.costs.c_star_gps / 1.0;
        const bool geoip = *c.result.a_ip > 0.0 && c.costs.c_star_ip / *c.result.a_ip < phi_gps;
        singles.push_back({c.country, c.level_label, c.spec.mode, geoip ? Strategy::geoip : Strategy::gps, 1});
    }
    for (std::size_t i = 0; i < table.fixed_inputs.size(); ++i) {
        const auto& f = table.fixed_inputs[i];
        singles.push_back({f.country, f.level, f.mode, table.fixed_decisions[i].strategy, 1});
    }
    return tally(singles);
}

DecisionTable batch_simulate(const ScenarioFile& file, const SimulationInputs& in, const BatchOptions& opt) {
    if (!in.regions) throw Error("bad_campaign", "batch simulation needs a region index");
    DecisionTable table;

    for (const auto& f : file.fixed) {
        table.fixed_inputs.push_back(f);
        table.fixed_decisions.push_back(decide(f.a_ip, CostModel::from_raw(f.c_ip, f.c_gps)));
    }

    std::int64_t t_min = std::numeric_limits<std::int64_t>::max(), t_max = std::numeric_limits<std::int64_t>::min();
    for (const auto& b : in.bids) {
        t_min = std::min(t_min, b.bid.timestamp);
        t_max = std::max(t_max, b.bid.timestamp);
    }

    struct Target {
        std::size_t scenario;
        std::size_t target;
        RegionHandle region;
    };
    std::vector<Target> targets;
    for (std::size_t si = 0; si < file.scenarios.size(); ++si) {
        const auto& sc = file.scenarios[si];
        std::vector<RegionHandle> eligible;
        for (const auto h : in.regions->regions_at_level(sc.level)) {
            const auto& region = in.regions->region(h);
            if (region.country != sc.country) continue;
            if (sc.urban_only && (!in.urbanization || !region_is_urban(region, *in.urbanization))) continue;
            eligible.push_back(h);
        }
        std::sort(eligible.begin(), eligible.end(), [&](RegionHandle a, RegionHandle b) {
            return in.regions->region(a).id < in.regions->region(b).id;
        });
        if (eligible.size() < sc.n_targets)
            table.notes.push_back("scenario " + std::to_string(si) + " (" + sc.country + " level " + sc.level_label() +
                                  "): only " + std::to_string(eligible.size()) + " eligible targets, wanted " +
                                  std::to_string(sc.n_targets));
        const std::size_t take = std::min(eligible.size(), sc.n_targets);
        Rng pick(mix_seed({opt.seed, si, kTargetStream}));
        for (std::size_t i = 0; i < take; ++i) {
            const auto j = i + static_cast<std::size_t>(pick.below(eligible.size() - i));
            std::swap(eligible[i], eligible[j]);
            targets.push_back({si, i, eligible[i]});
        }
    }

    for (const auto& t : targets) {
        const auto& sc = file.scenarios[t.scenario];
        for (std::size_t rep = 0; rep < sc.repetitions; ++rep) {
            Rng draw(mix_seed({opt.seed, t.scenario, t.target, rep}));
            const double days = draw.uniform(sc.min_days, sc.max_days);
            const double win = draw.uniform(sc.min_win_rate, sc.max_win_rate);
            const auto duration = static_cast<std::int64_t>(std::llround(days * 86400.0));
            std::int64_t start = in.bids.empty() ? 0 : t_min;
            const std::int64_t slack = in.bids.empty() ? 0 : (t_max + 1) - duration - t_min;
            if (slack > 0) start += static_cast<std::int64_t>(draw.below(static_cast<std::uint64_t>(slack) + 1));
            for (const auto mode : opt.modes) {
                BatchCampaign c;
                c.scenario = t.scenario;
                c.target = t.target;
                c.repetition = rep;
                c.country = sc.country;
                c.level_label = sc.level_label();
                c.duration_days = days;
                c.spec.target_region_id = in.regions->region(t.region).id;
                c.spec.level = sc.level;
                c.spec.window = {start, start + duration};
                c.spec.win_rate = win;
                c.spec.rng_seed = mix_seed({opt.seed, t.scenario, t.target, rep, kDeliveryStream});
                c.spec.mode = mode;
                c.spec.database = sc.database;
                table.campaigns.push_back(std::move(c));
            }
        }
    }

    // Campaigns only read shared inputs and write their own slot.
    parallel_chunks(table.campaigns.size(), opt.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            auto& c = table.campaigns[i];
            const auto cost_it = in.costs.find(c.country);
            if (cost_it == in.costs.end())
                throw Error("missing_source", "no cost model for country '" + c.country +
                                                  "' (needs both geoip- and gps-source bids)");
            c.costs = cost_it->second;
            const AnchorIndexSeries* index = c.spec.database == Database::a ? in.index_a : in.index_b;
            c.result = run_campaign(c.spec, in.bids, c.costs, *in.regions, index);
        }
    });

    // Flag targets whose campaigns never had a candidate in some mode.
    std::map<std::tuple<std::size_t, std::size_t, CampaignMode>, std::uint64_t> candidates_seen;
    for (const auto& c : table.campaigns) candidates_seen[{c.scenario, c.target, c.spec.mode}] += c.result.candidate_count;
    for (const auto& [key, n] : candidates_seen) {
        if (n != 0) continue;
        const auto& [si, ti, mode] = key;
        const auto it = std::find_if(table.campaigns.begin(), table.campaigns.end(), [&](const BatchCampaign& c) {
            return c.scenario == si && c.target == ti;
        });
        table.flagged.push_back({si, it->spec.target_region_id, mode, "zero candidates across all repetitions"});
    }

    std::vector<DecisionRow> singles;
    for (const auto& c : table.campaigns)
        if (c.result.decision)
            singles.push_back({c.country, c.level_label, c.spec.mode, c.result.decision->strategy, 1});
    for (std::size_t i = 0; i < table.fixed_inputs.size(); ++i)
        singles.push_back({table.fixed_inputs[i].country, table.fixed_inputs[i].level, table.fixed_inputs[i].mode,
                           table.fixed_decisions[i].strategy, 1});
    table.rows = tally(singles);
    return table;
}

std::string serialize_decision_rows(std::span<const DecisionRow> rows) {
    std::string out(kDecisionHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += r.country + "," + r.level + "," + std::string(to_string(r.mode)) + "," +
               std::string(to_string(r.strategy)) + "," + std::to_string(r.count) + "\n";
    }
    return out;
}

}  // namespace geoaudit
