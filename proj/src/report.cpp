#include "geoaudit/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "geoaudit/error.hpp"
#include "geoaudit/text.hpp"

namespace geoaudit {

using nlohmann::json;

namespace {

std::ifstream open_input(const std::string& path, const std::string& role) {
    if (path.empty() || !std::filesystem::is_regular_file(path))
        throw Error("missing_input", role + (path.empty() ? std::string() : " (" + path + ")"));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing_input", role + " (" + path + ")");
    return in;
}

}  // namespace

AuditData load_audit_data(const AuditPaths& paths, int grid_resolution, const IngestOptions& ingest) {
    AuditData d;
    open_input(paths.snapshots, "snapshots");
    d.series = load_snapshot_series(paths.snapshots);
    open_input(paths.regions, "regions");
    d.region_list = load_regions_file(paths.regions);
    d.regions = build_region_index(d.region_list, grid_resolution);
    if (!paths.urbanization.empty()) {
        auto in = open_input(paths.urbanization, "urbanization");
        d.urbanization = parse_urbanization_map(in);
    }
    auto in = open_input(paths.events, "events");
    d.ingest = ingest_events(in, ingest);
    return d;
}

AuditRun run_audit(const AuditData& data, unsigned threads) {
    AuditRun run;
    auto& r = run.results;
    r.events_total = data.ingest.total();
    r.events_rejected = data.ingest.rejects.size();
    r.events_outside_window = data.ingest.outside_window;
    for (const auto& rej : data.ingest.rejects) ++r.reject_reasons[rej.reason];

    for (const auto& snap : data.series.snapshots()) {
        const auto set = extract_anchors(snap);
        r.snapshots.push_back({snap.provider_id(), snap.window(), set.range_count, set.anchors.size(), set.reuse_factor()});
    }
    const auto all = data.series.all_anchors();
    r.series_anchors = all.anchors.size();
    r.series_ranges = all.range_count;

    run.joined = join(data.ingest.events, data.series, data.urbanization, data.regions, threads);
    const auto& samples = run.joined.samples;
    r.matched = samples.size();
    for (const auto& u : run.joined.unmatched) ++r.unmatched_reasons[u.reason];

    for (const auto dim : kAllDimensions) {
        r.precision.emplace(dim, precision_distribution(samples, dim));
        for (int level = kMinLevel; level <= kMaxLevel; ++level) r.accuracy[level].emplace(dim, accuracy(samples, level, dim));
    }
    try {
        r.density = anchor_density_correlation(samples, all, data.regions.resolution());
    } catch (const InsufficientDataError&) {
    }
    try {
        r.stability = temporal_stability(samples);
    } catch (const InsufficientDataError&) {
    }
    return run;
}

json real_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
    return v;
}

namespace {

json optional_real(const std::optional<double>& v) { return v ? real_json(*v) : json(nullptr); }

json distribution_json(const PrecisionDistribution& d) {
    json q = json::object();
    for (std::size_t i = 0; i < kQuantileNames.size(); ++i) q[std::string(kQuantileNames[i])] = real_json(d.quantiles[i]);
    json cdf = json::array();
    for (const auto& p : d.cdf) cdf.push_back({real_json(p.distance_km), real_json(p.fraction)});
    return {{"count", d.sample_count}, {"quantiles", q}, {"cdf", cdf}};
}

json insufficient() { return {{"status", "insufficient_data"}}; }

}  // namespace

json precision_json(const std::map<GroupDimension, PrecisionBreakdown>& precision) {
    json out = json::object();
    for (const auto& [dim, b] : precision) {
        json groups = json::object();
        for (const auto& [g, d] : b.groups) groups[g] = distribution_json(d);
        out[std::string(to_string(dim))] = {{"groups", groups}, {"notes", b.notes}};
    }
    return out;
}

json accuracy_json(const std::map<int, std::map<GroupDimension, AccuracyReport>>& acc) {
    json out = json::object();
    for (const auto& [level, by_dim] : acc) {
        json lv = json::object();
        for (const auto& [dim, rep] : by_dim) {
            json groups = json::object();
            for (const auto& [g, c] : rep.groups)
                groups[g] = {{"matched", c.matched_in_region},
                             {"claimed", c.claimed_in_region},
                             {"accuracy", optional_real(c.accuracy())}};
            lv[std::string(to_string(dim))] = groups;
        }
        out[std::to_string(level)] = lv;
    }
    return out;
}

json audit_json(const AuditResults& r) {
    json snaps = json::array();
    for (const auto& s : r.snapshots)
        snaps.push_back({{"provider", s.provider},
                         {"valid_from", s.window.from},
                         {"valid_to", s.window.to},
                         {"ranges", s.ranges},
                         {"anchors", s.anchors},
                         {"reuse_factor", real_json(s.reuse_factor)}});
    const double series_reuse =
        r.series_anchors == 0 ? 0.0 : static_cast<double>(r.series_ranges) / static_cast<double>(r.series_anchors);

    json density = insufficient();
    if (r.density)
        density = {{"resolution", r.density->resolution},
                   {"pearson_r", optional_real(r.density->pearson_r)},
                   {"usable_cells", r.density->usable_cells},
                   {"excluded_zero_anchor_cells", r.density->excluded_zero_anchor_cells},
                   {"excluded_zero_error_cells", r.density->excluded_zero_error_cells}};

    json stability = insufficient();
    if (r.stability) {
        json daily = json::array();
        for (const auto& d : r.stability->daily) daily.push_back({{"day", d.day}, {"median_km", real_json(d.median_km)}});
        stability = {{"daily", daily},
                     {"variance_km2", real_json(r.stability->variance_km2)},
                     {"variance_m2", real_json(r.stability->variance_m2)}};
    }

    return {{"inputs",
             {{"events_total", r.events_total},
              {"events_rejected", r.events_rejected},
              {"events_outside_window", r.events_outside_window},
              {"reject_reasons", r.reject_reasons}}},
            {"join",
             {{"matched", r.matched},
              {"unmatched", r.events_total - r.events_rejected - r.matched},
              {"unmatched_reasons", r.unmatched_reasons}}},
            {"extent",
             {{"snapshots", snaps},
              {"series", {{"anchors", r.series_anchors}, {"ranges", r.series_ranges}, {"reuse_factor", real_json(series_reuse)}}}}},
            {"precision", precision_json(r.precision)},
            {"accuracy", accuracy_json(r.accuracy)},
            {"anchor_density", density},
            {"temporal_stability", stability}};
}

json upper_bound_json(const UpperBoundReport& r) {
    return {{"sample_count", r.sample_count},
            {"reassigned_count", r.reassigned_count},
            {"dominance_violations", r.dominance_violations},
            {"internal_accuracy", optional_real(r.internal_accuracy)},
            {"precision", precision_json(r.optimal_precision)},
            {"accuracy", accuracy_json(r.optimal_accuracy)}};
}

json decision_json(const Decision& d) {
    return {{"a_ip", real_json(d.a_ip)},     {"a_gps", real_json(d.a_gps)}, {"phi_ip", real_json(d.phi_ip)},
            {"phi_gps", real_json(d.phi_gps)}, {"gain", real_json(d.gain)},   {"strategy", to_string(d.strategy)}};
}

json cost_json(const CostModel& c) {
    return {{"c_ip", real_json(c.c_ip)},
            {"c_gps", real_json(c.c_gps)},
            {"c_star_ip", real_json(c.c_star_ip)},
            {"c_star_gps", real_json(c.c_star_gps)}};
}

json decision_table_json(const DecisionTable& t) {
    json fixed = json::array();
    for (std::size_t i = 0; i < t.fixed_inputs.size(); ++i) {
        const auto& f = t.fixed_inputs[i];
        fixed.push_back({{"country", f.country},
                         {"level", f.level},
                         {"mode", to_string(f.mode)},
                         {"costs", cost_json(CostModel::from_raw(f.c_ip, f.c_gps))},
                         {"decision", decision_json(t.fixed_decisions[i])}});
    }
    json campaigns = json::array();
    for (const auto& c : t.campaigns) {
        campaigns.push_back({{"scenario", c.scenario},
                             {"target", c.target},
                             {"repetition", c.repetition},
                             {"country", c.country},
                             {"level", c.level_label},
                             {"region", c.spec.target_region_id},
                             {"mode", to_string(c.spec.mode)},
                             {"database", to_string(c.spec.database)},
                             {"window", {c.spec.window.from, c.spec.window.to}},
                             {"duration_days", real_json(c.duration_days)},
                             {"win_rate", real_json(c.spec.win_rate)},
                             {"seed", c.spec.rng_seed},
                             {"costs", cost_json(c.costs)},
                             {"candidates", c.result.candidate_count},
                             {"delivered", c.result.delivered_count},
                             {"decision", c.result.decision ? decision_json(*c.result.decision) : json(nullptr)}});
    }
    json flagged = json::array();
    for (const auto& f : t.flagged)
        flagged.push_back({{"scenario", f.scenario}, {"region", f.region_id}, {"mode", to_string(f.mode)}, {"reason", f.reason}});
    return {{"fixed", fixed}, {"campaigns", campaigns}, {"flagged", flagged}, {"notes", t.notes}};
}

namespace {

void compare_at(const json& e, const json& a, const std::string& path, double rel, double abs_floor,
                std::vector<std::string>& diffs) {
    if (e.is_number_float() || a.is_number_float()) {
        if (!e.is_number() || !a.is_number()) {
            diffs.push_back(path + ": expected " + e.dump() + ", got " + a.dump());
            return;
        }
        const double x = e.get<double>(), y = a.get<double>();
        const double tol = std::max(abs_floor, rel * std::max(std::abs(x), std::abs(y)));
        if (!(std::abs(x - y) <= tol)) diffs.push_back(path + ": expected " + e.dump() + ", got " + a.dump());
        return;
    }
    if (e.type() != a.type()) {
        diffs.push_back(path + ": expected " + e.dump() + ", got " + a.dump());
        return;
    }
    if (e.is_object()) {
        for (auto it = e.begin(); it != e.end(); ++it) {
            if (it.key() == "provenance") continue;
            if (!a.contains(it.key())) {
                diffs.push_back(path + "/" + it.key() + ": missing");
                continue;
            }
            compare_at(it.value(), a.at(it.key()), path + "/" + it.key(), rel, abs_floor, diffs);
        }
        for (auto it = a.begin(); it != a.end(); ++it)
            if (it.key() != "provenance" && !e.contains(it.key())) diffs.push_back(path + "/" + it.key() + ": unexpected");
        return;
    }
    if (e.is_array()) {
        if (e.size() != a.size()) {
            diffs.push_back(path + ": length " + std::to_string(e.size()) + " vs " + std::to_string(a.size()));
            return;
        }
        for (std::size_t i = 0; i < e.size(); ++i)
            compare_at(e[i], a[i], path + "/" + std::to_string(i), rel, abs_floor, diffs);
        return;
    }
    if (e != a) diffs.push_back(path + ": expected " + e.dump() + ", got " + a.dump());
}

std::string optional_text(const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); }

}  // namespace

std::vector<std::string> compare_reports(const json& expected, const json& actual, double rel, double abs_floor) {
    std::vector<std::string> diffs;
    compare_at(expected, actual, "", rel, abs_floor, diffs);
    return diffs;
}

std::string precision_csv(const AuditResults& r) {
    std::string out = "dimension,group,count";
    for (const auto n : kQuantileNames) {
        out += ',';
        out += n;
    }
    out += '\n';
    for (const auto& [dim, b] : r.precision) {
        for (const auto& [g, d] : b.groups) {
            out += std::string(to_string(dim)) + "," + g + "," + std::to_string(d.sample_count);
            for (const double q : d.quantiles) out += "," + text::format_double(q);
            out += '\n';
        }
    }
    return out;
}

std::string accuracy_csv(const AuditResults& r) {
    std::string out = "level,dimension,group,matched,claimed,accuracy\n";
    for (const auto& [level, by_dim] : r.accuracy)
        for (const auto& [dim, rep] : by_dim)
            for (const auto& [g, c] : rep.groups)
                out += std::to_string(level) + "," + std::string(to_string(dim)) + "," + g + "," +
                       std::to_string(c.matched_in_region) + "," + std::to_string(c.claimed_in_region) + "," +
                       optional_text(c.accuracy()) + "\n";
    return out;
}

std::string cdf_csv(const AuditResults& r) {
    std::string out = "distance_km,cumulative_fraction\n";
    const auto it = r.precision.find(GroupDimension::none);
    if (it == r.precision.end()) return out;
    for (const auto& [g, d] : it->second.groups)
        for (const auto& p : d.cdf) out += text::format_double(p.distance_km) + "," + text::format_double(p.fraction) + "\n";
    return out;
}

std::string cdf_by_group_csv(const AuditResults& r) {
    std::string out = "dimension,group,distance_km,cumulative_fraction\n";
    for (const auto& [dim, b] : r.precision)
        for (const auto& [g, d] : b.groups)
            for (const auto& p : d.cdf)
                out += std::string(to_string(dim)) + "," + g + "," + text::format_double(p.distance_km) + "," +
                       text::format_double(p.fraction) + "\n";
    return out;
}

}  // namespace geoaudit
