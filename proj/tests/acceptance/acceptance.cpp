// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoaudit/app.hpp"
#include "geoaudit/campaign.hpp"
#include "geoaudit/oracle.hpp"
#include "geoaudit/report.hpp"
#include "geoaudit/synth.hpp"
#include "support.hpp"

using namespace geoaudit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail.clear();
        pass = false;
        detail += (detail.empty() ? "" : "; ") + why;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

AuditData load(const WorldFiles& f) {
    return load_audit_data({f.events, f.snapshots_a, f.regions, f.urbanization}, kDefaultGridResolution);
}

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "geoaudit");
    std::ostringstream out, err;
    return run_cli(args, out, err);
}

std::map<std::string, std::string> files_in(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = testing::read_text(e.path());
    return out;
}

// Worlds shared by the equivalence, dominance and accuracy criteria.
struct CheckedWorld {
    std::string name;
    std::size_t events = 0;
    AuditRun run;
    UpperBoundReport upper;
    std::vector<std::string> audit_diffs;
    std::vector<std::string> upper_diffs;
    std::vector<std::string> accuracy_diffs;
};

std::vector<WorldConfig> equivalence_worlds() {
    std::vector<WorldConfig> out;
    const std::size_t events[] = {10000, 20000, 40000, 70000, 100000};
    for (std::size_t i = 0; i < 5; ++i) {
        WorldConfig c;
        c.seed = 1000 + i;
        c.countries[0].n_events = events[i];
        c.countries[0].n_anchors = 150 + 50 * i;
        c.countries[0].n_ranges = 1500 + 700 * i;
        c.countries[0].n_bids = 500;
        c.snapshots = 1 + i % 3;
        c.placement = i % 2 == 0 ? AnchorPlacement::clustered : AnchorPlacement::uniform;
        c.invalid_event_share = i == 3 ? 0.004 : 0.0;
        if (i == 4) {
            // Two countries; events split between them.
            c.countries[0].n_events = events[i] / 2;
            CountryConfig fr;
            fr.code = "FR";
            fr.box = {43.5, 50.5, -4.5, 7.5};
            fr.n_anchors = 180;
            fr.n_ranges = 2000;
            fr.n_events = events[i] / 2;
            fr.n_bids = 500;
            c.countries.push_back(fr);
        }
        out.push_back(c);
    }
    return out;
}

CheckedWorld check_world(const WorldConfig& config, const std::string& dir) {
    CheckedWorld w;
    w.name = "seed " + std::to_string(config.seed);
    const auto world = generate_world(config, dir);
    const auto data = load(world.files);
    w.events = data.ingest.events.size() + data.ingest.rejects.size();
    w.run = run_audit(data, 2);
    w.upper = upper_bound_report(w.run.joined.samples, AnchorIndexSeries::from_series(data.series), data.regions, 2);
    const auto ref = oracle::audit(data);
    w.audit_diffs = compare_reports(audit_json(ref), audit_json(w.run.results));
    w.upper_diffs = compare_reports(upper_bound_json(oracle::upper_bound(data)), upper_bound_json(w.upper));
    w.accuracy_diffs = compare_reports(accuracy_json(ref.accuracy), accuracy_json(w.run.results.accuracy), 0.0, 0.0);
    return w;
}

Outcome criterion_toy() {
    Outcome o;
    const auto twice = decide(0.2, CostModel::from_raw(1.0, 2.0));
    const auto six = decide(0.2, CostModel::from_raw(1.0, 6.0));
    if (std::abs(twice.phi_ip - 5.0) > 1e-12 || std::abs(twice.phi_gps - 2.0) > 1e-12 || twice.strategy != Strategy::gps)
        o.fail("C*=(1,2): phi=(" + fmt(twice.phi_ip, 17) + "," + fmt(twice.phi_gps, 17) + ") " +
               std::string(to_string(twice.strategy)));
    const double want_gain = std::log10(6.0 / 5.0);
    if (std::abs(six.phi_ip - 5.0) > 1e-12 || std::abs(six.phi_gps - 6.0) > 1e-12 || six.strategy != Strategy::geoip ||
        std::abs(six.gain - want_gain) > 1e-12)
        o.fail("C*=(1,6): phi=(" + fmt(six.phi_ip, 17) + "," + fmt(six.phi_gps, 17) + ") gain=" + fmt(six.gain, 17));
    if (o.pass)
        o.detail = "phi=(5,2) gps; phi=(5,6) geoip, gain=" + fmt(six.gain, 12) + " (log10(6/5)=" + fmt(want_gain, 12) + ")";
    return o;
}

Outcome criterion_reuse(const std::string& scratch) {
    Outcome o;
    std::vector<std::string> parts;
    for (const auto& [preset, want] : {std::pair{"spain", 26.41}, {"gb", 100.68}}) {
        const auto dir = scratch + "/" + preset;
        const auto world = generate_world(world_preset(preset), dir);
        const auto series = load_snapshot_series(world.files.snapshots_a);
        const auto anchors = extract_anchors(series[0]);
        const double reuse = anchors.reuse_factor();
        parts.push_back(std::string(preset) + " " + std::to_string(anchors.range_count) + "/" +
                        std::to_string(anchors.anchors.size()) + "=" + fmt(reuse, 6));
        if (std::abs(reuse - want) > 0.01) o.fail(parts.back() + " outside " + fmt(want) + " +- 0.01");
        fs::remove_all(dir);
    }
    if (o.pass) o.detail = parts[0] + ", " + parts[1];
    return o;
}

Outcome criterion_equivalence(const std::vector<CheckedWorld>& worlds) {
    Outcome o;
    std::size_t min_events = SIZE_MAX, max_events = 0;
    for (const auto& w : worlds) {
        min_events = std::min(min_events, w.events);
        max_events = std::max(max_events, w.events);
        if (!w.audit_diffs.empty()) o.fail(w.name + ": " + std::to_string(w.audit_diffs.size()) + " audit diffs, first " + w.audit_diffs[0]);
        if (!w.upper_diffs.empty()) o.fail(w.name + ": " + std::to_string(w.upper_diffs.size()) + " upper-bound diffs, first " + w.upper_diffs[0]);
    }
    if (worlds.size() < 5) o.fail("only " + std::to_string(worlds.size()) + " worlds");
    if (min_events < 10000 || max_events > 100000) o.fail("event counts outside 1e4..1e5");
    if (o.pass)
        o.detail = std::to_string(worlds.size()) + " worlds, " + std::to_string(min_events) + ".." +
                   std::to_string(max_events) + " events, reports equal";
    return o;
}

Outcome criterion_dominance(const std::vector<const UpperBoundReport*>& reports) {
    Outcome o;
    std::uint64_t samples = 0, violations = 0;
    for (const auto* r : reports) {
        samples += r->sample_count;
        violations += r->dominance_violations;
        for (std::size_t i = 0; i < r->per_sample.size(); ++i)
            if (!(r->per_sample[i].error_opt_km >= 0.0)) ++violations;
    }
    if (violations != 0) o.fail(std::to_string(violations) + " violations");
    o.detail = (o.pass ? "" : o.detail + ", ") + std::to_string(samples) + " samples over " +
               std::to_string(reports.size()) + " worlds, " + std::to_string(violations) + " violations";
    return o;
}

Outcome criterion_accuracy(const std::vector<CheckedWorld>& worlds) {
    Outcome o;
    std::size_t checked = 0;
    for (const auto& w : worlds) {
        if (!w.accuracy_diffs.empty()) o.fail(w.name + ": " + w.accuracy_diffs[0]);
        for (const auto& [dim, rep] : w.run.results.accuracy.at(kMaxLevel))
            for (const auto& [group, cell] : rep.groups) {
                ++checked;
                if (cell.accuracy() != 1.0)
                    o.fail(w.name + ": level-5 accuracy " + fmt(cell.accuracy().value_or(-1)) + " for " +
                           std::string(to_string(dim)) + "=" + group);
            }
    }
    if (o.pass)
        o.detail = "brute-force counts equal on " + std::to_string(worlds.size()) + " worlds; level-5 accuracy 1 in " +
                   std::to_string(checked) + " groups";
    return o;
}

Outcome criterion_haversine() {
    Outcome o;
    Rng rng(20240601);
    double worst = 0.0;
    std::size_t compared = 0;
    for (int i = 0; i < 1000; ++i) {
        GeoPoint a = testing::random_point(rng), b;
        // A third of the pairs are short separations.
        if (i % 3 == 0)
            b = destination(a, rng.uniform(0, 2 * std::numbers::pi), std::pow(10.0, rng.uniform(-1, 3)));
        else
            b = testing::random_point(rng);
        const double d = haversine(a, b);
        if (haversine(b, a) != d) o.fail("asymmetric pair " + std::to_string(i));
        if (haversine(a, a) != 0.0) o.fail("identity fails at pair " + std::to_string(i));
        const double ref = testing::vector_great_circle_km(a, b);
        if (ref <= 1.0) continue;
        ++compared;
        worst = std::max(worst, std::abs(d - ref) / ref);
    }
    if (worst >= 1e-6) o.fail("max relative error " + fmt(worst));
    if (o.pass)
        o.detail = std::to_string(compared) + " pairs > 1 km, max relative error " + fmt(worst, 3) +
                   "; symmetry and identity exact";
    return o;
}

Outcome criterion_pearson() {
    // Cells hold 1..40 anchors; every sample in a cell has error 50 / count,
    // so log10(median) = log10(50) - log10(count) exactly.
    Outcome o;
    const int res = 7;
    AnchorSet anchors;
    std::vector<JoinedSample> samples;
    const auto side = grid_side(res);
    for (std::uint64_t k = 0; k < 40; ++k) {
        const CellId cell = cell_at(side / 2 + k % 8, side / 2 + k / 8, res);
        const auto centre = cell_center(cell);
        const auto count = k + 1;
        for (std::uint64_t a = 0; a < count; ++a) anchors.anchors.push_back(centre);
        for (int s = 0; s < 3; ++s) {
            JoinedSample js;
            js.event.pos_gt = centre;
            js.pos_ip = centre;
            js.error_km = 50.0 / static_cast<double>(count);
            samples.push_back(js);
        }
    }
    anchors.range_count = anchors.anchors.size();
    const auto d = anchor_density_correlation(samples, anchors, res);
    if (!d.pearson_r) {
        o.fail("correlation undefined");
        return o;
    }
    const double r = *d.pearson_r;
    if (std::abs(r + 1.0) > 1e-9) o.fail("R = " + fmt(r, 17));
    if (o.pass) o.detail = std::to_string(d.usable_cells) + " cells, R = " + fmt(r, 17);
    return o;
}

struct Calibration {
    Outcome outcome;
    UpperBoundReport upper;
};

Calibration criterion_calibration(const std::string& scratch) {
    Calibration cal;
    Outcome& o = cal.outcome;
    // Same planted median for both technologies: the overall median is 14 km.
    WorldConfig flat;
    flat.seed = 14;
    flat.countries[0].n_events = 100000;
    flat.countries[0].n_anchors = 400;
    flat.countries[0].n_ranges = 4000;
    flat.countries[0].n_bids = 500;
    flat.snapshots = 1;
    flat.fixed_error = {14.0, 1.0};
    flat.cellular_error = {14.0, 1.0};
    const auto w1 = generate_world(flat, scratch + "/flat");
    const auto run1 = run_audit(load(w1.files), 2);
    const double median = run1.results.precision.at(GroupDimension::none).groups.at("all").median();
    const auto n = run1.results.matched;
    if (std::abs(median - 14.0) / 14.0 > 0.05) o.fail("median " + fmt(median) + " km");
    if (n < 90000) o.fail("only " + std::to_string(n) + " matched events");

    // Cellular planted 15x further off than fixed.
    WorldConfig split = flat;
    split.seed = 15;
    split.fixed_error = {2.0, 1.0};
    split.cellular_error = {30.0, 1.0};
    const auto w2 = generate_world(split, scratch + "/split");
    const auto data2 = load(w2.files);
    const auto run2 = run_audit(data2, 2);
    const auto& by_conn = run2.results.precision.at(GroupDimension::conn_type).groups;
    const double fixed = by_conn.at("fixed").median(), cellular = by_conn.at("cellular").median();
    const double gap = cellular / fixed;
    if (gap < 10.0) o.fail("cellular/fixed median gap " + fmt(gap));
    cal.upper = upper_bound_report(run2.joined.samples, AnchorIndexSeries::from_series(data2.series), data2.regions, 2);
    if (o.pass)
        o.detail = "median " + fmt(median) + " km over " + std::to_string(n) + " samples (planted 14); cellular " +
                   fmt(cellular) + " km / fixed " + fmt(fixed) + " km = " + fmt(gap, 4) + "x";
    fs::remove_all(scratch + "/flat");
    fs::remove_all(scratch + "/split");
    return cal;
}

Outcome criterion_determinism(const std::string& scratch) {
    Outcome o;
    const auto world = scratch + "/world";
    WorldConfig c;
    c.seed = 9;
    generate_world(c, world);
    const auto scen = scratch + "/scenarios.json";
    std::ofstream(scen) << R"({"scenarios": [{"country": "ES", "level": 4, "targets": 5},
                                            {"country": "ES", "level": 3, "targets": 5},
                                            {"country": "ES", "level": 2, "targets": 3, "urban_only": true}],
                              "fixed": [{"country": "ES", "level": "1", "a_ip": 0.2, "c_ip": 1, "c_gps": 6}]})";
    for (const auto* cmd : {"audit", "simulate"}) {
        std::vector<std::map<std::string, std::string>> outputs;
        for (const auto* threads : {"1", "1", "4"}) {
            const auto out = scratch + "/" + cmd + "-" + std::to_string(outputs.size());
            std::vector<std::string> args{cmd, "--world", world, "--seed", "77", "--threads", threads, "--out", out};
            if (std::string(cmd) == "audit") args.push_back("--upper-bound");
            else args.insert(args.end(), {"--scenarios", scen});
            if (run(args) != 0) {
                o.fail(std::string(cmd) + " exited non-zero");
                return o;
            }
            outputs.push_back(files_in(out));
        }
        if (outputs[0] != outputs[1]) o.fail(std::string(cmd) + " reruns differ");
        if (std::string(cmd) == "simulate" && outputs[0].at("decision_table.csv") != outputs[2].at("decision_table.csv"))
            o.fail("decision table changes with thread count");
        if (std::string(cmd) == "audit" && outputs[0].at("accuracy.csv") != outputs[2].at("accuracy.csv"))
            o.fail("audit counts change with thread count");
    }
    if (o.pass) o.detail = "audit and simulate byte-identical on rerun; counts equal at 1 and 4 threads";
    return o;
}

Outcome criterion_scale(const std::string& scratch) {
    Outcome o;
    WorldConfig c;
    c.seed = 10;
    c.countries[0].n_bids = 8000;
    const auto world = generate_world(c, scratch + "/scale");
    std::vector<BidRequest> bids;
    {
        std::ifstream in(world.files.bidstream);
        bids = parse_bidstream(in);
    }
    auto scaled = bids;
    for (auto& b : scaled) b.bid_floor *= 1000.0;
    {
        // Through the file format, as a user would supply it.
        std::istringstream in(serialize_bidstream(scaled));
        scaled = parse_bidstream(in);
    }
    const auto series = load_snapshot_series(world.files.snapshots_a);
    const auto regions = build_region_index(load_regions_file(world.files.regions));
    const auto enriched = build_ground_truth_bids(bids, series, nullptr);
    const auto index = AnchorIndexSeries::from_series(series);
    std::istringstream sf(R"({"scenarios": [{"country": "ES", "level": 4, "targets": 8},
                                            {"country": "ES", "level": 3, "targets": 8},
                                            {"country": "ES", "level": 2, "targets": 4}]})");
    const auto file = parse_scenario_file(sf);

    auto simulate = [&](const std::vector<BidRequest>& stream) {
        SimulationInputs in;
        in.bids = enriched.bids;
        in.costs = normalized_costs_by_country(stream, series, regions);
        in.regions = &regions;
        in.index_a = &index;
        BatchOptions opt;
        opt.seed = 3;
        return batch_simulate(file, in, opt);
    };
    const auto base = simulate(bids);
    const auto big = simulate(scaled);
    std::size_t decided = 0;
    double worst_phi = 0.0, worst_gain = 0.0;
    for (std::size_t i = 0; i < base.campaigns.size(); ++i) {
        const auto& a = base.campaigns[i].result.decision;
        const auto& b = big.campaigns[i].result.decision;
        if (a.has_value() != b.has_value()) {
            o.fail("campaign " + std::to_string(i) + " decided in one run only");
            continue;
        }
        if (!a) continue;
        ++decided;
        if (a->strategy != b->strategy) o.fail("strategy flips in campaign " + std::to_string(i));
        auto rel = [](double x, double y) { return x == y ? 0.0 : std::abs(x - y) / std::max(std::abs(x), std::abs(y)); };
        worst_phi = std::max({worst_phi, rel(a->phi_ip, b->phi_ip), rel(a->phi_gps, b->phi_gps)});
        worst_gain = std::max(worst_gain, std::isfinite(a->gain) ? std::abs(a->gain - b->gain) : (a->gain == b->gain ? 0.0 : 1.0));
    }
    if (worst_phi > 1e-12) o.fail("phi moves by " + fmt(worst_phi) + " relative");
    if (worst_gain > 1e-12) o.fail("gain moves by " + fmt(worst_gain));
    if (serialize_decision_rows(base.rows) != serialize_decision_rows(big.rows)) o.fail("decision tables differ");
    if (decided == 0) o.fail("no decided campaigns");
    if (o.pass)
        o.detail = std::to_string(decided) + " campaigns; max phi change " + fmt(worst_phi, 3) + " rel, max gain change " +
                   fmt(worst_gain, 3) + "; strategies and table identical";
    fs::remove_all(scratch + "/scale");
    return o;
}

}  // namespace

int main() {
    testing::TempDir scratch;
    const auto dir = scratch.path().string();
    int failures = 0;
    auto report = [&](int n, const std::string& name, const std::function<Outcome()>& body, double limit_s) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        const double took = seconds_since(t0);
        if (limit_s > 0 && took >= limit_s) o.fail("took " + fmt(took, 3) + " s, limit " + fmt(limit_s) + " s");
        if (!o.pass) ++failures;
        std::printf("%s %2d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), o.detail.c_str(), took);
        std::fflush(stdout);
    };

    std::vector<CheckedWorld> worlds;
    double world_seconds = 0.0;
    Calibration calibration;

    report(1, "toy example", criterion_toy, 1.0);
    report(2, "reuse factor", [&] { return criterion_reuse(dir); }, 30.0);
    report(3, "oracle equivalence", [&] {
        const auto t0 = Clock::now();
        std::size_t i = 0;
        for (const auto& cfg : equivalence_worlds()) {
            const auto wdir = dir + "/eq" + std::to_string(i++);
            worlds.push_back(check_world(cfg, wdir));
            fs::remove_all(wdir);
        }
        world_seconds = seconds_since(t0);
        return criterion_equivalence(worlds);
    }, 300.0);
    // Criterion 8's worlds also feed the dominance check, so run it first.
    Outcome calibration_outcome;
    const auto cal_t0 = Clock::now();
    try {
        calibration = criterion_calibration(dir);
        calibration_outcome = calibration.outcome;
    } catch (const std::exception& e) {
        calibration_outcome.fail(std::string("exception: ") + e.what());
    }
    const double cal_seconds = seconds_since(cal_t0);
    report(4, "upper-bound dominance", [&] {
        std::vector<const UpperBoundReport*> reports;
        for (const auto& w : worlds) reports.push_back(&w.upper);
        reports.push_back(&calibration.upper);
        return criterion_dominance(reports);
    }, 0.0);
    report(5, "accuracy conformance", [&] { return criterion_accuracy(worlds); }, 0.0);
    report(6, "haversine", criterion_haversine, 0.0);
    report(7, "pearson machinery", criterion_pearson, 0.0);
    report(8, "estimator calibration", [&] { return calibration_outcome; }, 0.0);
    std::printf("     (criterion 8 worlds took %.2f s; criterion 3 worlds %.2f s)\n", cal_seconds, world_seconds);
    report(9, "determinism", [&] { return criterion_determinism(dir); }, 0.0);
    report(10, "scale invariance", [&] { return criterion_scale(dir); }, 0.0);

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
