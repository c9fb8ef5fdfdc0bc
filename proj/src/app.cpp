#include "geoaudit/app.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoaudit/campaign.hpp"
#include "geoaudit/error.hpp"
#include "geoaudit/io.hpp"
#include "geoaudit/oracle.hpp"
#include "geoaudit/report.hpp"
#include "geoaudit/synth.hpp"
#include "geoaudit/text.hpp"
#include "geoaudit/version.hpp"

namespace geoaudit {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class MissingInput : public Error {
public:
    MissingInput(const std::string& role, std::string path) : Error("missing_input", role), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct RunConfig {
    std::string command;
    std::string world;
    std::string events;
    std::string snapshots;
    std::string snapshots_b;
    std::string regions;
    std::string urbanization;
    std::string bidstream;
    std::string scenarios;
    int grid_res = kDefaultGridResolution;
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = 1;
    std::string out;
    std::optional<TimeWindow> study_window;
    double max_invalid_fraction = 0.01;
    bool upper_bound = false;
    bool per_sample = false;
    std::string preset;
    json synth = json::object();
};

std::string resolve_relative(const std::string& p, const fs::path& base) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

void apply_config_file(RunConfig& c, const std::string& path) {
    if (!fs::is_regular_file(path)) throw MissingInput("config", path);
    json doc;
    try {
        doc = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw Error("parse", path + ": " + e.what());
    }
    if (!doc.is_object()) throw Error("bad_config", path + ": top level must be an object");
    const fs::path base = fs::path(path).parent_path();
    try {
        for (auto [key, field] : {std::pair{"world", &c.world}, {"events", &c.events}, {"snapshots", &c.snapshots},
                                  {"snapshots_b", &c.snapshots_b}, {"regions", &c.regions},
                                  {"urbanization", &c.urbanization}, {"bidstream", &c.bidstream},
                                  {"scenarios", &c.scenarios}, {"out", &c.out}})
            if (doc.contains(key)) *field = resolve_relative(doc.at(key).get<std::string>(), base);
        c.grid_res = doc.value("grid_res", c.grid_res);
        if (doc.contains("seed")) {
            c.seed = doc.at("seed").get<std::uint64_t>();
            c.seed_set = true;
        }
        c.threads = doc.value("threads", c.threads);
        c.max_invalid_fraction = doc.value("max_invalid_fraction", c.max_invalid_fraction);
        c.upper_bound = doc.value("upper_bound", c.upper_bound);
        c.per_sample = doc.value("per_sample", c.per_sample);
        c.preset = doc.value("preset", c.preset);
        if (doc.contains("study_window")) {
            const auto& w = doc.at("study_window");
            c.study_window = TimeWindow{w.at(0).get<std::int64_t>(), w.at(1).get<std::int64_t>()};
        }
        if (doc.contains("synth")) c.synth = doc.at("synth");
    } catch (const json::exception& e) {
        throw Error("bad_config", path + ": " + e.what());
    }
}

void validate_run_config(const RunConfig& c) {
    if (c.grid_res < 0 || c.grid_res > kMaxGridResolution)
        throw Error("bad_config", "grid resolution must lie in 0.." + std::to_string(kMaxGridResolution));
    if (c.threads == 0) throw Error("bad_config", "threads must be >= 1");
    if (c.study_window && c.study_window->from >= c.study_window->to)
        throw Error("bad_config", "study window must satisfy from < to");
    if (!(c.max_invalid_fraction >= 0.0 && c.max_invalid_fraction <= 1.0))
        throw Error("bad_config", "max_invalid_fraction must lie in [0, 1]");
}

void require(const std::string& path, const std::string& role) {
    if (path.empty() || !fs::is_regular_file(path)) throw MissingInput(role, path);
}

std::string config_hash(const RunConfig& c) {
    json view = {{"command", c.command},
                 {"events", c.events},
                 {"snapshots", c.snapshots},
                 {"snapshots_b", c.snapshots_b},
                 {"regions", c.regions},
                 {"urbanization", c.urbanization},
                 {"bidstream", c.bidstream},
                 {"scenarios", c.scenarios},
                 {"grid_res", c.grid_res},
                 {"seed", c.seed},
                 {"max_invalid_fraction", c.max_invalid_fraction},
                 {"upper_bound", c.upper_bound},
                 {"per_sample", c.per_sample},
                 {"preset", c.preset},
                 {"synth", c.synth}};
    view["study_window"] = c.study_window ? json{c.study_window->from, c.study_window->to} : json(nullptr);
    return io::sha256_hex(view.dump()).substr(0, 16);
}

json provenance(const RunConfig& c) {
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"command", c.command},
            {"config_hash", config_hash(c)},
            {"seed", c.seed}};
}

std::string csv_header(const RunConfig& c) {
    return std::string("# ") + kToolName + " " + kToolVersion + " " + c.command + " config=" + config_hash(c) +
           " seed=" + std::to_string(c.seed) + "\n";
}

// Reports never overwrite an earlier run unless --out names the directory.
fs::path output_dir(const RunConfig& c, const std::string& parent) {
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        return c.out;
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    fs::path dir = fs::path(parent) / (std::string("run-") + stamp);
    for (int i = 1; fs::exists(dir); ++i) dir = fs::path(parent) / (std::string("run-") + stamp + "-" + std::to_string(i));
    fs::create_directories(dir);
    return dir;
}

void fill_from_world(RunConfig& c) {
    if (c.world.empty()) return;
    if (!fs::is_regular_file(fs::path(c.world) / "manifest.json"))
        throw MissingInput("world", (fs::path(c.world) / "manifest.json").string());
    const auto f = WorldFiles::from_directory(c.world);
    for (auto [field, value] : {std::pair{&c.events, &f.events}, {&c.snapshots, &f.snapshots_a},
                                {&c.snapshots_b, &f.snapshots_b}, {&c.regions, &f.regions},
                                {&c.urbanization, &f.urbanization}, {&c.bidstream, &f.bidstream}})
        if (field->empty()) *field = *value;
}

AuditPaths audit_paths(const RunConfig& c) {
    require(c.events, "events");
    require(c.snapshots, "snapshots");
    require(c.regions, "regions");
    if (!c.urbanization.empty()) require(c.urbanization, "urbanization");
    return {c.events, c.snapshots, c.regions, c.urbanization};
}

IngestOptions ingest_options(const RunConfig& c) {
    IngestOptions o;
    o.max_invalid_fraction = c.max_invalid_fraction;
    o.study_window = c.study_window;
    return o;
}

void write_json(const fs::path& path, const json& doc) { io::write_file_atomic(path.string(), doc.dump(2) + "\n"); }

std::string rejects_csv(const IngestResult& ingest) {
    std::string out = "line,reason\n";
    for (const auto& r : ingest.rejects) out += std::to_string(r.line) + "," + r.reason + "\n";
    return out;
}

int cmd_audit(const RunConfig& c, std::ostream& out) {
    const auto data = load_audit_data(audit_paths(c), c.grid_res, ingest_options(c));
    const auto run = run_audit(data, c.threads);
    json report = audit_json(run.results);
    report["provenance"] = provenance(c);

    std::optional<UpperBoundReport> ub;
    if (c.upper_bound) {
        ub = upper_bound_report(run.joined.samples, AnchorIndexSeries::from_series(data.series), data.regions, c.threads);
        report["upper_bound"] = upper_bound_json(*ub);
    }

    const auto dir = output_dir(c, "reports");
    const auto header = csv_header(c);
    write_json(dir / "report.json", report);
    io::write_file_atomic((dir / "precision.csv").string(), header + precision_csv(run.results));
    io::write_file_atomic((dir / "accuracy.csv").string(), header + accuracy_csv(run.results));
    io::write_file_atomic((dir / "cdf.csv").string(), header + cdf_csv(run.results));
    io::write_file_atomic((dir / "cdf_by_group.csv").string(), header + cdf_by_group_csv(run.results));
    io::write_file_atomic((dir / "unmatched.csv").string(), header + serialize_unmatched(run.joined.unmatched));
    io::write_file_atomic((dir / "rejects.csv").string(), header + rejects_csv(data.ingest));

    out << "audit: " << run.results.matched << " matched, " << run.joined.unmatched.size() << " unmatched, "
        << run.results.events_rejected << " rejected -> " << dir.string() << "\n";
    if (ub && ub->dominance_violations > 0)
        throw ConsistencyError("dominance", std::to_string(ub->dominance_violations) +
                                                " samples have an optimal error above the actual error");
    return kExitOk;
}

int cmd_upperbound(const RunConfig& c, std::ostream& out) {
    const auto data = load_audit_data(audit_paths(c), c.grid_res, ingest_options(c));
    const auto joined = join(data.ingest.events, data.series, data.urbanization, data.regions, c.threads);
    const auto ub =
        upper_bound_report(joined.samples, AnchorIndexSeries::from_series(data.series), data.regions, c.threads);

    const auto dir = output_dir(c, "reports");
    write_json(dir / "upper_bound.json", {{"provenance", provenance(c)}, {"upper_bound", upper_bound_json(ub)}});
    if (c.per_sample) {
        std::string csv = csv_header(c) + "error_actual_km,error_optimal_km\n";
        for (std::size_t i = 0; i < joined.samples.size(); ++i)
            csv += text::format_double(joined.samples[i].error_km) + "," +
                   text::format_double(ub.per_sample[i].error_opt_km) + "\n";
        io::write_file_atomic((dir / "upper_bound_samples.csv").string(), csv);
    }
    out << "upperbound: " << ub.sample_count << " samples, " << ub.reassigned_count << " reassigned, "
        << ub.dominance_violations << " dominance violations -> " << dir.string() << "\n";
    if (ub.dominance_violations > 0)
        throw ConsistencyError("dominance", std::to_string(ub.dominance_violations) +
                                                " samples have an optimal error above the actual error");
    return kExitOk;
}

bool same_rows(const std::vector<DecisionRow>& a, const std::vector<DecisionRow>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].country != b[i].country || a[i].level != b[i].level || a[i].mode != b[i].mode ||
            a[i].strategy != b[i].strategy || a[i].count != b[i].count)
            return false;
    return true;
}

int cmd_simulate(const RunConfig& c, std::ostream& out) {
    require(c.scenarios, "scenarios");
    ScenarioFile file;
    {
        std::ifstream in(c.scenarios, std::ios::binary);
        file = parse_scenario_file(in);
    }

    std::vector<BidRequest> bids;
    SnapshotSeries series_a;
    std::optional<SnapshotSeries> series_b;
    RegionIndex regions;
    UrbanizationMap urbanization;
    std::optional<AnchorIndexSeries> index_a, index_b;
    EnrichmentResult enriched;
    std::map<std::string, CostModel> costs;

    // Fixed evaluations alone need no data files.
    if (!file.scenarios.empty()) {
        require(c.bidstream, "bidstream");
        require(c.snapshots, "snapshots");
        require(c.regions, "regions");
        {
            std::ifstream in(c.bidstream, std::ios::binary);
            bids = parse_bidstream(in);
        }
        series_a = load_snapshot_series(c.snapshots);
        const bool needs_b = std::any_of(file.scenarios.begin(), file.scenarios.end(),
                                         [](const Scenario& s) { return s.database == Database::b; });
        if (needs_b) require(c.snapshots_b, "snapshots_b");
        if (!c.snapshots_b.empty()) {
            require(c.snapshots_b, "snapshots_b");
            series_b = load_snapshot_series(c.snapshots_b);
        }
        regions = build_region_index(load_regions_file(c.regions), c.grid_res);
        if (!c.urbanization.empty()) {
            require(c.urbanization, "urbanization");
            std::ifstream in(c.urbanization, std::ios::binary);
            urbanization = parse_urbanization_map(in);
        }
        enriched = build_ground_truth_bids(bids, series_a, series_b ? &*series_b : nullptr);
        costs = normalized_costs_by_country(bids, series_a, regions);
        index_a = AnchorIndexSeries::from_series(series_a);
        if (series_b) index_b = AnchorIndexSeries::from_series(*series_b);
    }

    SimulationInputs inputs;
    inputs.bids = enriched.bids;
    inputs.costs = costs;
    inputs.regions = &regions;
    inputs.urbanization = c.urbanization.empty() ? nullptr : &urbanization;
    inputs.index_a = index_a ? &*index_a : nullptr;
    inputs.index_b = index_b ? &*index_b : nullptr;
    BatchOptions options;
    options.seed = c.seed;
    options.threads = c.threads;
    const auto table = batch_simulate(file, inputs, options);
    if (!same_rows(table.rows, tally_decisions(table)))
        throw ConsistencyError("tally_mismatch", "decision counts disagree with per-campaign results");

    json cost_doc = json::object();
    for (const auto& [country, model] : costs) cost_doc[country] = cost_json(model);
    json doc = decision_table_json(table);
    doc["provenance"] = provenance(c);
    doc["costs"] = cost_doc;
    doc["enrichment"] = {{"gps_bids", enriched.bids.size()},
                         {"dropped_non_gps", enriched.dropped_non_gps},
                         {"unmatched_a", enriched.unmatched_a},
                         {"unmatched_b", enriched.unmatched_b}};

    const auto dir = output_dir(c, "reports");
    io::write_file_atomic((dir / "decision_table.csv").string(), csv_header(c) + serialize_decision_rows(table.rows));
    write_json(dir / "campaigns.json", doc);
    out << "simulate: " << table.campaigns.size() << " campaigns, " << table.rows.size() << " table rows -> "
        << dir.string() << "\n";
    return kExitOk;
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
    json base = to_json(c.preset.empty() ? WorldConfig{} : world_preset(c.preset));
    base.merge_patch(c.synth);
    WorldConfig config = world_config_from_json(base);
    if (c.seed_set) config.seed = c.seed;
    const auto dir = output_dir(c, "worlds");
    const auto world = generate_world(config, dir.string());
    out << "synth: " << world.truth.event_displacement_km.size() << " events, " << world.truth.range_anchor.size()
        << " ranges (reuse factor " << text::format_double(world.truth.expected_reuse_factor) << ") -> "
        << dir.string() << "\n";
    return kExitOk;
}

int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    json summary = json::object();
    const auto data = load_audit_data(audit_paths(c), c.grid_res, ingest_options(c));
    summary["snapshots"] = data.series.size();
    summary["regions"] = data.region_list.size();
    summary["events_valid"] = data.ingest.events.size();
    summary["events_rejected"] = data.ingest.rejects.size();
    if (!c.bidstream.empty()) {
        require(c.bidstream, "bidstream");
        std::ifstream in(c.bidstream, std::ios::binary);
        summary["bids"] = parse_bidstream(in).size();
    }

    std::vector<std::string> diffs;
    try {
        oracle::check_scale(data);
        const auto run = run_audit(data, c.threads);
        const auto mine = audit_json(run.results);
        const auto ref = audit_json(oracle::audit(data));
        diffs = compare_reports(ref, mine);
        const auto ub = upper_bound_report(run.joined.samples, AnchorIndexSeries::from_series(data.series), data.regions,
                                           c.threads);
        for (auto& d : compare_reports(upper_bound_json(oracle::upper_bound(data)), upper_bound_json(ub)))
            diffs.push_back("upper_bound" + d);
        if (ub.dominance_violations > 0) diffs.push_back("upper_bound: dominance violated");
        summary["oracle"] = diffs.empty() ? "agree" : "disagree";
    } catch (const Error& e) {
        if (e.code() != "scale_guard") throw;
        summary["oracle"] = "skipped";
        summary["oracle_reason"] = e.what();
    }
    out << summary.dump(2) << "\n";
    if (!diffs.empty()) {
        for (const auto& d : diffs) err << d << "\n";
        throw ConsistencyError("oracle_mismatch", std::to_string(diffs.size()) + " fields differ from the oracle");
    }
    return kExitOk;
}

void print_error(std::ostream& err, const std::string& error, const std::string& cls, const std::string& path = {}) {
    json j = {{"error", error}, {"class", cls}};
    if (!path.empty()) j["path"] = path;
    err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"GeoIP database audit toolkit", "geoaudit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

    RunConfig c;
    std::string config_path;
    int grid_res = 0;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string out_dir;
    std::vector<std::int64_t> window;
    RunConfig flags;

    app.add_option("--config", config_path, "JSON run configuration; flags override it");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory (default: fresh timestamped directory)");
    auto* res_opt = app.add_option("--grid-res", grid_res, "Grid resolution for region and density cells");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads");
    auto* world_opt = app.add_option("--world", flags.world, "Synthetic world directory (fills every input path)");
    auto* events_opt = app.add_option("--events", flags.events, "Events CSV");
    auto* snaps_opt = app.add_option("--snapshots", flags.snapshots, "Snapshot series manifest (provider A)");
    auto* snaps_b_opt = app.add_option("--snapshots-b", flags.snapshots_b, "Snapshot series manifest (provider B)");
    auto* regions_opt = app.add_option("--regions", flags.regions, "Regions GeoJSON");
    auto* urb_opt = app.add_option("--urbanization", flags.urbanization, "Urbanisation CSV");
    auto* window_opt = app.add_option("--study-window", window, "Study window FROM TO (epoch seconds)")->expected(2);

    auto* audit = app.add_subcommand("audit", "Precision, accuracy, density and stability report")->fallthrough();
    auto* ub_flag = audit->add_flag("--upper-bound", flags.upper_bound, "Also compute the optimal-assignment section");
    auto* upper = app.add_subcommand("upperbound", "Optimal anchor reassignment upper bound")->fallthrough();
    auto* per_sample_flag = upper->add_flag("--per-sample", flags.per_sample, "Write per-sample errors");
    auto* simulate = app.add_subcommand("simulate", "Location-targeted campaign simulation")->fallthrough();
    auto* bids_opt = simulate->add_option("--bidstream", flags.bidstream, "Bid stream CSV");
    auto* scen_opt = simulate->add_option("--scenarios", flags.scenarios, "Scenario JSON");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic world with planted truth")->fallthrough();
    auto* preset_opt = synth->add_option("--preset", flags.preset, "desk, spain, france or gb");
    auto* validate = app.add_subcommand("validate", "Validate inputs and check the pipeline against the oracle")
                         ->fallthrough();
    auto* vbids_opt = validate->add_option("--bidstream", flags.bidstream, "Bid stream CSV");

    std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << kToolName << " " << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        print_error(err, std::string("usage: ") + e.what(), "input");
        return kExitInputError;
    }

    try {
        if (audit->parsed()) c.command = "audit";
        if (upper->parsed()) c.command = "upperbound";
        if (simulate->parsed()) c.command = "simulate";
        if (synth->parsed()) c.command = "synth";
        if (validate->parsed()) c.command = "validate";
        c.threads = std::max(1u, std::thread::hardware_concurrency());

        if (!config_path.empty()) apply_config_file(c, config_path);
        if (seed_opt->count()) {
            c.seed = seed;
            c.seed_set = true;
        }
        if (out_opt->count()) c.out = out_dir;
        if (res_opt->count()) c.grid_res = grid_res;
        if (threads_opt->count()) c.threads = threads;
        if (window_opt->count()) c.study_window = TimeWindow{window.at(0), window.at(1)};
        for (auto [opt, field, value] :
             {std::tuple{world_opt, &c.world, &flags.world}, {events_opt, &c.events, &flags.events},
              {snaps_opt, &c.snapshots, &flags.snapshots}, {snaps_b_opt, &c.snapshots_b, &flags.snapshots_b},
              {regions_opt, &c.regions, &flags.regions}, {urb_opt, &c.urbanization, &flags.urbanization},
              {bids_opt, &c.bidstream, &flags.bidstream}, {scen_opt, &c.scenarios, &flags.scenarios},
              {vbids_opt, &c.bidstream, &flags.bidstream}, {preset_opt, &c.preset, &flags.preset}})
            if (opt->count()) *field = *value;
        if (ub_flag->count()) c.upper_bound = true;
        if (per_sample_flag->count()) c.per_sample = true;
        validate_run_config(c);
        if (c.command != "synth") fill_from_world(c);

        if (c.command == "audit") return cmd_audit(c, out);
        if (c.command == "upperbound") return cmd_upperbound(c, out);
        if (c.command == "simulate") return cmd_simulate(c, out);
        if (c.command == "synth") return cmd_synth(c, out);
        return cmd_validate(c, out, err);
    } catch (const MissingInput& e) {
        print_error(err, "missing_input: " + std::string(e.what()), "input", e.path());
        return kExitInputError;
    } catch (const Error& e) {
        const bool invariant = e.error_class() == ErrorClass::invariant;
        print_error(err, e.code() + ": " + e.what(), invariant ? "invariant" : "input");
        return invariant ? kExitInvariant : kExitInputError;
    } catch (const fs::filesystem_error& e) {
        print_error(err, std::string("io: ") + e.what(), "input");
        return kExitInputError;
    } catch (const std::exception& e) {
        print_error(err, std::string("internal: ") + e.what(), "invariant");
        return kExitInvariant;
    }
}

}  // namespace geoaudit
