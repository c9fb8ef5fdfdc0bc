#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoaudit/anchor_analysis.hpp"
#include "geoaudit/ground_truth.hpp"
#include "geoaudit/ip_space.hpp"
#include "geoaudit/regions.hpp"

namespace geoaudit {

enum class LocationSource { gps, geoip, user, unavailable };

std::string_view to_string(LocationSource s) noexcept;
std::optional<LocationSource> parse_location_source(std::string_view s) noexcept;

struct BidRequest {
    std::int64_t timestamp = 0;
    IpAddress ip;
    LocationSource loc_source = LocationSource::unavailable;
    std::optional<GeoPoint> pos;  // always present for gps-source bids
    double bid_floor = 0.0;
};

inline constexpr std::string_view kBidstreamHeader = "timestamp,ip,loc_source,lat,lon,bid_floor";

/// Strict parse: any malformed row is a ParseError with its line number.
std::vector<BidRequest> parse_bidstream(std::istream& in);
std::string serialize_bidstream(std::span<const BidRequest> bids);

enum class Database { a, b };

std::string_view to_string(Database d) noexcept;

/// A gps-source bid with its GeoIP positions from each provider series.
struct EnrichedBid {
    BidRequest bid;
    GeoPoint pos_gt;
    std::optional<GeoPoint> pos_ip_a;
    std::optional<GeoPoint> pos_ip_b;
    std::optional<std::uint32_t> ordinal_a;  // snapshot that produced pos_ip_a
    std::optional<std::uint32_t> ordinal_b;

    const std::optional<GeoPoint>& pos_ip(Database d) const noexcept { return d == Database::a ? pos_ip_a : pos_ip_b; }
    const std::optional<std::uint32_t>& ordinal(Database d) const noexcept {
        return d == Database::a ? ordinal_a : ordinal_b;
    }
};

struct EnrichmentResult {
    std::vector<EnrichedBid> bids;
    std::uint64_t dropped_non_gps = 0;
    std::uint64_t unmatched_a = 0;
    std::uint64_t unmatched_b = 0;
};

/// Keeps gps-source bids and looks their IP up in the time-matched snapshot of
/// each series. `series_b` may be null; pos_ip_b then stays absent.
EnrichmentResult build_ground_truth_bids(std::span<const BidRequest> bids, const SnapshotSeries& series_a,
                                         const SnapshotSeries* series_b);

/// Raw median bid floors and their normalisation by the smaller of the two,
/// so min(c_star_ip, c_star_gps) == 1.
struct CostModel {
    double c_ip = 1.0;
    double c_gps = 1.0;
    double c_star_ip = 1.0;
    double c_star_gps = 1.0;

    /// Throws Error("bad_cost") unless both costs are finite and > 0.
    static CostModel from_raw(double c_ip, double c_gps);
};

/// Medians of bid_floor over geoip- and gps-source bids. Throws
/// Error("missing_source") naming the absent source.
CostModel normalized_costs(std::span<const BidRequest> bids);

/// Country of a bid: the level-5 region of its position, or of its GeoIP
/// anchor in `series` when it has no position.
std::optional<std::string> bid_country(const BidRequest& bid, const SnapshotSeries& series, const RegionIndex& regions);

/// One cost model per country that has both sources.
std::map<std::string, CostModel> normalized_costs_by_country(std::span<const BidRequest> bids,
                                                             const SnapshotSeries& series, const RegionIndex& regions);

enum class Strategy { gps, geoip };

std::string_view to_string(Strategy s) noexcept;

/// Effective costs and the resulting buying decision for one campaign. When
/// a_ip == 0 the GeoIP effective cost is +inf and the gain -inf; these are
/// set explicitly, never produced by a division.
struct Decision {
    double a_ip = 0.0;
    double a_gps = 1.0;
    double phi_ip = 0.0;
    double phi_gps = 0.0;
    double gain = 0.0;  // log10(phi_gps / phi_ip); > 0 favours GeoIP
    Strategy strategy = Strategy::gps;
};

/// Ties (phi_ip == phi_gps) go to GPS. Throws Error("bad_accuracy") for
/// a_ip outside [0, 1].
Decision decide(double a_ip, const CostModel& costs);

enum class CampaignMode { actual, optimal };

std::string_view to_string(CampaignMode m) noexcept;

struct CampaignSpec {
    std::string target_region_id;
    int level = kMinLevel;
    TimeWindow window;
    double win_rate = 0.3;
    std::uint64_t rng_seed = 0;
    CampaignMode mode = CampaignMode::actual;
    Database database = Database::a;
};

struct CampaignResult {
    std::uint64_t candidate_count = 0;
    std::uint64_t delivered_count = 0;
    std::optional<double> a_ip;        // absent for an empty campaign
    std::optional<Decision> decision;  // absent for an empty campaign
};

/// Candidates are bids in the window whose GeoIP position (or, in optimal
/// mode, the nearest anchor to their ground truth) lies in the target. A
/// seeded uniform sample of floor(win_rate * candidates) is delivered, and
/// a_ip is the share of delivered bids whose ground truth is in the target.
/// Optimal mode requires `optimal_index` (for the campaign's database).
CampaignResult run_campaign(const CampaignSpec& spec, std::span<const EnrichedBid> bids, const CostModel& costs,
                            const RegionIndex& regions, const AnchorIndexSeries* optimal_index = nullptr);

// ---------------------------------------------------------------------------
// Batch simulation

struct Scenario {
    std::string country;
    int level = 4;
    bool urban_only = false;
    std::size_t n_targets = 5;
    std::size_t repetitions = 3;
    double min_days = 7.0;
    double max_days = 14.0;
    double min_win_rate = 0.20;
    double max_win_rate = 0.40;
    Database database = Database::a;

    /// "4" or "2-urban".
    std::string level_label() const;
};

/// A campaign evaluated directly from a given accuracy and raw costs.
struct FixedEvaluation {
    std::string country;
    std::string level;
    CampaignMode mode = CampaignMode::actual;
    double a_ip = 0.0;
    double c_ip = 1.0;
    double c_gps = 1.0;
};

struct ScenarioFile {
    std::vector<Scenario> scenarios;
    std::vector<FixedEvaluation> fixed;
};

/// JSON: {"scenarios": [{"country", "level", "urban_only", "targets",
/// "repetitions", "duration_days": [lo, hi], "win_rate": [lo, hi],
/// "database"}], "fixed": [{"country", "level", "mode", "a_ip", "c_ip",
/// "c_gps"}]}. Every key except country/level has a default.
ScenarioFile parse_scenario_file(std::istream& in);

/// Majority of the urbanisation cells whose centre lies inside the region are
/// urban. With no cell centre inside, the cell holding the bounding-box
/// centre decides.
bool region_is_urban(const AdminRegion& region, const UrbanizationMap& urbanization);

struct SimulationInputs {
    std::span<const EnrichedBid> bids;
    std::map<std::string, CostModel> costs;  // by country
    const RegionIndex* regions = nullptr;
    const UrbanizationMap* urbanization = nullptr;
    const AnchorIndexSeries* index_a = nullptr;  // needed for optimal mode
    const AnchorIndexSeries* index_b = nullptr;
};

struct BatchOptions {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<CampaignMode> modes = {CampaignMode::actual, CampaignMode::optimal};
};

struct BatchCampaign {
    std::size_t scenario = 0;
    std::size_t target = 0;
    std::size_t repetition = 0;
    std::string country;
    std::string level_label;
    CampaignSpec spec;
    double duration_days = 0.0;
    CostModel costs;
    CampaignResult result;
};

struct DecisionRow {
    std::string country;
    std::string level;
    CampaignMode mode = CampaignMode::actual;
    Strategy strategy = Strategy::gps;
    std::uint64_t count = 0;
};

struct FlaggedTarget {
    std::size_t scenario = 0;
    std::string region_id;
    CampaignMode mode = CampaignMode::actual;
    std::string reason;
};

struct DecisionTable {
    std::vector<DecisionRow> rows;  // sorted by (country, level, mode, strategy)
    std::vector<BatchCampaign> campaigns;
    std::vector<FixedEvaluation> fixed_inputs;
    std::vector<Decision> fixed_decisions;
    std::vector<FlaggedTarget> flagged;
    std::vector<std::string> notes;
};

/// Runs every scenario: targets drawn from the eligible regions, then
/// `repetitions` campaigns per target with duration and win rate drawn
/// uniformly from the scenario ranges, for each requested mode. All draws are
/// seeded by (seed, scenario, target, repetition), so results do not depend
/// on the thread count.
DecisionTable batch_simulate(const ScenarioFile& scenarios, const SimulationInputs& inputs, const BatchOptions& options);

/// Recounts strategies from per-campaign results (used as a cross-check).
std::vector<DecisionRow> tally_decisions(const DecisionTable& table);

inline constexpr std::string_view kDecisionHeader = "country,level,mode,strategy,count";

std::string serialize_decision_rows(std::span<const DecisionRow> rows);

}  // namespace geoaudit
