#include "geoaudit/ground_truth.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <variant>

#include "geoaudit/error.hpp"
#include "geoaudit/parallel.hpp"
#include "geoaudit/text.hpp"

namespace geoaudit {

std::string normalize_carrier(std::string_view raw) { return text::to_lower(text::trim(raw)); }

namespace {

constexpr std::string_view kOutsideWindow = "outside study window";

// Returns a reject reason, or empty on success.
std::string parse_event(std::string_view line, const IngestOptions& opt, LocationEvent& ev) {
    const auto f = text::split(line);
    if (f.size() != 6) return "expected 6 fields";
    const auto ts = text::parse_int64(f[0]);
    if (!ts) return "bad timestamp";
    const auto lat = text::parse_double(f[1]);
    if (!lat || *lat < -90.0 || *lat > 90.0) return "lat out of range";
    const auto lon = text::parse_double(f[2]);
    if (!lon || *lon < -180.0 || *lon > 180.0) return "lon out of range";
    try {
        ev.ip = parse_ip(f[3]);
    } catch (const Error& e) {
        return e.code() == "ipv6_unsupported" ? "ipv6 unsupported" : "bad ip";
    }
    if (opt.study_window && !opt.study_window->contains(*ts)) return std::string(kOutsideWindow);
    const auto country = text::trim(f[5]);
    if (country.size() < 2 || country.size() > 3 ||
        !std::all_of(country.begin(), country.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }))
        return "bad country code";
    ev.timestamp = *ts;
    ev.pos_gt = GeoPoint{*lat, *lon};
    ev.carrier = normalize_carrier(f[4]);
    ev.country.assign(country);
    for (auto& c : ev.country) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return {};
}

}  // namespace

IngestResult ingest_events(std::istream& in, const IngestOptions& options) {
    text::LineReader reader(in);
    text::expect_header(reader, kEventsHeader);
    IngestResult result;
    std::string line;
    while (reader.next(line)) {
        if (text::trim(line).empty()) continue;
        LocationEvent ev;
        auto reason = parse_event(line, options, ev);
        if (reason == kOutsideWindow)
            ++result.outside_window;
        else if (reason.empty())
            result.events.push_back(std::move(ev));
        else
            result.rejects.push_back({reader.line_number(), std::move(reason)});
    }
    const auto total = result.total();
    if (total > 0 &&
        static_cast<double>(result.rejects.size()) > options.max_invalid_fraction * static_cast<double>(total)) {
        std::map<std::string, std::size_t> by_reason;
        for (const auto& r : result.rejects) ++by_reason[r.reason];
        std::string summary = std::to_string(result.rejects.size()) + " of " + std::to_string(total) +
                              " event records invalid (limit " + text::format_double(options.max_invalid_fraction * 100.0) +
                              "%):";
        for (const auto& [reason, n] : by_reason) summary += " " + reason + "=" + std::to_string(n) + ";";
        summary += " first bad line " + std::to_string(result.rejects.front().line);
        throw Error("too_many_invalid", summary);
    }
    return result;
}

std::string_view to_string(Urbanization u) noexcept {
    switch (u) {
        case Urbanization::urban: return "urban";
        case Urbanization::semi_urban: return "semi_urban";
        case Urbanization::rural: return "rural";
        case Urbanization::unknown: break;
    }
    return "unknown";
}

std::optional<Urbanization> parse_urbanization(std::string_view s) noexcept {
    s = text::trim(s);
    if (s == "urban") return Urbanization::urban;
    if (s == "semi_urban") return Urbanization::semi_urban;
    if (s == "rural") return Urbanization::rural;
    if (s == "unknown") return Urbanization::unknown;
    return std::nullopt;
}

void UrbanizationMap::set(const CellId& cell, Urbanization u) {
    if (cell.resolution != resolution_)
        throw Error("bad_cell_id", "urbanization cell " + to_string(cell) + " not at map resolution " +
                                       std::to_string(resolution_));
    cells_[cell.index] = u;
}

Urbanization UrbanizationMap::classify(const CellId& cell) const {
    if (cell.resolution != resolution_) return Urbanization::unknown;
    const auto it = cells_.find(cell.index);
    return it == cells_.end() ? Urbanization::unknown : it->second;
}

Urbanization UrbanizationMap::classify(const GeoPoint& p) const { return classify(cell_of(p, resolution_)); }

std::vector<std::pair<CellId, Urbanization>> UrbanizationMap::sorted_entries() const {
    std::vector<std::pair<CellId, Urbanization>> out;
    out.reserve(cells_.size());
    for (const auto& [idx, u] : cells_) out.emplace_back(CellId{resolution_, idx}, u);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

UrbanizationMap parse_urbanization_map(std::istream& in) {
    text::LineReader reader(in);
    text::expect_header(reader, kUrbanizationHeader);
    std::optional<UrbanizationMap> map;
    std::string line;
    while (reader.next(line)) {
        if (text::trim(line).empty()) continue;
        const auto f = text::split(line);
        if (f.size() != 2) throw ParseError(reader.line_number(), "expected 2 fields");
        CellId cell;
        try {
            cell = parse_cell_id(std::string(text::trim(f[0])));
        } catch (const Error& e) {
            throw ParseError(reader.line_number(), e.what());
        }
        const auto u = parse_urbanization(f[1]);
        if (!u) throw ParseError(reader.line_number(), "unknown urbanization class '" + std::string(f[1]) + "'");
        if (!map) map.emplace(cell.resolution);
        if (cell.resolution != map->resolution())
            throw ParseError(reader.line_number(), "mixed cell resolutions in urbanization map");
        map->set(cell, *u);
    }
    return map ? std::move(*map) : UrbanizationMap{};
}

std::string serialize_urbanization_map(const UrbanizationMap& map) {
    std::string out(kUrbanizationHeader);
    out += '\n';
    for (const auto& [cell, u] : map.sorted_entries()) {
        out += to_string(cell);
        out += ',';
        out += to_string(u);
        out += '\n';
    }
    return out;
}

RegionLabels label_regions(const RegionIndex& index, const GeoPoint& p) {
    RegionLabels labels{};
    for (int level = kMinLevel; level <= kMaxLevel; ++level) labels[level - kMinLevel] = region_of(index, p, level);
    return labels;
}

JoinResult join(std::span<const LocationEvent> events, const SnapshotSeries& series,
                const UrbanizationMap& urbanization, const RegionIndex& regions, unsigned threads) {
    using Outcome = std::variant<JoinedSample, UnmatchedEvent>;
    std::vector<Outcome> outcomes(events.size());

    parallel_chunks(events.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& ev = events[i];
            const auto ordinal = series.ordinal_at(ev.timestamp);
            if (!ordinal) {
                outcomes[i] = UnmatchedEvent{ev, "no_snapshot"};
                continue;
            }
            const IpRange* range = series[*ordinal].lookup(ev.ip);
            if (!range) {
                outcomes[i] = UnmatchedEvent{ev, "ip_not_found"};
                continue;
            }
            JoinedSample s;
            s.event = ev;
            s.pos_ip = range->anchor;
            s.error_km = haversine(ev.pos_gt, range->anchor);
            s.conn_type = range->conn_type;
            s.urbanization = urbanization.classify(ev.pos_gt);
            s.snapshot_ordinal = static_cast<std::uint32_t>(*ordinal);
            s.region_gt = label_regions(regions, ev.pos_gt);
            s.region_ip = label_regions(regions, range->anchor);
            outcomes[i] = std::move(s);
        }
    });

    JoinResult result;
    for (auto& o : outcomes) {
        if (auto* s = std::get_if<JoinedSample>(&o))
            result.samples.push_back(std::move(*s));
        else
            result.unmatched.push_back(std::move(std::get<UnmatchedEvent>(o)));
    }
    return result;
}

namespace {

void append_event(std::string& out, const LocationEvent& e) {
    out += std::to_string(e.timestamp);
    out += ',';
    out += text::format_double(e.pos_gt.lat);
    out += ',';
    out += text::format_double(e.pos_gt.lon);
    out += ',';
    out += to_string(e.ip);
    out += ',';
    out += e.carrier;
    out += ',';
    out += e.country;
}

}  // namespace

std::string serialize_events(std::span<const LocationEvent> events) {
    std::string out(kEventsHeader);
    out += '\n';
    for (const auto& e : events) {
        append_event(out, e);
        out += '\n';
    }
    return out;
}

std::string serialize_unmatched(std::span<const UnmatchedEvent> unmatched) {
    std::string out(kUnmatchedHeader);
    out += '\n';
    for (const auto& u : unmatched) {
        append_event(out, u.event);
        out += ',';
        out += u.reason;
        out += '\n';
    }
    return out;
}

}  // namespace geoaudit
