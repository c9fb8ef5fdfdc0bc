#include "geoaudit/anchor_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "geoaudit/error.hpp"
#include "geoaudit/parallel.hpp"

namespace geoaudit {

namespace {

constexpr std::size_t kLeafSize = 8;

// Slack on the chord radius when gathering exact-distance candidates; far
// above the rounding error of unit-vector coordinates.
constexpr double kChordRelSlack = 1e-9;
constexpr double kChordAbsSlack = 1e-12;

std::array<double, 3> to_unit(const GeoPoint& p) noexcept {
    const double lat = p.lat * std::numbers::pi / 180.0;
    const double lon = p.lon * std::numbers::pi / 180.0;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) noexcept {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace

NearestAnchorIndex::NearestAnchorIndex(AnchorSet anchors) : set_(std::move(anchors)) {
    if (set_.anchors.empty()) throw Error("empty_set", "nearest-anchor index over an empty anchor set");
    const std::size_t n = set_.anchors.size();
    xyz_.resize(n);
    ids_.resize(n);
    split_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        xyz_[i] = to_unit(set_.anchors[i]);
        ids_[i] = static_cast<std::uint32_t>(i);
    }
    build(0, n);
}

void NearestAnchorIndex::build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= kLeafSize) return;
    std::array<double, 3> mn{xyz_[ids_[lo]]}, mx{mn};
    // Only ids_ is permuted during the build; xyz_ is put into kd order once
    // the top-level call finishes.
    for (std::size_t i = lo; i < hi; ++i)
        for (int a = 0; a < 3; ++a) {
            mn[a] = std::min(mn[a], xyz_[ids_[i]][a]);
            mx[a] = std::max(mx[a], xyz_[ids_[i]][a]);
        }
    std::uint8_t axis = 0;
    for (std::uint8_t a = 1; a < 3; ++a)
        if (mx[a] - mn[a] > mx[axis] - mn[axis]) axis = a;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(ids_.begin() + static_cast<std::ptrdiff_t>(lo), ids_.begin() + static_cast<std::ptrdiff_t>(mid),
                     ids_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::uint32_t x, std::uint32_t y) {
                         return xyz_[x][axis] < xyz_[y][axis] || (xyz_[x][axis] == xyz_[y][axis] && x < y);
                     });
    split_[mid] = axis;
    build(lo, mid);
    build(mid + 1, hi);
    if (lo == 0 && hi == xyz_.size()) {
        std::vector<Vec3> ordered(xyz_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) ordered[i] = xyz_[ids_[i]];
        xyz_ = std::move(ordered);
    }
}

void NearestAnchorIndex::search_best(std::size_t lo, std::size_t hi, const Vec3& q, double& best) const {
    if (hi <= lo) return;
    if (hi - lo <= kLeafSize) {
        for (std::size_t i = lo; i < hi; ++i) best = std::min(best, dist2(q, xyz_[i]));
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    best = std::min(best, dist2(q, xyz_[mid]));
    const auto axis = split_[mid];
    const double diff = q[axis] - xyz_[mid][axis];
    if (diff < 0) {
        search_best(lo, mid, q, best);
        if (diff * diff < best) search_best(mid + 1, hi, q, best);
    } else {
        search_best(mid + 1, hi, q, best);
        if (diff * diff < best) search_best(lo, mid, q, best);
    }
}

void NearestAnchorIndex::collect(std::size_t lo, std::size_t hi, const Vec3& q, double limit2,
                                 std::vector<std::uint32_t>& out) const {
    if (hi <= lo) return;
    if (hi - lo <= kLeafSize) {
        for (std::size_t i = lo; i < hi; ++i)
            if (dist2(q, xyz_[i]) <= limit2) out.push_back(ids_[i]);
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    if (dist2(q, xyz_[mid]) <= limit2) out.push_back(ids_[mid]);
    const auto axis = split_[mid];
    const double diff = q[axis] - xyz_[mid][axis];
    if (diff <= 0 || diff * diff <= limit2) collect(lo, mid, q, limit2, out);
    if (diff >= 0 || diff * diff <= limit2) collect(mid + 1, hi, q, limit2, out);
}

NearestAnchor NearestAnchorIndex::nearest(const GeoPoint& p) const {
    const auto q = to_unit(p);
    double best2 = std::numeric_limits<double>::infinity();
    search_best(0, xyz_.size(), q, best2);
    const double limit = std::sqrt(best2) * (1.0 + kChordRelSlack) + kChordAbsSlack;

    std::vector<std::uint32_t> candidates;
    collect(0, xyz_.size(), q, limit * limit, candidates);

    NearestAnchor best{set_.anchors[candidates.front()], std::numeric_limits<double>::infinity()};
    for (const auto id : candidates) {
        const GeoPoint& a = set_.anchors[id];
        const double d = haversine(p, a);
        if (d < best.distance_km || (d == best.distance_km && a < best.anchor)) best = {a, d};
    }
    return best;
}

NearestAnchor nearest_anchor(const NearestAnchorIndex& index, const GeoPoint& p) { return index.nearest(p); }

AnchorIndexSeries::AnchorIndexSeries(std::vector<NearestAnchorIndex> indexes) : indexes_(std::move(indexes)) {}

AnchorIndexSeries AnchorIndexSeries::from_series(const SnapshotSeries& series) {
    std::vector<NearestAnchorIndex> v;
    v.reserve(series.size());
    for (const auto& s : series.snapshots()) v.emplace_back(extract_anchors(s));
    return AnchorIndexSeries(std::move(v));
}

const NearestAnchorIndex& AnchorIndexSeries::at(std::size_t ordinal) const {
    if (ordinal >= indexes_.size())
        throw ConsistencyError("snapshot_mismatch", "sample refers to snapshot " + std::to_string(ordinal) +
                                                        " but only " + std::to_string(indexes_.size()) +
                                                        " anchor indexes exist");
    return indexes_[ordinal];
}

namespace {

void check_anchor(const JoinedSample& s, const NearestAnchorIndex& index) {
    if (!index.anchors().contains(s.pos_ip))
        throw ConsistencyError("snapshot_mismatch", "sample pos_ip (" + std::to_string(s.pos_ip.lat) + ", " +
                                                        std::to_string(s.pos_ip.lon) +
                                                        ") is not an anchor of its snapshot");
}

}  // namespace

std::optional<double> internal_accuracy(std::span<const JoinedSample> samples, const AnchorIndexSeries& indexes,
                                        unsigned threads) {
    if (samples.empty()) return std::nullopt;
    std::vector<std::uint8_t> same(samples.size(), 0);
    parallel_chunks(samples.size(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto& idx = indexes.at(samples[i].snapshot_ordinal);
            check_anchor(samples[i], idx);
            same[i] = idx.nearest(samples[i].event.pos_gt).anchor == samples[i].pos_ip ? 1 : 0;
        }
    });
    std::uint64_t hits = 0;
    for (auto v : same) hits += v;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::vector<OptimalSample> optimal_assignment(std::span<const JoinedSample> samples, const AnchorIndexSeries& indexes,
                                              unsigned threads) {
    std::vector<OptimalSample> out(samples.size());
    parallel_chunks(samples.size(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto& idx = indexes.at(samples[i].snapshot_ordinal);
            check_anchor(samples[i], idx);
            const auto n = idx.nearest(samples[i].event.pos_gt);
            out[i] = {n.anchor, n.distance_km};
        }
    });
    return out;
}

std::vector<JoinedSample> reassigned_samples(std::span<const JoinedSample> samples,
                                             std::span<const OptimalSample> optimal, const RegionIndex& regions,
                                             unsigned threads) {
    if (samples.size() != optimal.size())
        throw ConsistencyError("size_mismatch", "optimal assignment does not match the sample set");
    std::vector<JoinedSample> out(samples.begin(), samples.end());
    parallel_chunks(out.size(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            auto& s = out[i];
            if (optimal[i].pos_opt != s.pos_ip) s.region_ip = label_regions(regions, optimal[i].pos_opt);
            s.pos_ip = optimal[i].pos_opt;
            s.error_km = optimal[i].error_opt_km;
        }
    });
    return out;
}

UpperBoundReport upper_bound_report(std::span<const JoinedSample> samples, const AnchorIndexSeries& indexes,
                                    const RegionIndex& regions, unsigned threads) {
    UpperBoundReport r;
    r.sample_count = samples.size();
    r.per_sample = optimal_assignment(samples, indexes, threads);
    std::uint64_t same = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (r.per_sample[i].pos_opt == samples[i].pos_ip)
            ++same;
        else
            ++r.reassigned_count;
        if (r.per_sample[i].error_opt_km > samples[i].error_km) ++r.dominance_violations;
    }
    if (!samples.empty()) r.internal_accuracy = static_cast<double>(same) / static_cast<double>(samples.size());

    const auto moved = reassigned_samples(samples, r.per_sample, regions, threads);
    for (const auto dim : kAllDimensions) {
        r.optimal_precision.emplace(dim, precision_distribution(moved, dim));
        for (int level = kMinLevel; level <= kMaxLevel; ++level)
            r.optimal_accuracy[level].emplace(dim, accuracy(moved, level, dim));
    }
    return r;
}

}  // namespace geoaudit
