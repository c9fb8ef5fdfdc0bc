#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "geoaudit/ground_truth.hpp"
#include "geoaudit/ip_space.hpp"
#include "geoaudit/metrics.hpp"
#include "geoaudit/regions.hpp"

namespace geoaudit {

struct NearestAnchor {
    GeoPoint anchor;
    double distance_km = 0.0;
};

/// Nearest-anchor queries over one anchor set. Membership of a point in an
/// anchor's Voronoi cell is the same as that anchor being its nearest one, so
/// cells are never built explicitly.
///
/// Internally a kd-tree over unit vectors narrows the search by chord length
/// (monotone in great-circle distance); the final pick is made on haversine
/// distance with ties going to the lowest (lat, lon).
class NearestAnchorIndex {
public:
    /// Throws Error("empty_set") for an empty anchor set.
    explicit NearestAnchorIndex(AnchorSet anchors);

    const AnchorSet& anchors() const noexcept { return set_; }
    NearestAnchor nearest(const GeoPoint& p) const;

private:
    using Vec3 = std::array<double, 3>;

    void build(std::size_t lo, std::size_t hi);
    void search_best(std::size_t lo, std::size_t hi, const Vec3& q, double& best) const;
    void collect(std::size_t lo, std::size_t hi, const Vec3& q, double limit2, std::vector<std::uint32_t>& out) const;

    AnchorSet set_;
    std::vector<Vec3> xyz_;           // kd order
    std::vector<std::uint32_t> ids_;  // kd order -> index into set_.anchors
    std::vector<std::uint8_t> split_;  // split axis of the node at each kd position
};

NearestAnchor nearest_anchor(const NearestAnchorIndex& index, const GeoPoint& p);

/// One index per snapshot of a series, addressed by JoinedSample::snapshot_ordinal.
class AnchorIndexSeries {
public:
    explicit AnchorIndexSeries(std::vector<NearestAnchorIndex> indexes);
    static AnchorIndexSeries from_series(const SnapshotSeries& series);

    std::size_t size() const noexcept { return indexes_.size(); }
    /// Throws ConsistencyError("snapshot_mismatch") for an unknown ordinal.
    const NearestAnchorIndex& at(std::size_t ordinal) const;

private:
    std::vector<NearestAnchorIndex> indexes_;
};

/// Share of samples whose assigned anchor is already the nearest anchor to the
/// ground truth. Nothing for an empty sample set. Throws
/// ConsistencyError("snapshot_mismatch") if a sample's pos_ip is not an anchor
/// of its snapshot.
std::optional<double> internal_accuracy(std::span<const JoinedSample> samples, const AnchorIndexSeries& indexes,
                                        unsigned threads = 1);

struct OptimalSample {
    GeoPoint pos_opt;
    double error_opt_km = 0.0;
};

/// Reassigns every sample to the nearest anchor of its snapshot.
std::vector<OptimalSample> optimal_assignment(std::span<const JoinedSample> samples, const AnchorIndexSeries& indexes,
                                              unsigned threads = 1);

/// Copies of `samples` with pos_ip, error and pos_ip region labels replaced
/// by the optimal assignment.
std::vector<JoinedSample> reassigned_samples(std::span<const JoinedSample> samples,
                                             std::span<const OptimalSample> optimal, const RegionIndex& regions,
                                             unsigned threads = 1);

struct UpperBoundReport {
    std::optional<double> internal_accuracy;
    std::uint64_t sample_count = 0;
    std::uint64_t reassigned_count = 0;      // samples whose anchor changes
    std::uint64_t dominance_violations = 0;  // samples with error_opt > error_km; must be 0
    std::map<GroupDimension, PrecisionBreakdown> optimal_precision;
    std::map<int, std::map<GroupDimension, AccuracyReport>> optimal_accuracy;
    std::vector<OptimalSample> per_sample;
};

UpperBoundReport upper_bound_report(std::span<const JoinedSample> samples, const AnchorIndexSeries& indexes,
                                    const RegionIndex& regions, unsigned threads = 1);

}  // namespace geoaudit
