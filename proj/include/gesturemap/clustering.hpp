#pragma once

#include "gesturemap/barycenter.hpp"
#include "gesturemap/dtw.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gmap {

enum class ClusterStatus { initialized, converged, max_iter_reached };

std::string_view to_string(ClusterStatus status);
ClusterStatus parse_cluster_status(std::string_view text);

/// A cluster that lost all members and was refilled with the sequence
/// farthest from its own centroid.
struct Reseed {
    int iteration = 0;
    std::size_t cluster = 0;
    std::string sequence_id;
    bool operator==(const Reseed&) const = default;
};

struct ClusterModel {
    std::size_t k = 0;
    /// Sorted sequence ids in scope.
    std::vector<std::string> scope;
    std::vector<Series> centroids;
    std::map<std::string, std::size_t> assignments;
    /// Ids whose assignment the user fixed by hand; run() never moves them.
    std::set<std::string> pinned;
    /// Total WGSS at the start of the latest run, then after each iteration.
    std::vector<double> inertia_trace;
    ClusterStatus status = ClusterStatus::initialized;
    int iterations_run = 0;
    std::vector<Reseed> reseeds;
    /// Centroids were recomputed from the current assignment table.
    bool centroids_fresh = false;

    std::vector<std::string> members_of(std::size_t cluster) const;
    bool operator==(const ClusterModel&) const = default;
};

/// Seeding: explicit member ids (one per cluster), or farthest-first from a
/// seeded random start.
struct SeedSpec {
    std::vector<std::string> explicit_ids;
    std::size_t k = 0;
    std::uint64_t rng_seed = 0;

    static SeedSpec explicit_seeds(std::vector<std::string> ids) { return {std::move(ids), 0, 0}; }
    static SeedSpec farthest_first(std::size_t k, std::uint64_t seed) { return {{}, k, seed}; }
    bool is_explicit() const { return !explicit_ids.empty(); }
};

struct ClusterConfig {
    DbaConfig dba;
};

/// Centroids start as copies of the seeds; every scope member is assigned
/// to its nearest centroid (ties to the lowest index).
ClusterModel init_clusters(std::span<const NamedSeries> scope, const SeedSpec& seeds,
                           const ClusterConfig& config = {});

/// Alternate nearest-centroid assignment of unpinned members and DBA
/// centroid updates (started from the current centroid) until the
/// assignment is stable or `max_iter` iterations ran.
ClusterModel run(const ClusterModel& model, std::span<const NamedSeries> scope, int max_iter,
                 const ClusterConfig& config = {});

/// Move `sequence_id` to `target` and pin it there. Centroids are left as is.
ClusterModel reassign(const ClusterModel& model, const std::string& sequence_id, std::size_t target);

/// Recompute every centroid by medoid-initialized DBA over its current
/// members, then run().
ClusterModel rerun_from_assignments(const ClusterModel& model, std::span<const NamedSeries> scope,
                                    int max_iter, const ClusterConfig& config = {});

/// Sum over scope of the squared DTW distance to the assigned centroid.
double total_inertia(const ClusterModel& model, std::span<const NamedSeries> scope,
                     const DtwOptions& options = {});

}  // namespace gmap
