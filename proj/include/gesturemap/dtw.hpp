#pragma once

#include "gesturemap/series.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gmap {

/// Monotone alignment between two series. Steps are (1,0), (0,1) or (1,1).
struct AlignmentPath {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double total_cost = 0.0;
};

struct DtwOptions {
    /// Sakoe-Chiba band radius; unset means unconstrained. The effective
    /// radius is never smaller than the length difference of the inputs.
    std::optional<std::size_t> band;
};

struct DtwResult {
    double distance = 0.0;
    AlignmentPath path;
};

/// Euclidean distance between two frames of equal dimension.
double local_cost(std::span<const double> a, std::span<const double> b);

/// Unnormalized sum of Euclidean local costs along the optimal warping path.
/// Backtracking prefers the diagonal step, then (1,0), then (0,1).
DtwResult dtw(const Series& a, const Series& b, const DtwOptions& options = {});

/// Same distance as dtw() without materializing the path.
double dtw_distance(const Series& a, const Series& b, const DtwOptions& options = {});

/// Checks the step/start/end invariants of a path for lengths (la, lb).
bool is_valid_path(const AlignmentPath& path, std::size_t la, std::size_t lb);

struct NamedSeries {
    std::string id;
    Series series;
};

struct DistanceMatrix {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> values;
};

/// Symmetric matrix of pairwise DTW distances, each unordered pair computed
/// once. `threads == 0` uses the hardware concurrency.
DistanceMatrix distance_matrix(std::span<const NamedSeries> items, const DtwOptions& options = {},
                               unsigned threads = 0);

struct Neighbor {
    std::string id;
    double distance = 0.0;
    bool operator==(const Neighbor&) const = default;
};

struct NeighborList {
    std::vector<Neighbor> neighbors;
    /// Fewer than k candidates were available.
    bool truncated = false;
};

/// The k pool members closest to `target` (the target's own id is skipped),
/// ascending by distance with ties broken by id.
NeighborList nearest_neighbors(const NamedSeries& target, std::span<const NamedSeries> pool,
                               std::size_t k, const DtwOptions& options = {});

}  // namespace gmap
