#pragma once

#include "gesturemap/dataset.hpp"
#include "gesturemap/vae.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gmap {

struct Viewport {
    double x_min = -4.0, x_max = 4.0, y_min = -4.0, y_max = 4.0;
    int grid_m = 11;

    void validate() const;
    bool contains(const LatentPoint& p) const {
        return p[0] >= x_min && p[0] <= x_max && p[1] >= y_min && p[1] <= y_max;
    }
    bool operator==(const Viewport&) const = default;
};

/// `m` evenly spaced values with both endpoints hit exactly.
std::vector<double> linspace(double lo, double hi, int m);

/// Bounding box of `points` grown by 5% of its extent per side. A zero
/// extent on an axis is widened to +-0.5 around the point.
Viewport default_viewport(std::span<const LatentPoint> points, int grid_m = 11);

/// m x m decoded poses over a viewport. Points are row-major with rows
/// running along y (row 0 at y_min) and columns along x.
struct LandmarkGrid {
    Viewport viewport;
    int m = 0;
    std::vector<LatentPoint> points;
    std::vector<Pose> poses;
};

LandmarkGrid landmark_grid(const VaeModel& model, const Viewport& viewport);

using EmbeddingTable = std::map<std::string, LatentPath, std::less<>>;

/// Encodes every sequence of the corpus.
EmbeddingTable embed_corpus(const VaeModel& model, const Corpus& corpus);

struct ScatterFilter {
    std::optional<std::string> referent;
    std::optional<std::string> participant;
    std::optional<int> trial;

    bool accepts(const GestureSequence& s) const;
};

struct ScatterRecord {
    LatentPoint point{};
    std::string sequence_id;
    std::size_t frame = 0;
    std::string referent;
    std::string participant;
    int trial = 1;
};

/// One record per frame of every scoped sequence that passes the filter.
std::vector<ScatterRecord> scatter_projection(const Corpus& corpus, const EmbeddingTable& embedding,
                                              std::span<const std::string> scope,
                                              const ScatterFilter& filter = {});

struct Bandwidth {
    std::optional<double> fixed;

    static Bandwidth scott() { return {}; }
    static Bandwidth explicit_value(double h) { return {h}; }
};

inline constexpr double kBandwidthFallback = 1e-3;

/// Gaussian KDE averaged over each cell of an r x r lattice tiling the
/// viewport (row-major, row 0 at y_min). Summing values times the cell
/// area gives the share of kernel mass that falls inside the viewport.
struct DensityGrid {
    Viewport viewport;
    int resolution = 0;
    double bandwidth_x = 0.0, bandwidth_y = 0.0;
    /// Scott's rule met zero spread on an axis and used kBandwidthFallback.
    bool bandwidth_fallback = false;
    std::vector<double> values;

    double cell_area() const;
};

/// Scott bandwidth per axis: n^(-1/6) times the sample standard deviation.
DensityGrid density_grid(std::span<const LatentPoint> points, const Viewport& viewport,
                         int resolution = 64, const Bandwidth& bandwidth = Bandwidth::scott());

struct TimedPath {
    LatentPath path;
    std::vector<std::size_t> frame_index;  ///< animation clock shared with the skeleton view
    std::vector<double> seconds;
};

TimedPath timed(const LatentPath& path, double frame_rate);

/// Paths for the given ids in request order. Unknown ids raise not_found.
std::vector<TimedPath> path_projection(const Corpus& corpus, const EmbeddingTable& embedding,
                                       std::span<const std::string> ids);

}  // namespace gmap
