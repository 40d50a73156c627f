#include "gesturemap/gesture_map.hpp"

#include "gesturemap/error.hpp"

#include <algorithm>
#include <cmath>

namespace gmap {

void Viewport::validate() const {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_min) || !std::isfinite(y_max))
        throw Error(ErrorCode::validation, "viewport bounds must be finite");
    if (!(x_min < x_max) || !(y_min < y_max))
        throw Error(ErrorCode::validation, "viewport requires x_min < x_max and y_min < y_max");
    if (grid_m < 2) throw Error(ErrorCode::validation, "grid size m must be at least 2");
}

std::vector<double> linspace(double lo, double hi, int m) {
    std::vector<double> out(static_cast<std::size_t>(m));
    const double step = (hi - lo) / static_cast<double>(m - 1);
    for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
    out.front() = lo;
    out.back() = hi;
    return out;
}

Viewport default_viewport(std::span<const LatentPoint> points, int grid_m) {
    Viewport v;
    v.grid_m = grid_m;
    if (points.empty()) return v;
    v.x_min = v.x_max = points.front()[0];
    v.y_min = v.y_max = points.front()[1];
    for (const auto& p : points) {
        v.x_min = std::min(v.x_min, p[0]);
        v.x_max = std::max(v.x_max, p[0]);
        v.y_min = std::min(v.y_min, p[1]);
        v.y_max = std::max(v.y_max, p[1]);
    }
    auto grow = [](double& lo, double& hi) {
        const double extent = hi - lo;
        if (extent <= 0.0) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            lo -= 0.05 * extent;
            hi += 0.05 * extent;
        }
    };
    grow(v.x_min, v.x_max);
    grow(v.y_min, v.y_max);
    return v;
}

LandmarkGrid landmark_grid(const VaeModel& model, const Viewport& viewport) {
    viewport.validate();
    LandmarkGrid g;
    g.viewport = viewport;
    g.m = viewport.grid_m;
    const auto xs = linspace(viewport.x_min, viewport.x_max, g.m);
    const auto ys = linspace(viewport.y_min, viewport.y_max, g.m);
    for (double y : ys)
        for (double x : xs) g.points.push_back({x, y});

    Eigen::MatrixXd z(2, static_cast<Eigen::Index>(g.points.size()));
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        z(0, static_cast<Eigen::Index>(i)) = g.points[i][0];
        z(1, static_cast<Eigen::Index>(i)) = g.points[i][1];
    }
    const Eigen::MatrixXd decoded = model.decode_batch(z);
    g.poses.reserve(g.points.size());
    for (Eigen::Index c = 0; c < decoded.cols(); ++c)
        g.poses.push_back(unflatten(std::span<const double>(decoded.col(c).data(), kPoseDim)));
    return g;
}

EmbeddingTable embed_corpus(const VaeModel& model, const Corpus& corpus) {
    EmbeddingTable table;
    for (const auto& s : corpus.sequences()) table.emplace(s.id, model.encode_sequence(s));
    return table;
}

bool ScatterFilter::accepts(const GestureSequence& s) const {
    return (!referent || s.referent == *referent) && (!participant || s.participant == *participant) &&
           (!trial || s.trial == *trial);
}

namespace {

const LatentPath& embedding_of(const EmbeddingTable& embedding, const std::string& id) {
    auto it = embedding.find(id);
    if (it == embedding.end()) throw Error(ErrorCode::not_found, "no embedding for sequence '" + id + "'");
    return it->second;
}

}  // namespace

std::vector<ScatterRecord> scatter_projection(const Corpus& corpus, const EmbeddingTable& embedding,
                                              std::span<const std::string> scope,
                                              const ScatterFilter& filter) {
    std::vector<ScatterRecord> out;
    for (const auto& id : scope) {
        const auto& s = corpus.at(id);
        if (!filter.accepts(s)) continue;
        const auto& path = embedding_of(embedding, id);
        for (std::size_t t = 0; t < path.points.size(); ++t)
            out.push_back({path.points[t], s.id, t, s.referent, s.participant, s.trial});
    }
    return out;
}

double DensityGrid::cell_area() const {
    const double dx = (viewport.x_max - viewport.x_min) / resolution;
    const double dy = (viewport.y_max - viewport.y_min) / resolution;
    return dx * dy;
}

namespace {

double scott_axis(std::span<const LatentPoint> pts, int axis) {
    const double n = static_cast<double>(pts.size());
    if (pts.size() < 2) return 0.0;
    double mean = 0.0;
    for (const auto& p : pts) mean += p[axis];
    mean /= n;
    double ss = 0.0;
    for (const auto& p : pts) ss += (p[axis] - mean) * (p[axis] - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return std::pow(n, -1.0 / 6.0) * sd;
}

double normal_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

// Kernel mass of each point in each lattice interval along one axis.
std::vector<double> interval_mass(std::span<const LatentPoint> pts, int axis, double lo, double hi, int r,
                                  double h) {
    const double step = (hi - lo) / r;
    std::vector<double> edges(static_cast<std::size_t>(r) + 1);
    for (int i = 0; i <= r; ++i) edges[static_cast<std::size_t>(i)] = lo + step * i;
    edges.back() = hi;
    std::vector<double> mass(pts.size() * static_cast<std::size_t>(r));
    for (std::size_t k = 0; k < pts.size(); ++k) {
        double prev = normal_cdf((edges[0] - pts[k][axis]) / h);
        for (int i = 0; i < r; ++i) {
            const double next = normal_cdf((edges[static_cast<std::size_t>(i) + 1] - pts[k][axis]) / h);
            mass[k * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)] = next - prev;
            prev = next;
        }
    }
    return mass;
}

}  // namespace

DensityGrid density_grid(std::span<const LatentPoint> points, const Viewport& viewport, int resolution,
                         const Bandwidth& bandwidth) {
    if (points.empty()) throw Error(ErrorCode::validation, "density grid needs at least one point");
    if (resolution < 1) throw Error(ErrorCode::validation, "density resolution must be positive");
    Viewport vp = viewport;
    vp.grid_m = std::max(vp.grid_m, 2);
    vp.validate();

    DensityGrid g;
    g.viewport = vp;
    g.resolution = resolution;
    if (bandwidth.fixed) {
        if (!(*bandwidth.fixed > 0.0) || !std::isfinite(*bandwidth.fixed))
            throw Error(ErrorCode::validation, "explicit bandwidth must be positive");
        g.bandwidth_x = g.bandwidth_y = *bandwidth.fixed;
    } else {
        g.bandwidth_x = scott_axis(points, 0);
        g.bandwidth_y = scott_axis(points, 1);
        if (!(g.bandwidth_x > 0.0)) {
            g.bandwidth_x = kBandwidthFallback;
            g.bandwidth_fallback = true;
        }
        if (!(g.bandwidth_y > 0.0)) {
            g.bandwidth_y = kBandwidthFallback;
            g.bandwidth_fallback = true;
        }
    }

    const auto mx = interval_mass(points, 0, vp.x_min, vp.x_max, resolution, g.bandwidth_x);
    const auto my = interval_mass(points, 1, vp.y_min, vp.y_max, resolution, g.bandwidth_y);
    const auto r = static_cast<std::size_t>(resolution);
    const double norm = 1.0 / (static_cast<double>(points.size()) * g.cell_area());
    g.values.assign(r * r, 0.0);
    for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < r; ++col) {
            double s = 0.0;
            for (std::size_t k = 0; k < points.size(); ++k) s += my[k * r + row] * mx[k * r + col];
            g.values[row * r + col] = s * norm;
        }
    return g;
}

TimedPath timed(const LatentPath& path, double frame_rate) {
    TimedPath t;
    t.path = path;
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        t.frame_index.push_back(i);
        t.seconds.push_back(frame_rate > 0.0 ? static_cast<double>(i) / frame_rate : 0.0);
    }
    return t;
}

std::vector<TimedPath> path_projection(const Corpus& corpus, const EmbeddingTable& embedding,
                                       std::span<const std::string> ids) {
    std::vector<TimedPath> out;
    for (const auto& id : ids) {
        const auto& s = corpus.at(id);
        const auto* d = corpus.find_dataset(s.dataset_id);
        out.push_back(timed(embedding_of(embedding, id), d ? d->frame_rate : 0.0));
    }
    return out;
}

}  // namespace gmap
