#pragma once
// Test-only data generators and independent oracles. Nothing here calls
// into the DP/DBA/KDE implementations it is used to check.

#include "gesturemap/dataset.hpp"
#include "gesturemap/dtw.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace gmap::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline double normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - uniform(rng, 0.0, 1.0);
    const double u2 = uniform(rng, 0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

/// Normalized-scale 20-joint skeleton (Kinect v1 order). `arm` is the
/// shoulder angle from hanging (0) to overhead (pi); `crouch` in [0, 1]
/// bends the knees.
inline Pose skeleton(double left_arm, double right_arm, double crouch) {
    Pose p;
    auto set = [&](std::size_t j, double x, double y, double z) { p.joints[j] = {x, y, z}; };
    set(0, 0, 0, 0);
    set(1, 0, 0.5, 0);
    set(2, 0, 1.0, 0);
    set(3, 0, 1.3, 0);
    auto arm = [&](std::size_t base, double side, double angle) {
        const double sx = 0.35 * side, sy = 0.95;
        const double dx = std::sin(angle) * side, dy = -std::cos(angle);
        set(base, sx, sy, 0);
        set(base + 1, sx + 0.55 * dx, sy + 0.55 * dy, 0);
        set(base + 2, sx + 1.05 * dx, sy + 1.05 * dy, 0);
        set(base + 3, sx + 1.15 * dx, sy + 1.15 * dy, 0);
    };
    arm(4, -1, left_arm);
    arm(8, 1, right_arm);
    auto leg = [&](std::size_t base, double side) {
        const double hx = 0.2 * side;
        const double knee_z = 0.5 * crouch, ankle_y = -1.7 + 0.6 * crouch;
        set(base, hx, -0.05, 0);
        set(base + 1, hx, -0.9 + 0.3 * crouch, knee_z);
        set(base + 2, hx, ankle_y, 0);
        set(base + 3, hx, ankle_y - 0.05, 0.1);
    };
    leg(12, -1);
    leg(16, 1);
    return p;
}

inline Pose jitter(Pose p, std::mt19937_64& rng, double sigma) {
    for (auto& j : p.joints)
        for (double& v : j) v += sigma * normal(rng);
    return p;
}

struct LabeledPoses {
    Eigen::MatrixXd data;  // 60 x n
    std::vector<int> labels;
};

/// Three pose families (arms down, arms overhead, arms out while
/// crouching), `per_cluster` poses each, with small continuous variation.
inline LabeledPoses three_cluster_poses(int per_cluster, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LabeledPoses out;
    out.data.resize(static_cast<Eigen::Index>(kPoseDim), 3 * per_cluster);
    Eigen::Index col = 0;
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            Pose p;
            if (c == 0) p = skeleton(uniform(rng, 0.05, 0.35), uniform(rng, 0.05, 0.35), 0.0);
            if (c == 1) p = skeleton(uniform(rng, 2.7, 3.0), uniform(rng, 2.7, 3.0), 0.0);
            if (c == 2) p = skeleton(uniform(rng, 1.4, 1.7), uniform(rng, 1.4, 1.7), uniform(rng, 0.7, 1.0));
            p = jitter(p, rng, 0.01);
            auto flat = flatten(p);
            out.data.col(col++) = Eigen::Map<const Eigen::VectorXd>(flat.data(), kPoseDim);
            out.labels.push_back(c);
        }
    }
    return out;
}

inline Series random_series(std::mt19937_64& rng, std::size_t length, std::size_t dim) {
    std::vector<double> d(length * dim);
    for (auto& v : d) v = normal(rng);
    return Series(dim, std::move(d));
}

/// Minimum warping-path cost by enumerating every monotone path.
inline double dtw_exhaustive(const std::vector<double>& a, const std::vector<double>& b) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += std::abs(a[i] - b[j]);
        if (i + 1 == a.size() && j + 1 == b.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < a.size()) walk(i + 1, j, acc);
        if (j + 1 < b.size()) walk(i, j + 1, acc);
        if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

/// Groups of 1-D-ish 60-D sequences: each group follows its own template
/// offset; within-group noise is small so inter-group DTW dwarfs intra-group.
struct GroupedCorpus {
    std::vector<NamedSeries> items;
    std::map<std::string, int> truth;
};

inline GroupedCorpus separated_groups(int groups, int per_group, std::uint64_t seed, std::size_t dim = 3,
                                      double separation = 50.0, double noise = 0.05) {
    std::mt19937_64 rng(seed);
    GroupedCorpus out;
    for (int g = 0; g < groups; ++g) {
        for (int i = 0; i < per_group; ++i) {
            const std::size_t len = static_cast<std::size_t>(uniform_int(rng, 6, 10));
            std::vector<double> d(len * dim);
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t k = 0; k < dim; ++k)
                    d[t * dim + k] = separation * g + std::sin(0.6 * static_cast<double>(t) + k) +
                                     noise * normal(rng);
            std::string id = "g" + std::to_string(g) + "_s" + (i < 10 ? "0" : "") + std::to_string(i);
            out.items.push_back({id, Series(dim, std::move(d))});
            out.truth[id] = g;
        }
    }
    return out;
}

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, long> nij;
    std::map<int, long> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++nij[{a[i], b[i]}];
        ++ai[a[i]];
        ++bj[b[i]];
    }
    auto c2 = [](long n) { return static_cast<double>(n) * static_cast<double>(n - 1) / 2.0; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto& [k, v] : nij) sum_ij += c2(v);
    for (auto& [k, v] : ai) sum_a += c2(v);
    for (auto& [k, v] : bj) sum_b += c2(v);
    const double expected = sum_a * sum_b / c2(static_cast<long>(a.size()));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

/// Mean silhouette coefficient of 2-D points under Euclidean distance.
inline double silhouette(const std::vector<std::array<double, 2>>& pts, const std::vector<int>& labels) {
    const std::size_t n = pts.size();
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            sum[labels[j]] += std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
            ++cnt[labels[j]];
        }
        const int own = labels[i];
        if (cnt[own] == 0) continue;
        const double a = sum[own] / cnt[own];
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

/// Average over a cell of a 2-D Gaussian KDE, by direct per-kernel sums of
/// normal CDF differences.
inline double kde_cell_mean(const std::vector<std::array<double, 2>>& pts, double hx, double hy,
                            double x0, double x1, double y0, double y1) {
    auto cdf = [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); };
    double s = 0.0;
    for (const auto& p : pts)
        s += (cdf((x1 - p[0]) / hx) - cdf((x0 - p[0]) / hx)) * (cdf((y1 - p[1]) / hy) - cdf((y0 - p[1]) / hy));
    return s / static_cast<double>(pts.size()) / ((x1 - x0) * (y1 - y0));
}

/// Corpus of 1-D signals carried in joint 0's x coordinate, every other
/// coordinate zero.
struct ScalarGesture {
    std::string referent;
    std::string participant;
    std::vector<double> values;
    int trial = 1;
};

inline Corpus scalar_corpus(const std::vector<ScalarGesture>& gestures, bool normalized = false) {
    DatasetDescriptor ds{"syn", "synthetic", default_joint_names(), 30.0};
    std::vector<GestureSequence> seqs;
    for (const auto& g : gestures) {
        GestureSequence s;
        s.dataset_id = ds.id;
        s.participant = g.participant;
        s.referent = g.referent;
        s.trial = g.trial;
        s.id = make_sequence_id(ds.id, g.participant, g.referent, g.trial);
        for (double v : g.values) {
            Pose p;
            p.joints[0][0] = v;
            s.frames.push_back(p);
        }
        seqs.push_back(std::move(s));
    }
    return Corpus({ds}, std::move(seqs), normalized);
}

/// Small raw elicitation corpus: three referents with distinct arm
/// trajectories, `participants` people, two trials each. Poses are shifted
/// and scaled per participant so ingest has real normalization work to do.
inline Corpus demo_corpus(int participants = 4, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    DatasetDescriptor ds{"demo", "demo elicitation", default_joint_names(), 30.0};
    std::vector<GestureSequence> seqs;
    const std::vector<std::string> referents{"wave", "raise", "crouch"};
    for (int p = 0; p < participants; ++p) {
        const double scale = uniform(rng, 0.8, 1.9);
        const Joint offset{uniform(rng, -1, 1), uniform(rng, 0, 1), uniform(rng, 1.5, 3)};
        for (const auto& r : referents)
            for (int trial = 1; trial <= 2; ++trial) {
                GestureSequence s;
                s.dataset_id = ds.id;
                s.participant = "p" + std::to_string(p + 1);
                s.referent = r;
                s.trial = trial;
                s.id = make_sequence_id(ds.id, s.participant, r, trial);
                const int len = uniform_int(rng, 6, 10);
                for (int t = 0; t < len; ++t) {
                    const double u = static_cast<double>(t) / (len - 1);
                    Pose pose;
                    if (r == "wave") pose = skeleton(0.2, 1.5 + 0.8 * std::sin(6.0 * u), 0.0);
                    if (r == "raise") pose = skeleton(0.2 + 2.6 * u, 0.2 + 2.6 * u, 0.0);
                    if (r == "crouch") pose = skeleton(0.3, 0.3, 0.9 * u);
                    pose = jitter(pose, rng, 0.01);
                    for (auto& j : pose.joints)
                        for (int a = 0; a < 3; ++a) j[a] = j[a] * scale + offset[a];
                    s.frames.push_back(pose);
                }
                seqs.push_back(std::move(s));
            }
    }
    return Corpus({ds}, std::move(seqs), false);
}

}  // namespace gmap::testing
