#include "gesturemap/dtw.hpp"

#include "gesturemap/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace gmap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(const Series& a, const Series& b) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::domain, "dtw of an empty sequence");
    if (a.dim() != b.dim())
        throw Error(ErrorCode::domain, "dtw of sequences with different frame dimensions (" +
                                           std::to_string(a.dim()) + " vs " +
                                           std::to_string(b.dim()) + ")");
}

std::size_t band_radius(const Series& a, const Series& b, const DtwOptions& options) {
    const std::size_t n = a.length(), m = b.length();
    const std::size_t diff = n > m ? n - m : m - n;
    if (!options.band) return std::max(n, m);
    return std::max(*options.band, diff);
}

bool in_band(std::size_t i, std::size_t j, std::size_t radius) {
    return (i > j ? i - j : j - i) <= radius;
}

// Accumulated cost at (i, j) given the three predecessors; shared by the
// full-table and rolling-row variants so both produce identical values.
double accumulate(double cost, std::size_t i, std::size_t j, double diag, double up, double left) {
    if (i == 0 && j == 0) return cost;
    return cost + std::min({diag, up, left});
}

}  // namespace

double local_cost(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

DtwResult dtw(const Series& a, const Series& b, const DtwOptions& options) {
    check_inputs(a, b);
    const std::size_t n = a.length(), m = b.length();
    const std::size_t radius = band_radius(a, b, options);
    std::vector<double> acc(n * m, kInf);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (!in_band(i, j, radius)) continue;
            const double diag = (i > 0 && j > 0) ? at(i - 1, j - 1) : kInf;
            const double up = i > 0 ? at(i - 1, j) : kInf;
            const double left = j > 0 ? at(i, j - 1) : kInf;
            at(i, j) = accumulate(local_cost(a.frame(i), b.frame(j)), i, j, diag, up, left);
        }
    }

    DtwResult result;
    result.distance = at(n - 1, m - 1);
    auto& pairs = result.path.pairs;
    std::size_t i = n - 1, j = m - 1;
    pairs.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up <= left) {
                --i;
            } else {
                --j;
            }
        }
        pairs.emplace_back(i, j);
    }
    std::reverse(pairs.begin(), pairs.end());
    result.path.total_cost = result.distance;
    return result;
}

double dtw_distance(const Series& a, const Series& b, const DtwOptions& options) {
    check_inputs(a, b);
    const std::size_t n = a.length(), m = b.length();
    const std::size_t radius = band_radius(a, b, options);
    std::vector<double> prev(m, kInf), cur(m, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(cur.begin(), cur.end(), kInf);
        for (std::size_t j = 0; j < m; ++j) {
            if (!in_band(i, j, radius)) continue;
            const double diag = (i > 0 && j > 0) ? prev[j - 1] : kInf;
            const double up = i > 0 ? prev[j] : kInf;
            const double left = j > 0 ? cur[j - 1] : kInf;
            cur[j] = accumulate(local_cost(a.frame(i), b.frame(j)), i, j, diag, up, left);
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

bool is_valid_path(const AlignmentPath& path, std::size_t la, std::size_t lb) {
    const auto& p = path.pairs;
    if (p.empty() || la == 0 || lb == 0) return false;
    if (p.front() != std::pair<std::size_t, std::size_t>{0, 0}) return false;
    if (p.back() != std::pair<std::size_t, std::size_t>{la - 1, lb - 1}) return false;
    for (std::size_t k = 1; k < p.size(); ++k) {
        const std::size_t di = p[k].first - p[k - 1].first;
        const std::size_t dj = p[k].second - p[k - 1].second;
        if (p[k].first < p[k - 1].first || p[k].second < p[k - 1].second) return false;
        if (di > 1 || dj > 1 || (di == 0 && dj == 0)) return false;
    }
    return true;
}

DistanceMatrix distance_matrix(std::span<const NamedSeries> items, const DtwOptions& options,
                               unsigned threads) {
    if (items.empty()) throw Error(ErrorCode::domain, "distance matrix of an empty set");
    const std::size_t n = items.size();
    DistanceMatrix out;
    out.ids.reserve(n);
    for (const auto& it : items) out.ids.push_back(it.id);
    out.values.assign(n, std::vector<double>(n, 0.0));

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, pairs.size())));

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t p = next++; p < pairs.size() && !failed; p = next++) {
            auto [i, j] = pairs[p];
            try {
                const double d = dtw_distance(items[i].series, items[j].series, options);
                out.values[i][j] = d;
                out.values[j][i] = d;
            } catch (const Error& e) {
                std::lock_guard lock(failure_mutex);
                if (!failed.exchange(true))
                    failure = "pair ('" + items[i].id + "', '" + items[j].id + "'): " + e.what();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failed) throw Error(ErrorCode::domain, failure);
    return out;
}

NeighborList nearest_neighbors(const NamedSeries& target, std::span<const NamedSeries> pool,
                               std::size_t k, const DtwOptions& options) {
    if (k == 0) throw Error(ErrorCode::validation, "nearest_neighbors requires k >= 1");
    NeighborList out;
    for (const auto& p : pool) {
        if (p.id == target.id) continue;
        out.neighbors.push_back({p.id, dtw_distance(target.series, p.series, options)});
    }
    std::sort(out.neighbors.begin(), out.neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    if (out.neighbors.size() < k) {
        out.truncated = true;
    } else {
        out.neighbors.resize(k);
    }
    return out;
}

}  // namespace gmap
