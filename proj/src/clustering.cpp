#include "gesturemap/clustering.hpp"

#include "gesturemap/error.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace gmap {

std::string_view to_string(ClusterStatus status) {
    switch (status) {
        case ClusterStatus::initialized: return "initialized";
        case ClusterStatus::converged: return "converged";
        case ClusterStatus::max_iter_reached: return "max_iter_reached";
    }
    return "initialized";
}

ClusterStatus parse_cluster_status(std::string_view text) {
    if (text == "initialized") return ClusterStatus::initialized;
    if (text == "converged") return ClusterStatus::converged;
    if (text == "max_iter_reached") return ClusterStatus::max_iter_reached;
    throw Error(ErrorCode::parse, "unknown cluster status '" + std::string(text) + "'");
}

std::vector<std::string> ClusterModel::members_of(std::size_t cluster) const {
    std::vector<std::string> out;
    for (const auto& [id, c] : assignments)
        if (c == cluster) out.push_back(id);
    return out;
}

namespace {

using Index = std::map<std::string, const Series*, std::less<>>;

Index index_scope(std::span<const NamedSeries> items) {
    Index idx;
    for (const auto& it : items)
        if (!idx.emplace(it.id, &it.series).second)
            throw Error(ErrorCode::validation, "duplicate id '" + it.id + "' in cluster scope");
    return idx;
}

Index resolve(const ClusterModel& model, std::span<const NamedSeries> items) {
    auto all = index_scope(items);
    Index idx;
    for (const auto& id : model.scope) {
        auto it = all.find(id);
        if (it == all.end())
            throw Error(ErrorCode::not_found, "scope member '" + id + "' not supplied");
        idx.emplace(id, it->second);
    }
    return idx;
}

std::size_t nearest_centroid(const Series& s, const std::vector<Series>& centroids,
                             const DtwOptions& options) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = dtw_distance(s, centroids[c], options);
        if (d < best_d) {
            best = c;
            best_d = d;
        }
    }
    return best;
}

bool assign_step(ClusterModel& m, const Index& idx, const DtwOptions& options) {
    bool changed = false;
    for (const auto& id : m.scope) {
        if (m.pinned.contains(id)) continue;
        const std::size_t c = nearest_centroid(*idx.find(id)->second, m.centroids, options);
        auto& slot = m.assignments[id];
        if (slot != c) {
            slot = c;
            changed = true;
        }
    }
    return changed;
}

std::vector<std::size_t> cluster_sizes(const ClusterModel& m) {
    std::vector<std::size_t> sizes(m.k, 0);
    for (const auto& [id, c] : m.assignments) ++sizes[c];
    return sizes;
}

bool reseed_empty(ClusterModel& m, const Index& idx, int iteration, const DtwOptions& options) {
    bool changed = false;
    for (std::size_t c = 0; c < m.k; ++c) {
        auto sizes = cluster_sizes(m);
        if (sizes[c] != 0) continue;
        const std::string* pick = nullptr;
        double pick_d = -1.0;
        for (const auto& id : m.scope) {  // scope is sorted: ties keep the smallest id
            if (m.pinned.contains(id)) continue;
            const std::size_t home = m.assignments.at(id);
            if (sizes[home] < 2) continue;
            const double d = dtw_distance(*idx.find(id)->second, m.centroids[home], options);
            if (d > pick_d) {
                pick = &id;
                pick_d = d;
            }
        }
        if (!pick) continue;
        m.assignments[*pick] = c;
        m.centroids[c] = *idx.find(*pick)->second;
        m.reseeds.push_back({iteration, c, *pick});
        changed = true;
    }
    return changed;
}

std::vector<NamedSeries> gather(const ClusterModel& m, const Index& idx, std::size_t cluster) {
    std::vector<NamedSeries> out;
    for (const auto& id : m.scope)
        if (m.assignments.at(id) == cluster) out.push_back({id, *idx.find(id)->second});
    return out;
}

void validate_scope(std::span<const NamedSeries> scope) {
    if (scope.empty()) throw Error(ErrorCode::validation, "cluster scope is empty");
    const std::size_t dim = scope.front().series.dim();
    for (const auto& s : scope) {
        if (s.series.empty())
            throw Error(ErrorCode::validation, "scope member '" + s.id + "' is empty");
        if (s.series.dim() != dim)
            throw Error(ErrorCode::validation, "scope member '" + s.id + "' has mismatched dimension");
    }
}

}  // namespace

double total_inertia(const ClusterModel& model, std::span<const NamedSeries> scope,
                     const DtwOptions& options) {
    auto idx = resolve(model, scope);
    double total = 0.0;
    for (const auto& id : model.scope) {
        const double d =
            dtw_distance(*idx.find(id)->second, model.centroids[model.assignments.at(id)], options);
        total += d * d;
    }
    return total;
}

ClusterModel init_clusters(std::span<const NamedSeries> scope, const SeedSpec& seeds,
                           const ClusterConfig& config) {
    validate_scope(scope);
    auto idx = index_scope(scope);

    ClusterModel m;
    for (const auto& [id, s] : idx) m.scope.push_back(id);

    std::vector<std::string> seed_ids;
    if (seeds.is_explicit()) {
        std::set<std::string> distinct;
        for (const auto& id : seeds.explicit_ids) {
            if (!idx.contains(id))
                throw Error(ErrorCode::validation, "seed '" + id + "' is not in the cluster scope");
            if (!distinct.insert(id).second)
                throw Error(ErrorCode::validation, "duplicate seed '" + id + "'");
        }
        seed_ids = seeds.explicit_ids;
    } else {
        if (seeds.k == 0) throw Error(ErrorCode::validation, "k must be at least 1");
        if (seeds.k > m.scope.size())
            throw Error(ErrorCode::validation, "k = " + std::to_string(seeds.k) +
                                                   " exceeds scope size " +
                                                   std::to_string(m.scope.size()));
        // mt19937_64 output is fixed by the standard, unlike the distributions.
        std::mt19937_64 rng(seeds.rng_seed);
        seed_ids.push_back(m.scope[rng() % m.scope.size()]);
        std::vector<double> min_d(m.scope.size(), std::numeric_limits<double>::infinity());
        while (seed_ids.size() < seeds.k) {
            const Series& last = *idx.find(seed_ids.back())->second;
            std::size_t best = 0;
            double best_d = -1.0;
            for (std::size_t i = 0; i < m.scope.size(); ++i) {
                min_d[i] = std::min(min_d[i], dtw_distance(*idx.find(m.scope[i])->second, last,
                                                           config.dba.dtw));
                if (std::find(seed_ids.begin(), seed_ids.end(), m.scope[i]) != seed_ids.end())
                    continue;
                if (min_d[i] > best_d) {
                    best = i;
                    best_d = min_d[i];
                }
            }
            seed_ids.push_back(m.scope[best]);
        }
    }
    if (seed_ids.size() > m.scope.size())
        throw Error(ErrorCode::validation, "k exceeds scope size");

    m.k = seed_ids.size();
    for (const auto& id : seed_ids) m.centroids.push_back(*idx.find(id)->second);
    for (const auto& id : m.scope)
        m.assignments[id] = nearest_centroid(*idx.find(id)->second, m.centroids, config.dba.dtw);
    m.inertia_trace = {total_inertia(m, scope, config.dba.dtw)};
    m.status = ClusterStatus::initialized;
    return m;
}

ClusterModel run(const ClusterModel& model, std::span<const NamedSeries> scope, int max_iter,
                 const ClusterConfig& config) {
    if (model.k == 0 || model.centroids.size() != model.k)
        throw Error(ErrorCode::validation, "cluster model is not initialized");
    if (max_iter < 1) throw Error(ErrorCode::validation, "max_iter must be at least 1");
    auto idx = resolve(model, scope);
    const auto& dtw_opts = config.dba.dtw;

    ClusterModel m = model;
    m.inertia_trace = {total_inertia(m, scope, dtw_opts)};
    m.iterations_run = 0;
    m.status = ClusterStatus::max_iter_reached;

    for (int it = 1; it <= max_iter; ++it) {
        m.iterations_run = it;
        bool changed = assign_step(m, idx, dtw_opts);
        changed = reseed_empty(m, idx, it, dtw_opts) || changed;
        if (!changed && m.centroids_fresh) {
            m.inertia_trace.push_back(total_inertia(m, scope, dtw_opts));
            m.status = ClusterStatus::converged;
            break;
        }

        bool moved = false;
        for (std::size_t c = 0; c < m.k; ++c) {
            auto members = gather(m, idx, c);
            if (members.empty()) continue;
            auto b = dba(members, DbaInit::from(m.centroids[c]), config.dba);
            if (!(b.frames == m.centroids[c])) {
                m.centroids[c] = std::move(b.frames);
                moved = true;
            }
        }
        m.centroids_fresh = true;
        m.inertia_trace.push_back(total_inertia(m, scope, dtw_opts));
        if (!changed && !moved) {
            m.status = ClusterStatus::converged;
            break;
        }
    }
    return m;
}

ClusterModel reassign(const ClusterModel& model, const std::string& sequence_id, std::size_t target) {
    auto it = model.assignments.find(sequence_id);
    if (it == model.assignments.end())
        throw Error(ErrorCode::validation, "sequence '" + sequence_id + "' is not in the cluster scope");
    if (target >= model.k)
        throw Error(ErrorCode::validation, "target cluster " + std::to_string(target) +
                                               " out of range [0, " + std::to_string(model.k) + ")");
    ClusterModel m = model;
    if (it->second != target) {
        m.assignments[sequence_id] = target;
        m.centroids_fresh = false;
    }
    m.pinned.insert(sequence_id);
    return m;
}

ClusterModel rerun_from_assignments(const ClusterModel& model, std::span<const NamedSeries> scope,
                                    int max_iter, const ClusterConfig& config) {
    if (model.assignments.size() != model.scope.size())
        throw Error(ErrorCode::validation, "cluster model has an incomplete assignment table");
    auto idx = resolve(model, scope);
    ClusterModel m = model;
    for (std::size_t c = 0; c < m.k; ++c) {
        auto members = gather(m, idx, c);
        if (members.empty()) continue;
        m.centroids[c] = dba(members, DbaInit::medoid(), config.dba).frames;
    }
    m.centroids_fresh = true;
    return run(m, scope, max_iter, config);
}

}  // namespace gmap
