#include "gesturemap/barycenter.hpp"

#include "gesturemap/digest.hpp"
#include "gesturemap/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gmap {

namespace {

struct Alignment {
    std::vector<AlignmentPath> paths;
    std::vector<double> distances;
    double wgss = 0.0;
};

Alignment align_all(const Series& center, std::span<const NamedSeries> members,
                    const DtwOptions& options) {
    Alignment out;
    out.paths.reserve(members.size());
    out.distances.reserve(members.size());
    for (const auto& m : members) {
        auto r = dtw(center, m.series, options);
        out.wgss += r.distance * r.distance;
        out.distances.push_back(r.distance);
        out.paths.push_back(std::move(r.path));
    }
    return out;
}

Series mean_update(const Series& center, std::span<const NamedSeries> members,
                   const std::vector<AlignmentPath>& paths) {
    const std::size_t len = center.length(), dim = center.dim();
    std::vector<double> sums(len * dim, 0.0);
    std::vector<std::size_t> counts(len, 0);
    // Fixed accumulation order (member index, then path order) keeps the
    // update independent of how alignments were scheduled.
    for (std::size_t m = 0; m < members.size(); ++m) {
        for (auto [i, j] : paths[m].pairs) {
            auto f = members[m].series.frame(j);
            for (std::size_t k = 0; k < dim; ++k) sums[i * dim + k] += f[k];
            ++counts[i];
        }
    }
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t k = 0; k < dim; ++k) sums[i * dim + k] /= static_cast<double>(counts[i]);
    return Series(dim, std::move(sums));
}

}  // namespace

std::size_t medoid_index(std::span<const NamedSeries> members, const DtwOptions& options) {
    if (members.empty()) throw Error(ErrorCode::domain, "medoid of an empty member list");
    const auto dm = distance_matrix(members, options, 1);
    std::size_t best = 0;
    double best_sum = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        double s = 0.0;
        for (double d : dm.values[i]) s += d;
        if (i == 0 || s < best_sum || (s == best_sum && members[i].id < members[best].id)) {
            best = i;
            best_sum = s;
        }
    }
    return best;
}

double wgss(const Series& center, std::span<const NamedSeries> members, const DtwOptions& options) {
    double total = 0.0;
    for (const auto& m : members) {
        const double d = dtw_distance(center, m.series, options);
        total += d * d;
    }
    return total;
}

Barycenter dba(std::span<const NamedSeries> members, const DbaInit& init, const DbaConfig& config) {
    if (members.empty()) throw Error(ErrorCode::domain, "dba of an empty member list");
    const std::size_t dim = members.front().series.dim();
    for (const auto& m : members) {
        if (m.series.empty()) throw Error(ErrorCode::domain, "member '" + m.id + "' is empty");
        if (m.series.dim() != dim)
            throw Error(ErrorCode::domain, "member '" + m.id + "' has mismatched frame dimension");
    }
    if (init.sequence && (init.sequence->empty() || init.sequence->dim() != dim))
        throw Error(ErrorCode::domain, "explicit DBA init does not match member dimension");

    Barycenter out;
    out.frames = init.sequence ? *init.sequence
                               : members[medoid_index(members, config.dtw)].series;
    for (const auto& m : members) out.member_ids.push_back(m.id);

    Alignment current = align_all(out.frames, members, config.dtw);
    out.wgss_trace.push_back(current.wgss);

    for (int it = 1; it <= config.max_iter; ++it) {
        Series candidate = mean_update(out.frames, members, current.paths);
        Alignment next = align_all(candidate, members, config.dtw);
        out.iterations_run = it;
        if (next.wgss > current.wgss) {
            out.rejected_step = true;
            out.converged = true;
            break;
        }
        const double previous = current.wgss;
        out.frames = std::move(candidate);
        current = std::move(next);
        out.wgss_trace.push_back(current.wgss);
        if (current.wgss == 0.0 || (previous - current.wgss) / previous < config.tol) {
            out.converged = true;
            break;
        }
    }
    out.member_distances = std::move(current.distances);
    return out;
}

double variance_of_distances(std::span<const double> distances) {
    if (distances.empty()) throw Error(ErrorCode::domain, "variance of an empty distance list");
    double s = 0.0;
    for (double d : distances) s += d * d;
    return s / static_cast<double>(distances.size());
}

std::vector<NamedSeries> referent_members(const Corpus& corpus, std::string_view referent) {
    std::vector<NamedSeries> out;
    for (const auto* s : corpus.by_referent(referent)) out.push_back({s->id, s->to_series()});
    return out;
}

ConsensusReport variance_consensus(std::string_view referent, const Corpus& corpus,
                                   const DbaConfig& config) {
    auto members = referent_members(corpus, referent);
    if (members.empty())
        throw Error(ErrorCode::not_found, "unknown referent '" + std::string(referent) + "'");

    ConsensusReport report;
    report.referent = std::string(referent);
    report.barycenter = dba(members, DbaInit::medoid(), config);
    report.variance = variance_of_distances(report.barycenter.member_distances);
    for (std::size_t i = 0; i < members.size(); ++i)
        report.distances.emplace_back(members[i].id, report.barycenter.member_distances[i]);

    std::ostringstream key;
    key.precision(17);
    key << corpus.content_hash() << '|' << referent << '|' << config.max_iter << '|' << config.tol;
    for (double v : report.barycenter.frames.data()) key << ',' << v;
    report.barycenter_ref = "dba-" + sha256_hex(key.str()).substr(0, 16);
    return report;
}

DistanceHistogram distance_distribution(const ConsensusReport& report) {
    DistanceHistogram h;
    h.distances = report.distances;
    double max_d = 0.0;
    for (const auto& [id, d] : h.distances) max_d = std::max(max_d, d);
    if (max_d <= 0.0) {
        h.counts.assign(1, h.distances.size());
        return h;
    }
    constexpr std::size_t kBins = 10;
    h.bin_width = max_d / static_cast<double>(kBins);
    h.counts.assign(kBins, 0);
    for (const auto& [id, d] : h.distances) {
        auto bin = static_cast<std::size_t>(std::floor(d / h.bin_width));
        ++h.counts[std::min(bin, kBins - 1)];
    }
    return h;
}

DistanceHistogram distance_distribution(std::string_view referent, const Corpus& corpus,
                                        const DbaConfig& config) {
    return distance_distribution(variance_consensus(referent, corpus, config));
}

}  // namespace gmap
