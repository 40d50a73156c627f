#pragma once

#include "gesturemap/dataset.hpp"
#include "gesturemap/dtw.hpp"
#include "gesturemap/series.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gmap {

/// Initial average for DBA: the medoid of the members, or a given series.
struct DbaInit {
    std::optional<Series> sequence;

    static DbaInit medoid() { return {}; }
    static DbaInit from(Series s) { return {std::move(s)}; }
};

struct DbaConfig {
    int max_iter = 10;
    /// Stop once the relative WGSS improvement of an iteration falls below this.
    double tol = 1e-6;
    DtwOptions dtw;
};

struct Barycenter {
    Series frames;
    std::vector<std::string> member_ids;
    /// DTW distance of each member (same order as member_ids) to `frames`.
    std::vector<double> member_distances;
    /// WGSS of the initial average followed by one entry per accepted update.
    std::vector<double> wgss_trace;
    int iterations_run = 0;
    bool converged = false;
    /// An update step was discarded because it would have raised WGSS.
    bool rejected_step = false;

    double wgss() const { return wgss_trace.empty() ? 0.0 : wgss_trace.back(); }
};

/// Member minimizing the sum of DTW distances to all members; ties go to
/// the lexicographically smallest id.
std::size_t medoid_index(std::span<const NamedSeries> members, const DtwOptions& options = {});

/// Within-group sum of squared DTW distances of `members` to `center`.
double wgss(const Series& center, std::span<const NamedSeries> members,
            const DtwOptions& options = {});

/// DTW Barycenter Averaging. Each iteration aligns the current average to
/// every member and replaces each average frame with the arithmetic mean of
/// the member frames aligned to it. The average keeps the initial length.
/// An update that would raise WGSS is discarded and the run stops, so the
/// recorded trace never increases.
Barycenter dba(std::span<const NamedSeries> members, const DbaInit& init = DbaInit::medoid(),
               const DbaConfig& config = {});

/// Mean of squared distances.
double variance_of_distances(std::span<const double> distances);

struct ConsensusReport {
    std::string referent;
    double variance = 0.0;
    std::vector<std::pair<std::string, double>> distances;
    std::string barycenter_ref;
    Barycenter barycenter;
};

/// Named 60-D series for every gesture of `referent`, in corpus order.
std::vector<NamedSeries> referent_members(const Corpus& corpus, std::string_view referent);

/// DBA over all gestures of a referent, then the mean squared DTW distance
/// of the gestures to that average.
ConsensusReport variance_consensus(std::string_view referent, const Corpus& corpus,
                                   const DbaConfig& config = {});

struct DistanceHistogram {
    std::vector<std::pair<std::string, double>> distances;
    double bin_width = 0.0;
    std::vector<std::size_t> counts;
};

/// Ten bins of width max/10 starting at 0 (a single bin when every distance
/// is zero); the maximum falls in the last bin.
DistanceHistogram distance_distribution(const ConsensusReport& report);
DistanceHistogram distance_distribution(std::string_view referent, const Corpus& corpus,
                                        const DbaConfig& config = {});

}  // namespace gmap
