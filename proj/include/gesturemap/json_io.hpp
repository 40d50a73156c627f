#pragma once

// JSON wire formats shared by the service, the CLI and analysis export.

#include "gesturemap/barycenter.hpp"
#include "gesturemap/clustering.hpp"
#include "gesturemap/dataset.hpp"
#include "gesturemap/dtw.hpp"
#include "gesturemap/gesture_map.hpp"
#include "gesturemap/vae.hpp"

#include <json.hpp>

namespace gmap {

using Json = nlohmann::json;

/// Parse text, mapping syntax errors to ErrorCode::parse.
Json parse_json(std::string_view text);

Json to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

Json to_json(const Series& s);
Series series_from_json(const Json& j);

Json to_json(const GestureSequence& s, bool with_frames = true);

Json to_json(const AlignmentPath& p);
Json to_json(const DistanceMatrix& m);
DistanceMatrix distance_matrix_from_json(const Json& j);
Json to_json(const NeighborList& n);

Json to_json(const Barycenter& b);
Barycenter barycenter_from_json(const Json& j);
Json to_json(const ConsensusReport& r);
ConsensusReport consensus_from_json(const Json& j);
Json to_json(const DistanceHistogram& h);

Json to_json(const ClusterModel& m);
ClusterModel cluster_model_from_json(const Json& j);

Json to_json(const VaeConfig& c);
/// Fields missing from `j` keep the values of `base`.
VaeConfig vae_config_from_json(const Json& j, VaeConfig base = {});
Json model_summary(const VaeModel& model);

Json to_json(const Viewport& v);
Json to_json(const LandmarkGrid& g);
Json to_json(const DensityGrid& g);
Json to_json(const ScatterRecord& r);
Json to_json(const LatentPath& p);
Json to_json(const TimedPath& p);

}  // namespace gmap
