#include "gesturemap/json_io.hpp"

#include "gesturemap/error.hpp"

namespace gmap {

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("malformed JSON: ") + e.what());
    }
}

namespace {

template <class F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::schema, std::string(what) + ": " + e.what());
    }
}

}  // namespace

Json to_json(const Pose& pose) {
    Json out = Json::array();
    for (const auto& j : pose.joints) out.push_back({j[0], j[1], j[2]});
    return out;
}

Pose pose_from_json(const Json& j) {
    return guarded("pose", [&] {
        if (!j.is_array() || j.size() != kJointCount)
            throw Error(ErrorCode::validation, "pose must be an array of 20 [x,y,z] joints");
        Pose p;
        for (std::size_t i = 0; i < kJointCount; ++i) {
            if (!j[i].is_array() || j[i].size() != 3)
                throw Error(ErrorCode::validation, "joint " + std::to_string(i) + " must be [x,y,z]");
            for (std::size_t a = 0; a < 3; ++a) p.joints[i][a] = j[i][a].get<double>();
        }
        return p;
    });
}

Json to_json(const Series& s) { return {{"dim", s.dim()}, {"frames", s.frames()}}; }

Series series_from_json(const Json& j) {
    return guarded("series", [&] {
        auto frames = j.at("frames").get<std::vector<std::vector<double>>>();
        Series s = Series::from_frames(frames);
        if (!frames.empty() && s.dim() != j.at("dim").get<std::size_t>())
            throw Error(ErrorCode::schema, "series dim does not match frames");
        return s;
    });
}

Json to_json(const GestureSequence& s, bool with_frames) {
    Json out = {{"id", s.id},         {"dataset_id", s.dataset_id}, {"participant", s.participant},
                {"referent", s.referent}, {"trial", s.trial},       {"length", s.frames.size()},
                {"dropped_frames", s.dropped_frames}};
    if (with_frames) {
        out["frames"] = Json::array();
        for (const auto& p : s.frames) out["frames"].push_back(to_json(p));
    }
    return out;
}

Json to_json(const AlignmentPath& p) {
    Json pairs = Json::array();
    for (auto [i, j] : p.pairs) pairs.push_back({i, j});
    return {{"pairs", pairs}, {"total_cost", p.total_cost}};
}

Json to_json(const DistanceMatrix& m) { return {{"ids", m.ids}, {"rows", m.values}}; }

DistanceMatrix distance_matrix_from_json(const Json& j) {
    return guarded("distance matrix", [&] {
        return DistanceMatrix{j.at("ids").get<std::vector<std::string>>(),
                              j.at("rows").get<std::vector<std::vector<double>>>()};
    });
}

Json to_json(const NeighborList& n) {
    Json list = Json::array();
    for (const auto& nb : n.neighbors) list.push_back({{"id", nb.id}, {"distance", nb.distance}});
    return {{"neighbors", list}, {"truncated", n.truncated}};
}

Json to_json(const Barycenter& b) {
    return {{"frames", to_json(b.frames)},
            {"member_ids", b.member_ids},
            {"member_distances", b.member_distances},
            {"wgss_trace", b.wgss_trace},
            {"iterations_run", b.iterations_run},
            {"converged", b.converged},
            {"rejected_step", b.rejected_step}};
}

Barycenter barycenter_from_json(const Json& j) {
    return guarded("barycenter", [&] {
        Barycenter b;
        b.frames = series_from_json(j.at("frames"));
        b.member_ids = j.at("member_ids").get<std::vector<std::string>>();
        b.member_distances = j.at("member_distances").get<std::vector<double>>();
        b.wgss_trace = j.at("wgss_trace").get<std::vector<double>>();
        b.iterations_run = j.at("iterations_run");
        b.converged = j.at("converged");
        b.rejected_step = j.value("rejected_step", false);
        return b;
    });
}

Json to_json(const ConsensusReport& r) {
    Json distances = Json::array();
    for (const auto& [id, d] : r.distances) distances.push_back({{"id", id}, {"distance", d}});
    return {{"referent", r.referent},
            {"variance", r.variance},
            {"distances", distances},
            {"barycenter_ref", r.barycenter_ref},
            {"barycenter", to_json(r.barycenter)}};
}

ConsensusReport consensus_from_json(const Json& j) {
    return guarded("consensus report", [&] {
        ConsensusReport r;
        r.referent = j.at("referent");
        r.variance = j.at("variance");
        for (const auto& d : j.at("distances")) r.distances.emplace_back(d.at("id"), d.at("distance"));
        r.barycenter_ref = j.at("barycenter_ref");
        r.barycenter = barycenter_from_json(j.at("barycenter"));
        return r;
    });
}

Json to_json(const DistanceHistogram& h) {
    Json distances = Json::array();
    for (const auto& [id, d] : h.distances) distances.push_back({{"id", id}, {"distance", d}});
    return {{"distances", distances}, {"bin_width", h.bin_width}, {"counts", h.counts}};
}

Json to_json(const ClusterModel& m) {
    Json centroids = Json::array();
    for (const auto& c : m.centroids) centroids.push_back(to_json(c));
    Json reseeds = Json::array();
    for (const auto& r : m.reseeds)
        reseeds.push_back({{"iteration", r.iteration}, {"cluster", r.cluster}, {"sequence_id", r.sequence_id}});
    return {{"k", m.k},
            {"scope", m.scope},
            {"centroids", centroids},
            {"assignments", m.assignments},
            {"pinned", m.pinned},
            {"inertia_trace", m.inertia_trace},
            {"status", to_string(m.status)},
            {"iterations_run", m.iterations_run},
            {"reseeds", reseeds},
            {"centroids_fresh", m.centroids_fresh}};
}

ClusterModel cluster_model_from_json(const Json& j) {
    return guarded("cluster model", [&] {
        ClusterModel m;
        m.k = j.at("k");
        m.scope = j.at("scope").get<std::vector<std::string>>();
        for (const auto& c : j.at("centroids")) m.centroids.push_back(series_from_json(c));
        m.assignments = j.at("assignments").get<std::map<std::string, std::size_t>>();
        m.pinned = j.at("pinned").get<std::set<std::string>>();
        m.inertia_trace = j.at("inertia_trace").get<std::vector<double>>();
        m.status = parse_cluster_status(j.at("status").get<std::string>());
        m.iterations_run = j.value("iterations_run", 0);
        for (const auto& r : j.value("reseeds", Json::array()))
            m.reseeds.push_back({r.at("iteration"), r.at("cluster"), r.at("sequence_id")});
        m.centroids_fresh = j.value("centroids_fresh", false);
        if (m.centroids.size() != m.k) throw Error(ErrorCode::schema, "cluster model: centroid count != k");
        for (const auto& [id, c] : m.assignments)
            if (c >= m.k) throw Error(ErrorCode::schema, "cluster model: assignment out of range for '" + id + "'");
        for (const auto& id : m.pinned)
            if (!m.assignments.contains(id))
                throw Error(ErrorCode::schema, "cluster model: pinned id '" + id + "' has no assignment");
        return m;
    });
}

Json to_json(const VaeConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden_layers", c.hidden_layers},
            {"hidden_units", c.hidden_units},
            {"latent_dim", c.latent_dim},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"kl_warmup_fraction", c.kl_warmup_fraction},
            {"batch_size", c.batch_size},
            {"rng_seed", c.rng_seed}};
}

VaeConfig vae_config_from_json(const Json& j, VaeConfig c) {
    return guarded("VAE config", [&] {
        if (j.is_null()) return c;
        if (!j.is_object()) throw Error(ErrorCode::validation, "VAE config must be an object");
        c.input_dim = j.value("input_dim", c.input_dim);
        c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
        c.hidden_units = j.value("hidden_units", c.hidden_units);
        c.latent_dim = j.value("latent_dim", c.latent_dim);
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.kl_warmup_fraction = j.value("kl_warmup_fraction", c.kl_warmup_fraction);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.rng_seed = j.value("rng_seed", c.rng_seed);
        c.validate();
        return c;
    });
}

Json model_summary(const VaeModel& model) {
    Json trace = Json::array();
    for (const auto& e : model.training_trace())
        trace.push_back({{"reconstruction", e.reconstruction}, {"kl", e.kl}, {"beta", e.beta}});
    return {{"config", to_json(model.config())},
            {"parameter_count", model.parameter_count()},
            {"training_trace", trace}};
}

Json to_json(const Viewport& v) {
    return {{"x_min", v.x_min}, {"x_max", v.x_max}, {"y_min", v.y_min}, {"y_max", v.y_max}, {"m", v.grid_m}};
}

Json to_json(const LandmarkGrid& g) {
    Json points = Json::array(), poses = Json::array();
    for (const auto& p : g.points) points.push_back({p[0], p[1]});
    for (const auto& p : g.poses) poses.push_back(to_json(p));
    return {{"viewport", to_json(g.viewport)}, {"m", g.m}, {"points", points}, {"poses", poses}};
}

Json to_json(const DensityGrid& g) {
    return {{"viewport", to_json(g.viewport)},
            {"r", g.resolution},
            {"bandwidth", {g.bandwidth_x, g.bandwidth_y}},
            {"bandwidth_fallback", g.bandwidth_fallback},
            {"cell_area", g.cell_area()},
            {"values", g.values}};
}

Json to_json(const ScatterRecord& r) {
    return {{"point", {r.point[0], r.point[1]}},
            {"sequence_id", r.sequence_id},
            {"frame", r.frame},
            {"referent", r.referent},
            {"participant", r.participant},
            {"trial", r.trial}};
}

Json to_json(const LatentPath& p) {
    Json points = Json::array();
    for (const auto& z : p.points) points.push_back({z[0], z[1]});
    return {{"sequence_id", p.sequence_id}, {"points", points}};
}

Json to_json(const TimedPath& p) {
    Json out = to_json(p.path);
    out["frame_index"] = p.frame_index;
    out["seconds"] = p.seconds;
    return out;
}

}  // namespace gmap
