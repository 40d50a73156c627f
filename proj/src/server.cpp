#include "gesturemap/server.hpp"

#include "gesturemap/error.hpp"

#include <httplib.h>

#include <charconv>
#include <sstream>

namespace gmap {

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::parse:
        case ErrorCode::schema:
        case ErrorCode::domain:
        case ErrorCode::degenerate:
        case ErrorCode::validation: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::internal: return 500;
    }
    return 500;
}

namespace {

using Request = httplib::Request;
using Response = httplib::Response;

void send_json(Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_raw(Response& res, const std::string& body, int status = 200) {
    res.status = status;
    res.set_content(body, "application/json");
}

void send_error(Response& res, ErrorCode code, const std::string& message) {
    send_json(res, {{"code", to_string(code)}, {"message", message}}, http_status(code));
}

Json body_json(const Request& req) {
    if (req.body.empty()) return Json::object();
    return parse_json(req.body);
}

std::optional<std::string> param(const Request& req, const std::string& name) {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
}

double number_param(const Request& req, const std::string& name) {
    const std::string text = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::validation, "query parameter '" + name + "' is not a number: '" + text + "'");
    }
}

int int_param(const Request& req, const std::string& name, int fallback) {
    if (!req.has_param(name)) return fallback;
    const std::string text = req.get_param_value(name);
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error(ErrorCode::validation, "query parameter '" + name + "' is not an integer: '" + text + "'");
    return v;
}

bool flag_param(const Request& req, const std::string& name) {
    auto v = param(req, name);
    return v && (*v == "1" || *v == "true" || v->empty());
}

std::vector<std::string> list_param(const Request& req, const std::string& name) {
    std::vector<std::string> out;
    auto v = param(req, name);
    if (!v || v->empty()) return out;
    std::stringstream ss(*v);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

DtwOptions dtw_options(const Request& req) {
    DtwOptions o;
    if (req.has_param("band")) {
        const int b = int_param(req, "band", 0);
        if (b < 0) throw Error(ErrorCode::validation, "band must be >= 0");
        o.band = static_cast<std::size_t>(b);
    }
    return o;
}

LatentPoint latent_point(const Json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw Error(ErrorCode::validation, "latent points are [x, y] number pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

Json point_json(const LatentPoint& p) { return Json::array({p[0], p[1]}); }

// Optional viewport from x0/x1/y0/y1/m; all four bounds or none.
Viewport viewport_from(const Request& req, const std::function<Viewport(int)>& fallback) {
    const int m = int_param(req, "m", 11);
    const int given = req.has_param("x0") + req.has_param("x1") + req.has_param("y0") + req.has_param("y1");
    if (given != 0 && given != 4) throw Error(ErrorCode::validation, "viewport needs all of x0, x1, y0, y1");
    Viewport v = given == 0 ? fallback(m)
                            : Viewport{number_param(req, "x0"), number_param(req, "x1"), number_param(req, "y0"),
                                       number_param(req, "y1"), m};
    v.grid_m = m;
    v.validate();
    return v;
}

ScatterFilter filter_from(const Request& req) {
    ScatterFilter f;
    f.referent = param(req, "referent");
    f.participant = param(req, "participant");
    if (req.has_param("trial")) f.trial = int_param(req, "trial", 1);
    return f;
}

std::vector<std::string> scope_from(const Request& req, const Corpus& corpus) {
    auto ids = list_param(req, "ids");
    if (!ids.empty()) return ids;
    for (const auto& s : corpus.sequences()) ids.push_back(s.id);
    return ids;
}

std::vector<LatentPoint> all_points(const EmbeddingTable& table) {
    std::vector<LatentPoint> pts;
    for (const auto& [id, path] : table) pts.insert(pts.end(), path.points.begin(), path.points.end());
    return pts;
}

Json job_accepted(const Job& job) { return {{"job", to_json(job)}}; }

}  // namespace

ApiServer::ApiServer(AnalysisSession& session) : session_(session), http_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = http_->bind_to_any_port(host);
        if (p < 0) throw Error(ErrorCode::internal, "cannot bind " + host);
        return p;
    }
    if (!http_->bind_to_port(host, port))
        throw Error(ErrorCode::internal, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

bool ApiServer::serve() { return http_->listen_after_bind(); }

void ApiServer::stop() {
    if (http_ && http_->is_running()) http_->stop();
}

void ApiServer::wait_until_ready() const { http_->wait_until_ready(); }

void ApiServer::install_routes() {
    auto& s = session_;
    auto& h = *http_;

    h.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const Json::exception& e) {
            send_error(res, ErrorCode::validation, e.what());
        } catch (const std::exception& e) {
            send_error(res, ErrorCode::internal, e.what());
        } catch (...) {
            send_error(res, ErrorCode::internal, "unknown failure");
        }
    });
    h.set_error_handler([](const Request& req, Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) send_error(res, ErrorCode::not_found, "no route for " + req.method + " " + req.path);
    });

    h.Get("/health", [&](const Request&, Response& res) {
        auto c = s.corpus();
        send_json(res, {{"status", "ok"},
                        {"version", kToolVersion},
                        {"corpus_hash", c->content_hash()},
                        {"sequences", c->sequences().size()},
                        {"model", s.has_model()}});
    });

    // Corpus browsing and upload.
    auto datasets_json = [&] {
        auto c = s.corpus();
        Json out = Json::array();
        for (const auto& d : c->datasets()) {
            std::size_t n = 0, dropped = 0;
            for (const auto& q : c->sequences())
                if (q.dataset_id == d.id) ++n, dropped += q.dropped_frames;
            out.push_back({{"id", d.id},
                           {"name", d.name},
                           {"frame_rate", d.frame_rate},
                           {"joints", d.joints},
                           {"sequences", n},
                           {"dropped_frames", dropped}});
        }
        return out;
    };
    h.Get("/datasets", [=](const Request&, Response& res) { send_json(res, datasets_json()); });
    h.Post("/datasets", [&, datasets_json](const Request& req, Response& res) {
        const auto format = parse_format(param(req, "format").value_or("canonical-json"));
        s.ingest(parse_dataset_string(req.body, format), flag_param(req, "replace"));
        send_json(res, datasets_json(), 201);
    });
    h.Get("/referents", [&](const Request&, Response& res) {
        auto c = s.corpus();
        auto labels = s.referent_labels();
        Json out = Json::array();
        for (const auto& r : c->referents()) {
            auto it = labels.find(r);
            out.push_back({{"name", r},
                           {"label", it == labels.end() ? Json(nullptr) : Json(it->second)},
                           {"gestures", c->by_referent(r).size()}});
        }
        send_json(res, out);
    });
    h.Get(R"(/referents/(.+)/gestures)", [&](const Request& req, Response& res) {
        auto c = s.corpus();
        auto members = c->by_referent(req.matches[1].str());
        if (members.empty()) throw Error(ErrorCode::not_found, "unknown referent '" + req.matches[1].str() + "'");
        Json out = Json::array();
        for (const auto* g : members) out.push_back(to_json(*g, false));
        send_json(res, out);
    });
    h.Put(R"(/referents/(.+)/label)", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        s.set_referent_label(req.matches[1].str(), body.at("label").get<std::string>());
        send_json(res, {{"referent", req.matches[1].str()}, {"label", body.at("label")}});
    });
    h.Get(R"(/gestures/(.+))", [&](const Request& req, Response& res) {
        auto c = s.corpus();
        send_json(res, to_json(c->at(req.matches[1].str())));
    });

    // Embedding.
    h.Post("/embedding/train", [&](const Request& req, Response& res) {
        const VaeConfig config = vae_config_from_json(body_json(req));
        send_json(res, job_accepted(s.start_training(config, !flag_param(req, "nocache"))), 202);
    });
    h.Get("/embedding/model", [&](const Request& req, Response& res) {
        auto m = s.model();
        if (flag_param(req, "full"))
            send_raw(res, serialize_model(*m));
        else
            send_json(res, model_summary(*m));
    });
    h.Post("/embedding/model", [&](const Request& req, Response& res) {
        s.set_model(deserialize_model(req.body));
        send_json(res, model_summary(*s.model()), 201);
    });
    h.Post("/embedding/encode", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        auto m = s.model();
        if (body.contains("pose")) {
            send_json(res, {{"z", point_json(m->encode(pose_from_json(body.at("pose"))))}});
        } else if (body.contains("poses")) {
            Json points = Json::array();
            for (const auto& p : body.at("poses")) points.push_back(point_json(m->encode(pose_from_json(p))));
            send_json(res, {{"points", points}});
        } else if (body.contains("sequence_id")) {
            auto c = s.corpus();
            send_json(res, to_json(m->encode_sequence(c->at(body.at("sequence_id").get<std::string>()))));
        } else {
            throw Error(ErrorCode::validation, "encode expects 'pose', 'poses' or 'sequence_id'");
        }
    });
    h.Post("/embedding/decode", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        auto m = s.model();
        if (body.contains("z")) {
            const LatentPoint z = latent_point(body.at("z"));
            send_json(res, {{"z", point_json(z)}, {"pose", to_json(m->decode(z))}});
        } else if (body.contains("points")) {
            Json poses = Json::array();
            for (const auto& p : body.at("points")) poses.push_back(to_json(m->decode(latent_point(p))));
            send_json(res, {{"poses", poses}});
        } else {
            throw Error(ErrorCode::validation, "decode expects 'z' or 'points'");
        }
    });

    // Map artifacts.
    auto default_view = [&](int m) {
        auto pts = all_points(*s.embedding());
        if (pts.empty()) return Viewport{-4, 4, -4, 4, m};
        return default_viewport(pts, m);
    };
    h.Get("/map/grid", [&, default_view](const Request& req, Response& res) {
        auto m = s.model();
        send_json(res, to_json(landmark_grid(*m, viewport_from(req, default_view))));
    });
    h.Get("/map/scatter", [&](const Request& req, Response& res) {
        auto table = s.embedding();
        auto c = s.corpus();
        Json out = Json::array();
        for (const auto& r : scatter_projection(*c, *table, scope_from(req, *c), filter_from(req)))
            out.push_back(to_json(r));
        send_json(res, out);
    });
    h.Get("/map/density", [&, default_view](const Request& req, Response& res) {
        auto table = s.embedding();
        auto c = s.corpus();
        std::vector<LatentPoint> pts;
        for (const auto& r : scatter_projection(*c, *table, scope_from(req, *c), filter_from(req)))
            pts.push_back(r.point);
        if (pts.empty()) throw Error(ErrorCode::validation, "density needs at least one point in scope");
        Bandwidth bw = Bandwidth::scott();
        if (auto b = param(req, "bandwidth"); b && *b != "scott") bw = Bandwidth::explicit_value(number_param(req, "bandwidth"));
        send_json(res, to_json(density_grid(pts, viewport_from(req, default_view), int_param(req, "r", 64), bw)));
    });
    h.Get("/map/paths", [&](const Request& req, Response& res) {
        auto table = s.embedding();
        auto c = s.corpus();
        Json out = Json::array();
        for (const auto& p : path_projection(*c, *table, list_param(req, "ids"))) out.push_back(to_json(p));
        send_json(res, out);
    });

    // Sequence metrics.
    h.Get("/metrics/dtw", [&](const Request& req, Response& res) {
        auto c = s.corpus();
        const auto a = param(req, "a"), b = param(req, "b");
        if (!a || !b) throw Error(ErrorCode::validation, "metrics/dtw needs a and b");
        auto r = dtw(c->at(*a).to_series(), c->at(*b).to_series(), dtw_options(req));
        send_json(res, {{"a", *a}, {"b", *b}, {"distance", r.distance}, {"path", to_json(r.path)}});
    });
    h.Get("/metrics/neighbors", [&](const Request& req, Response& res) {
        auto c = s.corpus();
        const auto id = param(req, "id");
        if (!id) throw Error(ErrorCode::validation, "metrics/neighbors needs id");
        const int k = int_param(req, "k", 5);
        if (k < 1) throw Error(ErrorCode::validation, "k must be >= 1");
        NamedSeries target{*id, c->at(*id).to_series()};
        std::vector<NamedSeries> pool;
        const auto referent = param(req, "referent");
        for (const auto& q : c->sequences())
            if (!referent || q.referent == *referent) pool.push_back({q.id, q.to_series()});
        send_json(res, to_json(nearest_neighbors(target, pool, static_cast<std::size_t>(k), dtw_options(req))));
    });
    h.Get("/metrics/matrix", [&](const Request& req, Response& res) {
        const auto referent = param(req, "referent");
        if (!referent) throw Error(ErrorCode::validation, "metrics/matrix needs referent");
        send_json(res, to_json(s.referent_distance_matrix(*referent, dtw_options(req))));
    });

    // Consensus.
    h.Get("/consensus", [&](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& r : s.consensus_referents()) {
            const Json report = parse_json(s.consensus_payload(r));
            out.push_back({{"referent", r}, {"variance", report.at("variance")}});
        }
        send_json(res, out);
    });
    h.Post(R"(/consensus/(.+))", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        auto r = s.request_consensus(req.matches[1].str(), dba_config_from_json(body.value("dba", body)),
                                     !flag_param(req, "nocache"));
        if (r.cached)
            send_raw(res, R"({"cached":true,"result":)" + r.payload + "}");
        else
            send_json(res, {{"cached", false}, {"job", to_json(*r.job)}}, 202);
    });
    h.Get(R"(/consensus/(.+)/distribution)", [&](const Request& req, Response& res) {
        const ConsensusReport report = consensus_from_json(parse_json(s.consensus_payload(req.matches[1].str())));
        send_json(res, to_json(distance_distribution(report)));
    });
    h.Get(R"(/consensus/(.+))", [&](const Request& req, Response& res) {
        send_raw(res, s.consensus_payload(req.matches[1].str()));
    });

    // Clustering.
    h.Get("/clusters", [&](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& id : s.cluster_ids()) {
            auto e = s.cluster(id);
            out.push_back({{"id", id},
                           {"scope", e.scope.description},
                           {"k", e.model.k},
                           {"status", to_string(e.model.status)},
                           {"busy", e.busy}});
        }
        send_json(res, out);
    });
    h.Post("/clusters", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        const ClusterScope scope = s.resolve_scope(body.value("scope", Json("all")));
        SeedSpec seeds;
        const Json seed_json = body.value("seeds", Json("auto"));
        if (seed_json.is_array()) {
            seeds = SeedSpec::explicit_seeds(seed_json.get<std::vector<std::string>>());
        } else if (seed_json == "auto") {
            if (!body.contains("k")) throw Error(ErrorCode::validation, "automatic seeding needs k");
            seeds = SeedSpec::farthest_first(body.at("k").get<std::size_t>(), body.value("rng_seed", std::uint64_t{0}));
        } else {
            throw Error(ErrorCode::validation, "seeds must be a list of sequence ids or \"auto\"");
        }
        if (seeds.is_explicit() && body.contains("k") && body.at("k").get<std::size_t>() != seeds.explicit_ids.size())
            throw Error(ErrorCode::validation, "k does not match the number of seeds");
        ClusterConfig config;
        config.dba = dba_config_from_json(body.value("dba", Json(nullptr)));
        const std::string id = s.create_clusters(scope, seeds, config);
        res.set_header("Location", "/clusters/" + id);
        send_json(res, to_json(s.cluster(id)), 201);
    });
    h.Get(R"(/clusters/([^/]+))", [&](const Request& req, Response& res) {
        send_json(res, to_json(s.cluster(req.matches[1].str())));
    });
    h.Post(R"(/clusters/([^/]+)/run)", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        send_json(res, job_accepted(s.run_clusters(req.matches[1].str(), body.value("max_iter", 20))), 202);
    });
    h.Post(R"(/clusters/([^/]+)/rerun)", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        send_json(res, job_accepted(s.rerun_clusters(req.matches[1].str(), body.value("max_iter", 20))), 202);
    });
    h.Post(R"(/clusters/([^/]+)/reassign)", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        auto e = s.reassign(req.matches[1].str(), body.at("sequence_id").get<std::string>(),
                            body.at("cluster").get<std::size_t>());
        send_json(res, to_json(e));
    });

    // Annotations, export and jobs.
    h.Get("/annotations", [&](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& a : s.annotations()) out.push_back(to_json(a));
        send_json(res, out);
    });
    h.Post("/annotations", [&](const Request& req, Response& res) {
        const Json body = body_json(req);
        send_json(res, to_json(s.add_annotation(body.at("target"), body.at("text"))), 201);
    });
    h.Get("/export", [&](const Request&, Response& res) { send_json(res, s.export_analysis()); });
    h.Post("/export", [&](const Request& req, Response& res) {
        s.import_analysis(body_json(req));
        auto c = s.corpus();
        send_json(res, {{"imported", true},
                        {"corpus_hash", c->content_hash()},
                        {"clusters", s.cluster_ids()},
                        {"consensus", s.consensus_referents()},
                        {"model", s.has_model()}});
    });
    h.Get("/jobs", [&](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& j : s.jobs().list()) out.push_back(to_json(j));
        send_json(res, out);
    });
    h.Get(R"(/jobs/([^/]+))", [&](const Request& req, Response& res) {
        auto job = s.jobs().find(req.matches[1].str());
        if (!job) throw Error(ErrorCode::not_found, "unknown job '" + req.matches[1].str() + "'");
        send_json(res, to_json(*job));
    });
}

}  // namespace gmap
