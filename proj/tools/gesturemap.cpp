// Batch entry point: ingest, train, embed, metrics, consensus, cluster,
// map, serve, export.

#include "gesturemap/error.hpp"
#include "gesturemap/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <pthread.h>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace gmap;

namespace {

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::internal, "cannot write '" + path + "'");
    out << text << '\n';
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Corpus load_normalized(const std::string& path) {
    Corpus c = read_dataset_file(path);
    return c.normalized() ? c : c.normalized_copy();
}

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

std::vector<std::string> split_ids(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<std::string> scope_ids(const Corpus& corpus, const std::string& scope) {
    std::vector<std::string> ids;
    if (scope == "all") {
        for (const auto& s : corpus.sequences()) ids.push_back(s.id);
    } else if (scope.rfind("referent:", 0) == 0) {
        for (const auto* s : corpus.by_referent(scope.substr(9))) ids.push_back(s->id);
    } else {
        ids = split_ids(scope);
    }
    if (ids.empty()) throw Error(ErrorCode::validation, "scope '" + scope + "' selects no sequences");
    return ids;
}

std::vector<NamedSeries> named(const Corpus& corpus, const std::vector<std::string>& ids) {
    std::vector<NamedSeries> out;
    for (const auto& id : ids) out.push_back({id, corpus.at(id).to_series()});
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gesture map analysis tools"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse and normalize dataset files into one corpus file");
    std::vector<std::string> ingest_inputs;
    std::string ingest_format, ingest_out;
    bool ingest_raw = false;
    ingest->add_option("--input", ingest_inputs, "Dataset file (repeatable)")->required();
    ingest->add_option("--format", ingest_format, "canonical-json or frames-csv (default: by extension)");
    ingest->add_option("--out", ingest_out, "Corpus file to write")->required();
    ingest->add_flag("--raw", ingest_raw, "Keep poses unnormalized");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the pose embedding");
    std::string train_corpus, train_config, train_out;
    std::optional<int> train_epochs, train_hidden;
    std::optional<std::uint64_t> train_seed;
    bool large_scale = false;
    train_cmd->add_option("--corpus", train_corpus)->required();
    train_cmd->add_option("--config", train_config, "JSON file with training settings");
    train_cmd->add_option("--epochs", train_epochs);
    train_cmd->add_option("--hidden-units", train_hidden);
    train_cmd->add_option("--seed", train_seed);
    train_cmd->add_flag("--large-scale", large_scale, "Start from h=512, 2000 epochs, lr 3e-5");
    train_cmd->add_option("--out", train_out)->required();

    // embed
    auto* embed = app.add_subcommand("embed", "Encode every sequence as a 2-D path");
    std::string embed_model, embed_corpus_path, embed_out;
    embed->add_option("--model", embed_model)->required();
    embed->add_option("--corpus", embed_corpus_path)->required();
    embed->add_option("--out", embed_out);

    // metrics
    auto* metrics = app.add_subcommand("metrics", "DTW distances");
    metrics->require_subcommand(1);
    std::string metrics_corpus, metrics_out, dtw_a, dtw_b, matrix_referent, nn_id;
    std::optional<std::size_t> band;
    std::size_t nn_k = 5;
    metrics->add_option("--corpus", metrics_corpus)->required();
    metrics->add_option("--band", band, "Sakoe-Chiba band radius");
    metrics->add_option("--out", metrics_out);
    auto* m_dtw = metrics->add_subcommand("dtw", "Distance and alignment of two sequences");
    m_dtw->add_option("--a", dtw_a)->required();
    m_dtw->add_option("--b", dtw_b)->required();
    auto* m_matrix = metrics->add_subcommand("matrix", "Pairwise distances within a referent");
    m_matrix->add_option("--referent", matrix_referent)->required();
    auto* m_nn = metrics->add_subcommand("neighbors", "Nearest sequences to one gesture");
    m_nn->add_option("--id", nn_id)->required();
    m_nn->add_option("--k", nn_k);

    // consensus
    auto* consensus = app.add_subcommand("consensus", "Average gesture and variance consensus for a referent");
    std::string cons_referent, cons_corpus, cons_out;
    DbaConfig cons_config;
    bool cons_histogram = false;
    consensus->add_option("--referent", cons_referent)->required();
    consensus->add_option("--corpus", cons_corpus)->required();
    consensus->add_option("--max-iter", cons_config.max_iter);
    consensus->add_option("--tol", cons_config.tol);
    consensus->add_flag("--histogram", cons_histogram, "Write the distance distribution instead");
    consensus->add_option("--out", cons_out);

    // cluster
    auto* cluster = app.add_subcommand("cluster", "k-means over sequences with DBA centroids");
    std::string cl_corpus, cl_scope = "all", cl_seeds = "auto", cl_out;
    std::size_t cl_k = 0;
    std::uint64_t cl_rng = 0;
    int cl_iter = 20;
    cluster->add_option("--corpus", cl_corpus)->required();
    cluster->add_option("--scope", cl_scope, "all, referent:<name> or comma-separated ids");
    cluster->add_option("--k", cl_k);
    cluster->add_option("--seeds", cl_seeds, "Comma-separated seed ids or auto");
    cluster->add_option("--rng-seed", cl_rng);
    cluster->add_option("--max-iter", cl_iter);
    cluster->add_option("--out", cl_out);

    // map
    auto* map = app.add_subcommand("map", "Map artifacts");
    map->require_subcommand(1);
    std::string map_model, map_corpus, map_out, map_bandwidth = "scott";
    std::optional<double> x0, x1, y0, y1;
    int map_m = 11, map_r = 64;
    ScatterFilter map_filter;
    map->add_option("--model", map_model)->required();
    map->add_option("--corpus", map_corpus);
    map->add_option("--x0", x0);
    map->add_option("--x1", x1);
    map->add_option("--y0", y0);
    map->add_option("--y1", y1);
    map->add_option("--out", map_out);
    auto* map_grid = map->add_subcommand("grid", "Decoded landmark poses");
    map_grid->add_option("--m", map_m);
    auto* map_scatter = map->add_subcommand("scatter", "Per-frame points");
    auto* map_density = map->add_subcommand("density", "Kernel density lattice");
    map_density->add_option("--r", map_r);
    map_density->add_option("--bandwidth", map_bandwidth, "scott or a number");
    for (auto* sub : {map_scatter, map_density}) {
        sub->add_option("--referent", map_filter.referent);
        sub->add_option("--participant", map_filter.participant);
        sub->add_option("--trial", map_filter.trial);
    }

    // serve
    auto* serve = app.add_subcommand("serve", "Run the REST service");
    std::string host = env_or("GESTUREMAP_HOST", "127.0.0.1");
    int port = std::atoi(env_or("GESTUREMAP_PORT", "8080").c_str());
    std::string serve_corpus = env_or("GESTUREMAP_CORPUS", ""), serve_model = env_or("GESTUREMAP_MODEL", "");
    std::string cache_dir = env_or("GESTUREMAP_CACHE_DIR", ""), serve_analysis;
    unsigned workers = static_cast<unsigned>(std::atoi(env_or("GESTUREMAP_WORKERS", "2").c_str()));
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--corpus", serve_corpus);
    serve->add_option("--model", serve_model);
    serve->add_option("--cache-dir", cache_dir);
    serve->add_option("--workers", workers);
    serve->add_option("--analysis", serve_analysis, "Start from an exported analysis");

    // export
    auto* exp = app.add_subcommand("export", "Bundle corpus, model and analyses into one document");
    std::string exp_corpus, exp_model, exp_out;
    std::vector<std::string> exp_referents, exp_clusters;
    exp->add_option("--corpus", exp_corpus)->required();
    exp->add_option("--model", exp_model);
    exp->add_option("--consensus", exp_referents, "Referent to compute consensus for (repeatable)");
    exp->add_option("--cluster-file", exp_clusters, "Cluster model file from `cluster` (repeatable)");
    exp->add_option("--out", exp_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            std::vector<Corpus> parts;
            for (const auto& path : ingest_inputs) {
                Corpus c = ingest_format.empty() ? read_dataset_file(path)
                                                 : read_dataset_file(path, parse_format(ingest_format));
                parts.push_back(ingest_raw || c.normalized() ? c : c.normalized_copy());
            }
            Corpus merged = parts.size() == 1 ? parts.front() : merge(parts);
            save_corpus_file(merged, ingest_out);
            std::size_t dropped = 0;
            for (const auto& s : merged.sequences()) dropped += s.dropped_frames;
            std::cerr << merged.datasets().size() << " datasets, " << merged.sequences().size() << " sequences, "
                      << merged.pose_count() << " poses, " << dropped << " dropped frames\n";
        } else if (*train_cmd) {
            VaeConfig config = large_scale ? VaeConfig::large_scale() : VaeConfig{};
            if (!train_config.empty()) config = vae_config_from_json(parse_json(read_file(train_config)), config);
            if (train_epochs) config.epochs = *train_epochs;
            if (train_hidden) config.hidden_units = *train_hidden;
            if (train_seed) config.rng_seed = *train_seed;
            config.validate();
            const Corpus corpus = load_normalized(train_corpus);
            const int every = std::max(1, config.epochs / 10);
            VaeModel model = train(corpus, config, [&](int epoch, const EpochStats& s) {
                if ((epoch + 1) % every == 0 || epoch == 0)
                    std::cerr << "epoch " << epoch + 1 << "/" << config.epochs << "  mse " << s.reconstruction
                              << "  kl " << s.kl << "  beta " << s.beta << '\n';
            });
            save_model_file(model, train_out);
        } else if (*embed) {
            const VaeModel model = load_model_file(embed_model);
            const Corpus corpus = load_normalized(embed_corpus_path);
            Json out = Json::array();
            for (const auto& [id, path] : embed_corpus(model, corpus)) out.push_back(to_json(path));
            write_output(embed_out, out.dump());
        } else if (*metrics) {
            const Corpus corpus = load_normalized(metrics_corpus);
            DtwOptions options{band};
            if (*m_dtw) {
                auto r = dtw(corpus.at(dtw_a).to_series(), corpus.at(dtw_b).to_series(), options);
                write_output(metrics_out, Json{{"a", dtw_a}, {"b", dtw_b}, {"distance", r.distance},
                                               {"path", to_json(r.path)}}.dump());
            } else if (*m_matrix) {
                auto members = referent_members(corpus, matrix_referent);
                if (members.empty()) throw Error(ErrorCode::not_found, "unknown referent '" + matrix_referent + "'");
                write_output(metrics_out, to_json(distance_matrix(members, options)).dump());
            } else {
                std::vector<NamedSeries> pool;
                for (const auto& s : corpus.sequences()) pool.push_back({s.id, s.to_series()});
                NamedSeries target{nn_id, corpus.at(nn_id).to_series()};
                write_output(metrics_out, to_json(nearest_neighbors(target, pool, nn_k, options)).dump());
            }
        } else if (*consensus) {
            const Corpus corpus = load_normalized(cons_corpus);
            auto report = variance_consensus(cons_referent, corpus, cons_config);
            write_output(cons_out, cons_histogram ? to_json(distance_distribution(report)).dump()
                                                  : to_json(report).dump());
            std::cerr << cons_referent << ": variance " << report.variance << " over " << report.distances.size()
                      << " gestures\n";
        } else if (*cluster) {
            const Corpus corpus = load_normalized(cl_corpus);
            auto items = named(corpus, scope_ids(corpus, cl_scope));
            SeedSpec seeds = cl_seeds == "auto" ? SeedSpec::farthest_first(cl_k, cl_rng)
                                                : SeedSpec::explicit_seeds(split_ids(cl_seeds));
            if (seeds.is_explicit() && cl_k != 0 && cl_k != seeds.explicit_ids.size())
                throw Error(ErrorCode::validation, "--k does not match the number of seeds");
            ClusterModel model = run(init_clusters(items, seeds), items, cl_iter);
            write_output(cl_out, to_json(model).dump());
            std::cerr << "k=" << model.k << " " << to_string(model.status) << " after " << model.iterations_run
                      << " iterations, inertia " << model.inertia_trace.back() << '\n';
        } else if (*map) {
            const VaeModel model = load_model_file(map_model);
            std::optional<Corpus> corpus;
            std::optional<EmbeddingTable> table;
            std::vector<LatentPoint> points;
            if (!map_corpus.empty()) {
                corpus = load_normalized(map_corpus);
                table = embed_corpus(model, *corpus);
            }
            auto records = [&] {
                if (!corpus) throw Error(ErrorCode::validation, "--corpus is required for scatter and density");
                std::vector<std::string> ids;
                for (const auto& s : corpus->sequences()) ids.push_back(s.id);
                return scatter_projection(*corpus, *table, ids, map_filter);
            };
            const int m = *map_grid ? map_m : 11;
            auto viewport = [&](const std::vector<LatentPoint>& pts) {
                const int given = x0.has_value() + x1.has_value() + y0.has_value() + y1.has_value();
                if (given != 0 && given != 4) throw Error(ErrorCode::validation, "give all of --x0 --x1 --y0 --y1");
                Viewport v = given == 4 ? Viewport{*x0, *x1, *y0, *y1, m}
                                        : (pts.empty() ? Viewport{-4, 4, -4, 4, m} : default_viewport(pts, m));
                v.validate();
                return v;
            };
            if (*map_grid) {
                if (table)
                    for (const auto& [id, path] : *table) points.insert(points.end(), path.points.begin(), path.points.end());
                write_output(map_out, to_json(landmark_grid(model, viewport(points))).dump());
            } else if (*map_scatter) {
                Json out = Json::array();
                for (const auto& r : records()) out.push_back(to_json(r));
                write_output(map_out, out.dump());
            } else {
                for (const auto& r : records()) points.push_back(r.point);
                if (points.empty()) throw Error(ErrorCode::validation, "no points match the filter");
                Bandwidth bw = map_bandwidth == "scott" ? Bandwidth::scott()
                                                        : Bandwidth::explicit_value(std::stod(map_bandwidth));
                write_output(map_out, to_json(density_grid(points, viewport(points), map_r, bw)).dump());
            }
        } else if (*serve) {
            // Block termination signals in every thread and field them on one.
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);
            SessionOptions options;
            options.cache_dir = cache_dir;
            options.workers = workers;
            AnalysisSession session(options);
            if (!serve_analysis.empty()) session.import_analysis(parse_json(read_file(serve_analysis)));
            if (!serve_corpus.empty()) session.ingest(read_dataset_file(serve_corpus));
            if (!serve_model.empty()) session.set_model(load_model_file(serve_model));
            ApiServer server(session);
            const int bound = server.bind(host, port);
            std::thread waiter([&] {
                int sig = 0;
                sigwait(&signals, &sig);
                server.stop();
            });
            waiter.detach();
            std::cerr << "listening on http://" << host << ":" << bound << '\n';
            server.serve();
        } else if (*exp) {
            AnalysisSession session;
            session.ingest(read_dataset_file(exp_corpus), true);
            if (!exp_model.empty()) session.set_model(load_model_file(exp_model));
            for (const auto& r : exp_referents) {
                auto resp = session.request_consensus(r, {});
                if (resp.job) {
                    auto job = session.jobs().wait(resp.job->id);
                    if (!job || job->status != JobStatus::done)
                        throw Error(ErrorCode::internal, "consensus for '" + r + "' failed: " +
                                                             (job && job->error ? *job->error : "timeout"));
                }
            }
            for (const auto& path : exp_clusters) {
                ClusterModel model = cluster_model_from_json(parse_json(read_file(path)));
                session.add_clusters({path, model.scope}, {}, model);
            }
            write_output(exp_out, session.export_analysis().dump());
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
        return e.code() == ErrorCode::internal ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
