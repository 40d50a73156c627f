#include "gesturemap/session.hpp"

#include "gesturemap/error.hpp"

#include <fstream>
#include <mutex>
#include <set>

namespace gmap {

Corpus read_dataset_file(const std::string& path, std::optional<DatasetFormat> format) {
    if (!format && std::filesystem::path(path).extension() == ".csv") format = DatasetFormat::frames_csv;
    if (!format) return load_corpus_file(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open dataset file '" + path + "'");
    return parse_dataset(in, *format);
}

Json dba_config_to_json(const DbaConfig& c) {
    Json band = c.dtw.band ? Json(*c.dtw.band) : Json(nullptr);
    return {{"max_iter", c.max_iter}, {"tol", c.tol}, {"band", band}};
}

DbaConfig dba_config_from_json(const Json& j) {
    DbaConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw Error(ErrorCode::validation, "dba config must be an object");
    try {
        c.max_iter = j.value("max_iter", c.max_iter);
        c.tol = j.value("tol", c.tol);
        if (j.contains("band") && !j.at("band").is_null()) c.dtw.band = j.at("band").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::validation, std::string("dba config: ") + e.what());
    }
    if (c.max_iter < 0) throw Error(ErrorCode::validation, "dba config: max_iter must be >= 0");
    if (!(c.tol >= 0.0)) throw Error(ErrorCode::validation, "dba config: tol must be >= 0");
    return c;
}

Json to_json(const ClusterEntry& e) {
    return {{"id", e.id},
            {"scope", {{"description", e.scope.description}, {"ids", e.scope.ids}}},
            {"config", {{"dba", dba_config_to_json(e.config.dba)}}},
            {"model", to_json(e.model)},
            {"busy", e.busy}};
}

Json to_json(const Annotation& a) { return {{"id", a.id}, {"target", a.target}, {"text", a.text}}; }

Json to_json(const Job& job) {
    Json j = {{"id", job.id},
              {"kind", to_string(job.kind)},
              {"status", to_string(job.status)},
              {"progress", job.progress}};
    j["result_ref"] = job.result_ref ? Json(*job.result_ref) : Json(nullptr);
    j["error"] = job.error ? Json(*job.error) : Json(nullptr);
    return j;
}

namespace {

bool has_referent(const Corpus& c, std::string_view r) { return !c.by_referent(r).empty(); }

// Everything in the analysis state that names a sequence or referent the
// corpus no longer has.
std::vector<std::string> dangling_references(const Corpus& corpus, const std::map<std::string, ClusterEntry>& clusters,
                                             const std::vector<std::string>& consensus_referents,
                                             const std::map<std::string, std::string>& labels,
                                             const std::vector<Annotation>& annotations) {
    std::vector<std::string> out;
    for (const auto& [id, e] : clusters)
        for (const auto& s : e.scope.ids)
            if (!corpus.find(s)) out.push_back("cluster " + id + " -> sequence " + s);
    for (const auto& r : consensus_referents)
        if (!has_referent(corpus, r)) out.push_back("consensus -> referent " + r);
    for (const auto& [r, label] : labels)
        if (!has_referent(corpus, r)) out.push_back("label -> referent " + r);
    for (const auto& a : annotations)
        if (!corpus.find(a.target) && !has_referent(corpus, a.target))
            out.push_back("annotation " + a.id + " -> " + a.target);
    return out;
}

std::string join(const std::vector<std::string>& parts) {
    std::string s;
    for (const auto& p : parts) s += (s.empty() ? "" : "; ") + p;
    return s;
}

unsigned long numeric_suffix(const std::string& id) {
    const auto pos = id.find_first_of("0123456789");
    if (pos == std::string::npos) return 0;
    try {
        return std::stoul(id.substr(pos));
    } catch (const std::exception&) {
        return 0;
    }
}

}  // namespace

AnalysisSession::AnalysisSession(SessionOptions options)
    : corpus_(std::make_shared<Corpus>()),
      cache_(options.cache_dir.empty() ? ResultCache() : ResultCache(options.cache_dir)),
      jobs_(options.workers) {}

void AnalysisSession::ingest(const Corpus& corpus, bool replace) {
    Corpus incoming = corpus.normalized() ? corpus : corpus.normalized_copy();
    std::unique_lock lock(mutex_);
    if (!replace && !corpus_->empty()) incoming = merge({*corpus_, incoming});
    corpus_ = std::make_shared<const Corpus>(std::move(incoming));
    embedding_.reset();
}

std::shared_ptr<const Corpus> AnalysisSession::corpus() const {
    std::shared_lock lock(mutex_);
    return corpus_;
}

void AnalysisSession::set_model(VaeModel model) {
    if (model.config().input_dim != static_cast<int>(kPoseDim))
        throw Error(ErrorCode::validation, "model input_dim must be 60 for skeleton poses");
    std::unique_lock lock(mutex_);
    model_ = std::make_shared<const VaeModel>(std::move(model));
    embedding_.reset();
}

bool AnalysisSession::has_model() const {
    std::shared_lock lock(mutex_);
    return model_ != nullptr;
}

std::shared_ptr<const VaeModel> AnalysisSession::model() const {
    std::shared_lock lock(mutex_);
    if (!model_) throw Error(ErrorCode::not_found, "no embedding model loaded; train or upload one first");
    return model_;
}

std::shared_ptr<const EmbeddingTable> AnalysisSession::embedding() {
    std::shared_ptr<const VaeModel> model;
    std::shared_ptr<const Corpus> corpus;
    {
        std::shared_lock lock(mutex_);
        if (embedding_) return embedding_;
        if (!model_) throw Error(ErrorCode::not_found, "no embedding model loaded; train or upload one first");
        model = model_;
        corpus = corpus_;
    }
    auto table = std::make_shared<const EmbeddingTable>(embed_corpus(*model, *corpus));
    std::unique_lock lock(mutex_);
    if (model_ == model && corpus_ == corpus) embedding_ = table;
    return table;
}

Job AnalysisSession::start_training(const VaeConfig& config, bool use_cache) {
    config.validate();
    auto corpus = this->corpus();
    if (corpus->empty()) throw Error(ErrorCode::validation, "cannot train on an empty corpus");
    const std::string key = ResultCache::key(corpus->content_hash(), "train", to_json(config));
    return jobs_.submit(JobKind::train, [this, corpus, config, key, use_cache](const ProgressFn& progress) {
        std::optional<VaeModel> model;
        if (use_cache)
            if (auto hit = cache_.get(key)) model = deserialize_model(*hit);
        if (!model) {
            model = train(*corpus, config, [&](int epoch, const EpochStats&) {
                progress(static_cast<double>(epoch + 1) / config.epochs);
            });
            cache_.put(key, serialize_model(*model));
        }
        set_model(std::move(*model));
        return std::string("/embedding/model");
    });
}

std::string AnalysisSession::consensus_key(const Corpus& corpus, const std::string& referent, const Json& params) {
    return ResultCache::key(corpus.content_hash(), "variance_consensus", {{"referent", referent}, {"dba", params}});
}

ConsensusResponse AnalysisSession::request_consensus(const std::string& referent, const DbaConfig& config,
                                                     bool use_cache) {
    auto corpus = this->corpus();
    if (!has_referent(*corpus, referent)) throw Error(ErrorCode::not_found, "unknown referent '" + referent + "'");
    const Json params = dba_config_to_json(config);
    const std::string key = consensus_key(*corpus, referent, params);
    if (use_cache) {
        if (auto hit = cache_.get(key)) {
            std::unique_lock lock(mutex_);
            consensus_[referent] = {params, *hit};
            return {true, *hit, std::nullopt};
        }
    }
    Job job = jobs_.submit(JobKind::variance, [this, corpus, referent, config, params, key](const ProgressFn&) {
        std::string payload = to_json(variance_consensus(referent, *corpus, config)).dump();
        cache_.put(key, payload);
        std::unique_lock lock(mutex_);
        consensus_[referent] = {params, std::move(payload)};
        return "/consensus/" + referent;
    });
    return {false, {}, job};
}

std::string AnalysisSession::consensus_payload(const std::string& referent) const {
    std::shared_lock lock(mutex_);
    auto it = consensus_.find(referent);
    if (it == consensus_.end())
        throw Error(ErrorCode::not_found, "no consensus computed for referent '" + referent + "'");
    return it->second.payload;
}

std::vector<std::string> AnalysisSession::consensus_referents() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [r, c] : consensus_) out.push_back(r);
    return out;
}

DistanceMatrix AnalysisSession::referent_distance_matrix(const std::string& referent, const DtwOptions& options) {
    auto corpus = this->corpus();
    if (!has_referent(*corpus, referent)) throw Error(ErrorCode::not_found, "unknown referent '" + referent + "'");
    Json params = {{"referent", referent}, {"band", options.band ? Json(*options.band) : Json(nullptr)}};
    const std::string key = ResultCache::key(corpus->content_hash(), "distance_matrix", params);
    if (auto hit = cache_.get(key)) return distance_matrix_from_json(parse_json(*hit));
    auto members = referent_members(*corpus, referent);
    DistanceMatrix m = distance_matrix(members, options);
    cache_.put(key, to_json(m).dump());
    return m;
}

std::vector<NamedSeries> AnalysisSession::named_series(const std::vector<std::string>& ids) const {
    auto corpus = this->corpus();
    std::vector<NamedSeries> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back({id, corpus->at(id).to_series()});
    return out;
}

ClusterScope AnalysisSession::resolve_scope(const Json& scope) const {
    auto corpus = this->corpus();
    ClusterScope out;
    if (scope.is_string()) {
        const std::string text = scope.get<std::string>();
        out.description = text;
        if (text == "all") {
            for (const auto& s : corpus->sequences()) out.ids.push_back(s.id);
        } else if (text.rfind("referent:", 0) == 0) {
            const std::string r = text.substr(9);
            for (const auto* s : corpus->by_referent(r)) out.ids.push_back(s->id);
            if (out.ids.empty()) throw Error(ErrorCode::validation, "scope: unknown referent '" + r + "'");
        } else {
            throw Error(ErrorCode::validation, "scope must be 'all', 'referent:<name>' or a list of sequence ids");
        }
    } else if (scope.is_array()) {
        out.description = "ids";
        for (const auto& v : scope) {
            if (!v.is_string()) throw Error(ErrorCode::validation, "scope ids must be strings");
            const std::string id = v.get<std::string>();
            if (!corpus->find(id)) throw Error(ErrorCode::validation, "scope: unknown sequence '" + id + "'");
            out.ids.push_back(id);
        }
    } else {
        throw Error(ErrorCode::validation, "scope must be a string or a list of sequence ids");
    }
    if (out.ids.empty()) throw Error(ErrorCode::validation, "scope is empty");
    return out;
}

std::string AnalysisSession::create_clusters(const ClusterScope& scope, const SeedSpec& seeds,
                                             const ClusterConfig& config) {
    auto items = named_series(scope.ids);
    ClusterModel model = init_clusters(items, seeds, config);
    std::unique_lock lock(mutex_);
    const std::string id = "c" + std::to_string(next_cluster_++);
    clusters_[id] = {id, scope, config, std::move(model), false};
    return id;
}

std::string AnalysisSession::add_clusters(const ClusterScope& scope, const ClusterConfig& config, ClusterModel model) {
    auto corpus = this->corpus();
    for (const auto& sid : model.scope)
        if (!corpus->find(sid)) throw Error(ErrorCode::validation, "cluster model names unknown sequence '" + sid + "'");
    std::unique_lock lock(mutex_);
    const std::string id = "c" + std::to_string(next_cluster_++);
    clusters_[id] = {id, scope, config, std::move(model), false};
    return id;
}

ClusterEntry AnalysisSession::cluster(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = clusters_.find(id);
    if (it == clusters_.end()) throw Error(ErrorCode::not_found, "unknown cluster model '" + id + "'");
    return it->second;
}

std::vector<std::string> AnalysisSession::cluster_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, e] : clusters_) out.push_back(id);
    return out;
}

Job AnalysisSession::start_cluster_job(const std::string& id, int max_iter, bool from_assignments) {
    if (max_iter < 1) throw Error(ErrorCode::validation, "max_iter must be >= 1");
    ClusterEntry entry;
    {
        std::unique_lock lock(mutex_);
        auto it = clusters_.find(id);
        if (it == clusters_.end()) throw Error(ErrorCode::not_found, "unknown cluster model '" + id + "'");
        if (it->second.busy) throw Error(ErrorCode::conflict, "cluster model '" + id + "' is already being updated");
        it->second.busy = true;
        entry = it->second;
    }
    return jobs_.submit(JobKind::cluster_run, [this, id, entry, max_iter, from_assignments](const ProgressFn&) {
        auto release = [&](std::optional<ClusterModel> result) {
            std::unique_lock lock(mutex_);
            auto it = clusters_.find(id);
            if (it == clusters_.end()) return;
            if (result) it->second.model = std::move(*result);
            it->second.busy = false;
        };
        try {
            auto items = named_series(entry.scope.ids);
            ClusterModel result = from_assignments
                                      ? rerun_from_assignments(entry.model, items, max_iter, entry.config)
                                      : run(entry.model, items, max_iter, entry.config);
            release(std::move(result));
        } catch (...) {
            release(std::nullopt);
            throw;
        }
        return "/clusters/" + id;
    });
}

Job AnalysisSession::run_clusters(const std::string& id, int max_iter) { return start_cluster_job(id, max_iter, false); }

Job AnalysisSession::rerun_clusters(const std::string& id, int max_iter) { return start_cluster_job(id, max_iter, true); }

ClusterEntry AnalysisSession::reassign(const std::string& id, const std::string& sequence_id, std::size_t target) {
    std::unique_lock lock(mutex_);
    auto it = clusters_.find(id);
    if (it == clusters_.end()) throw Error(ErrorCode::not_found, "unknown cluster model '" + id + "'");
    if (it->second.busy) throw Error(ErrorCode::conflict, "cluster model '" + id + "' is already being updated");
    it->second.model = gmap::reassign(it->second.model, sequence_id, target);
    return it->second;
}

void AnalysisSession::set_referent_label(const std::string& referent, const std::string& label) {
    std::unique_lock lock(mutex_);
    if (!has_referent(*corpus_, referent)) throw Error(ErrorCode::not_found, "unknown referent '" + referent + "'");
    if (label.empty())
        labels_.erase(referent);
    else
        labels_[referent] = label;
}

std::map<std::string, std::string> AnalysisSession::referent_labels() const {
    std::shared_lock lock(mutex_);
    return labels_;
}

Annotation AnalysisSession::add_annotation(const std::string& target, const std::string& text) {
    std::unique_lock lock(mutex_);
    if (!corpus_->find(target) && !has_referent(*corpus_, target))
        throw Error(ErrorCode::not_found, "annotation target '" + target + "' is neither a sequence nor a referent");
    Annotation a{"a" + std::to_string(next_annotation_++), target, text};
    annotations_.push_back(a);
    return a;
}

std::vector<Annotation> AnalysisSession::annotations() const {
    std::shared_lock lock(mutex_);
    return annotations_;
}

Json AnalysisSession::export_analysis() const {
    std::shared_lock lock(mutex_);
    if (!model_ && clusters_.empty() && consensus_.empty())
        throw Error(ErrorCode::validation, "nothing to export: no model, consensus report or cluster model yet");
    std::vector<std::string> referents;
    for (const auto& [r, c] : consensus_) referents.push_back(r);
    auto dangling = dangling_references(*corpus_, clusters_, referents, labels_, annotations_);
    if (!dangling.empty()) throw Error(ErrorCode::validation, "export has dangling references: " + join(dangling));

    Json clusters = Json::array();
    for (const auto& [id, e] : clusters_) {
        Json j = to_json(e);
        j.erase("busy");
        clusters.push_back(std::move(j));
    }
    Json consensus = Json::array();
    for (const auto& [r, c] : consensus_)
        consensus.push_back({{"referent", r}, {"params", c.params}, {"report", parse_json(c.payload)}});
    Json annotations = Json::array();
    for (const auto& a : annotations_) annotations.push_back(to_json(a));

    return {{"format", "gesturemap-analysis"},
            {"version", 1},
            {"tool_version", kToolVersion},
            {"corpus", parse_json(serialize_corpus(*corpus_))},
            {"model", model_ ? parse_json(serialize_model(*model_)) : Json(nullptr)},
            {"referent_labels", labels_},
            {"clusters", clusters},
            {"consensus", consensus},
            {"annotations", annotations}};
}

void AnalysisSession::import_analysis(const Json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "gesturemap-analysis")
        throw Error(ErrorCode::schema, "not an analysis export document");
    if (doc.value("version", 0) != 1) throw Error(ErrorCode::schema, "unsupported analysis export version");

    std::shared_ptr<const Corpus> corpus;
    std::shared_ptr<const VaeModel> model;
    std::map<std::string, ClusterEntry> clusters;
    std::map<std::string, StoredConsensus> consensus;
    std::map<std::string, std::string> labels;
    std::vector<Annotation> annotations;
    unsigned long next_cluster = 1, next_annotation = 1;
    try {
        corpus = std::make_shared<const Corpus>(deserialize_corpus(doc.at("corpus").dump()));
        if (!doc.at("model").is_null()) model = std::make_shared<const VaeModel>(deserialize_model(doc.at("model").dump()));
        for (const auto& c : doc.at("clusters")) {
            ClusterEntry e;
            e.id = c.at("id");
            e.scope.description = c.at("scope").at("description");
            e.scope.ids = c.at("scope").at("ids").get<std::vector<std::string>>();
            e.config.dba = dba_config_from_json(c.at("config").at("dba"));
            e.model = cluster_model_from_json(c.at("model"));
            next_cluster = std::max(next_cluster, numeric_suffix(e.id) + 1);
            clusters[e.id] = std::move(e);
        }
        for (const auto& c : doc.at("consensus"))
            consensus[c.at("referent")] = {c.at("params"), c.at("report").dump()};
        labels = doc.at("referent_labels").get<std::map<std::string, std::string>>();
        for (const auto& a : doc.at("annotations")) {
            annotations.push_back({a.at("id"), a.at("target"), a.at("text")});
            next_annotation = std::max(next_annotation, numeric_suffix(annotations.back().id) + 1);
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::schema, std::string("analysis export: ") + e.what());
    }
    std::vector<std::string> referents;
    for (const auto& [r, c] : consensus) referents.push_back(r);
    auto dangling = dangling_references(*corpus, clusters, referents, labels, annotations);
    if (!dangling.empty()) throw Error(ErrorCode::validation, "import has dangling references: " + join(dangling));

    // Reports carried by the export are valid cache entries for this corpus.
    for (const auto& [r, c] : consensus) cache_.put(consensus_key(*corpus, r, c.params), c.payload);

    std::unique_lock lock(mutex_);
    for (const auto& [id, e] : clusters_)
        if (e.busy) throw Error(ErrorCode::conflict, "cannot import while cluster model '" + id + "' is running");
    corpus_ = std::move(corpus);
    model_ = std::move(model);
    embedding_.reset();
    clusters_ = std::move(clusters);
    consensus_ = std::move(consensus);
    labels_ = std::move(labels);
    annotations_ = std::move(annotations);
    next_cluster_ = next_cluster;
    next_annotation_ = next_annotation;
}

}  // namespace gmap
