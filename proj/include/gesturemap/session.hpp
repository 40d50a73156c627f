#pragma once

#include "gesturemap/cache.hpp"
#include "gesturemap/clustering.hpp"
#include "gesturemap/gesture_map.hpp"
#include "gesturemap/jobs.hpp"
#include "gesturemap/json_io.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace gmap {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Read a dataset file. Without an explicit format, `.csv` files are read
/// as frames-csv and everything else as a corpus or dataset document.
Corpus read_dataset_file(const std::string& path, std::optional<DatasetFormat> format = std::nullopt);

struct SessionOptions {
    /// Empty keeps the result cache in memory.
    std::filesystem::path cache_dir;
    unsigned workers = 2;
};

/// Sequences a cluster model works on, with the request that selected them.
struct ClusterScope {
    std::string description;
    std::vector<std::string> ids;
};

struct ClusterEntry {
    std::string id;
    ClusterScope scope;
    ClusterConfig config;
    ClusterModel model;
    bool busy = false;
};

struct Annotation {
    std::string id;
    std::string target;  ///< sequence id or referent name
    std::string text;
};

struct ConsensusResponse {
    bool cached = false;
    /// Canonical report document when served from the cache.
    std::string payload;
    std::optional<Job> job;
};

/// In-process state behind the REST service: the corpus, the embedding
/// model and every analysis computed on them. Safe for concurrent use;
/// long computations run as jobs on the session's worker pool.
class AnalysisSession {
public:
    explicit AnalysisSession(SessionOptions options = {});

    // Corpus. Raw poses are normalized on the way in.
    void ingest(const Corpus& corpus, bool replace = false);
    std::shared_ptr<const Corpus> corpus() const;

    // Embedding.
    void set_model(VaeModel model);
    bool has_model() const;
    /// Throws not_found when no model is loaded.
    std::shared_ptr<const VaeModel> model() const;
    std::shared_ptr<const EmbeddingTable> embedding();
    Job start_training(const VaeConfig& config, bool use_cache = true);

    // Consensus.
    ConsensusResponse request_consensus(const std::string& referent, const DbaConfig& config, bool use_cache = true);
    /// Last computed report document for a referent.
    std::string consensus_payload(const std::string& referent) const;
    std::vector<std::string> consensus_referents() const;
    DistanceMatrix referent_distance_matrix(const std::string& referent, const DtwOptions& options);

    // Clustering.
    ClusterScope resolve_scope(const Json& scope) const;
    std::string create_clusters(const ClusterScope& scope, const SeedSpec& seeds, const ClusterConfig& config);
    /// Adopt a model computed elsewhere (for example by the batch CLI).
    std::string add_clusters(const ClusterScope& scope, const ClusterConfig& config, ClusterModel model);
    ClusterEntry cluster(const std::string& id) const;
    std::vector<std::string> cluster_ids() const;
    /// Refuses with ErrorCode::conflict while another mutation is in flight.
    Job run_clusters(const std::string& id, int max_iter);
    Job rerun_clusters(const std::string& id, int max_iter);
    ClusterEntry reassign(const std::string& id, const std::string& sequence_id, std::size_t target);

    // User data.
    void set_referent_label(const std::string& referent, const std::string& label);
    std::map<std::string, std::string> referent_labels() const;
    Annotation add_annotation(const std::string& target, const std::string& text);
    std::vector<Annotation> annotations() const;

    // Export and import.
    Json export_analysis() const;
    /// Replace the whole session state with an exported document.
    void import_analysis(const Json& doc);

    JobQueue& jobs() noexcept { return jobs_; }
    ResultCache& cache() noexcept { return cache_; }

private:
    struct StoredConsensus {
        Json params;
        std::string payload;
    };

    std::vector<NamedSeries> named_series(const std::vector<std::string>& ids) const;
    Job start_cluster_job(const std::string& id, int max_iter, bool from_assignments);
    static std::string consensus_key(const Corpus& corpus, const std::string& referent, const Json& params);

    mutable std::shared_mutex mutex_;
    std::shared_ptr<const Corpus> corpus_;
    std::shared_ptr<const VaeModel> model_;
    std::shared_ptr<const EmbeddingTable> embedding_;
    std::map<std::string, StoredConsensus> consensus_;
    std::map<std::string, ClusterEntry> clusters_;
    std::map<std::string, std::string> labels_;
    std::vector<Annotation> annotations_;
    unsigned long next_cluster_ = 1;
    unsigned long next_annotation_ = 1;

    ResultCache cache_;
    JobQueue jobs_;  // last: workers stop before the state they touch is destroyed
};

Json to_json(const ClusterEntry& e);
Json to_json(const Annotation& a);
Json to_json(const Job& job);
Json dba_config_to_json(const DbaConfig& c);
DbaConfig dba_config_from_json(const Json& j);

}  // namespace gmap
