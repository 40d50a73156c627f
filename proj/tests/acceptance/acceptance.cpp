// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every expected value is recomputed here from first principles.

#include "gesturemap/barycenter.hpp"
#include "gesturemap/clustering.hpp"
#include "gesturemap/dtw.hpp"
#include "gesturemap/gesture_map.hpp"
#include "gesturemap/server.hpp"
#include "gesturemap/vae.hpp"
#include "support/synthetic.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

using namespace gmap;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double time_limit_s;  // 0 = none
    std::function<Outcome()> body;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

// ---- DTW ------------------------------------------------------------------

Outcome dtw_oracle() {
    std::vector<std::vector<double>> all;
    for (int len = 1; len <= 4; ++len) {
        int count = 1;
        for (int i = 0; i < len; ++i) count *= 3;
        for (int code = 0; code < count; ++code) {
            std::vector<double> v;
            for (int i = 0, c = code; i < len; ++i, c /= 3) v.push_back(c % 3);
            all.push_back(v);
        }
    }
    std::size_t pairs = 0, mismatches = 0;
    for (const auto& a : all) {
        const Series sa = Series::scalar(a);
        for (const auto& b : all) {
            ++pairs;
            if (dtw_distance(sa, Series::scalar(b)) != testing::dtw_exhaustive(a, b)) ++mismatches;
        }
    }
    return {mismatches == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches"};
}

// ---- DBA ------------------------------------------------------------------

Outcome dba_monotone() {
    std::mt19937_64 rng(20240601);
    DbaConfig config;
    config.max_iter = 30;
    config.tol = 0.0;
    std::size_t violations = 0, iterations = 0, rejected = 0;
    double worst_recheck = 0.0;
    for (int set = 0; set < 100; ++set) {
        const int n = testing::uniform_int(rng, 3, 10);
        std::vector<NamedSeries> members;
        for (int i = 0; i < n; ++i) {
            const auto len = static_cast<std::size_t>(testing::uniform_int(rng, 5, 20));
            members.push_back({"m" + std::to_string(i), testing::random_series(rng, len, 60)});
        }
        const Barycenter b = dba(members, DbaInit::medoid(), config);
        iterations += static_cast<std::size_t>(b.iterations_run);
        rejected += b.rejected_step;
        for (std::size_t t = 1; t < b.wgss_trace.size(); ++t)
            if (b.wgss_trace[t] > b.wgss_trace[t - 1] * (1.0 + 1e-9)) ++violations;
        // The reported WGSS must be the real one for the returned average.
        double direct = 0.0;
        for (const auto& m : members) {
            const double d = dtw_distance(b.frames, m.series);
            direct += d * d;
        }
        worst_recheck = std::max(worst_recheck, std::abs(direct - b.wgss()) / direct);
        if (worst_recheck > 1e-9) ++violations;
    }
    return {violations == 0, "100 sets, " + std::to_string(iterations) + " iterations, " + std::to_string(rejected) +
                                 " rejected steps, " + std::to_string(violations) + " violations"};
}

// ---- variance consensus ------------------------------------------------------

std::vector<double> first_coordinate(const Series& s) {
    std::vector<double> out;
    for (std::size_t i = 0; i < s.length(); ++i) out.push_back(s.frame(i)[0]);
    return out;
}

Outcome consensus_fidelity() {
    std::vector<std::string> failures;
    const std::vector<double> d13{1.0, 3.0};
    if (variance_of_distances(d13) != 5.0) failures.push_back("{1,3}");

    // [0],[2]: medoid [0] (tie by id), one update to [1]; distances {1,1}.
    auto two = variance_consensus("r", testing::scalar_corpus({{"r", "p1", {0}}, {"r", "p2", {2}}}));
    if (two.variance != 1.0) failures.push_back("[0],[2] gave " + fmt(two.variance));
    // [1],[1],[4]: medoid [1], update to the mean [2]; distances {1,1,2}.
    auto three = variance_consensus(
        "r", testing::scalar_corpus({{"r", "p1", {1}}, {"r", "p2", {1}}, {"r", "p3", {4}}}));
    if (three.variance != 2.0) failures.push_back("[1],[1],[4] gave " + fmt(three.variance));

    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (int ref = 0; ref < 5; ++ref) {
        std::vector<testing::ScalarGesture> gestures;
        std::vector<std::vector<double>> raw;
        const int n = testing::uniform_int(rng, 3, 7);
        for (int p = 0; p < n; ++p) {
            std::vector<double> v(static_cast<std::size_t>(testing::uniform_int(rng, 3, 6)));
            for (auto& x : v) x = testing::uniform(rng, -2, 2);
            raw.push_back(v);
            gestures.push_back({"ref" + std::to_string(ref), "p" + std::to_string(p), v});
        }
        auto report = variance_consensus("ref" + std::to_string(ref), testing::scalar_corpus(gestures));
        const auto center = first_coordinate(report.barycenter.frames);
        double sum = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const double d = testing::dtw_exhaustive(raw[i], center);
            worst = std::max(worst, std::abs(report.distances[i].second - d));
            sum += d * d;
        }
        worst = std::max(worst, std::abs(report.variance - sum / static_cast<double>(raw.size())));
    }
    if (worst > 1e-9) failures.push_back("recomputation off by " + fmt(worst));
    std::string detail = "hand cases exact, 5 referents within " + fmt(worst);
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

// ---- k-means ----------------------------------------------------------------

std::vector<int> labels(const ClusterModel& m, const testing::GroupedCorpus& g) {
    std::vector<int> out;
    for (const auto& item : g.items) out.push_back(static_cast<int>(m.assignments.at(item.id)));
    return out;
}

std::vector<int> truth(const testing::GroupedCorpus& g) {
    std::vector<int> out;
    for (const auto& item : g.items) out.push_back(g.truth.at(item.id));
    return out;
}

Outcome kmeans_separation() {
    int runs = 0, perfect = 0, pin_trials = 0, pin_kept = 0;
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (int k = 2; k <= 3; ++k) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto g = testing::separated_groups(k, 20, 1000 * static_cast<std::uint64_t>(k) + seed, 60);
            double intra = 0.0, inter = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < g.items.size(); ++i)
                for (std::size_t j = i + 1; j < g.items.size(); ++j) {
                    const double d = dtw_distance(g.items[i].series, g.items[j].series);
                    if (g.truth.at(g.items[i].id) == g.truth.at(g.items[j].id)) intra = std::max(intra, d);
                    else inter = std::min(inter, d);
                }
            worst_ratio = std::min(worst_ratio, inter / intra);

            std::mt19937_64 rng(seed);
            std::vector<std::string> seeds;
            for (int c = 0; c < k; ++c) seeds.push_back(g.items[static_cast<std::size_t>(c * 20 + testing::uniform_int(rng, 0, 19))].id);
            auto done = run(init_clusters(g.items, SeedSpec::explicit_seeds(seeds)), g.items, 20);
            ++runs;
            if (testing::adjusted_rand_index(labels(done, g), truth(g)) == 1.0) ++perfect;

            // Pin a member into a foreign cluster and re-cluster both ways.
            const auto& victim = g.items[static_cast<std::size_t>(testing::uniform_int(rng, 0, 20 * k - 1))].id;
            const std::size_t target = (done.assignments.at(victim) + 1) % static_cast<std::size_t>(k);
            auto pinned = reassign(done, victim, target);
            for (const auto& after : {run(pinned, g.items, 20), rerun_from_assignments(pinned, g.items, 20)}) {
                ++pin_trials;
                if (after.assignments.at(victim) == target && after.pinned == pinned.pinned) ++pin_kept;
            }
        }
    }
    const bool ok = worst_ratio >= 10.0 && perfect * 10 >= runs * 9 && pin_kept == pin_trials;
    return {ok, "ARI=1 in " + std::to_string(perfect) + "/" + std::to_string(runs) + " runs, pins kept " +
                    std::to_string(pin_kept) + "/" + std::to_string(pin_trials) + ", min inter/intra DTW " +
                    fmt(worst_ratio)};
}

// ---- VAE ---------------------------------------------------------------------

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * testing::normal(rng);
    return m;
}

Outcome vae_gradient() {
    // Per-coordinate reconstruction error plus KL. The summed objective used
    // in training is 60x larger, so its central differences carry rounding
    // noise near 1e-4 relative on tiny gradients; it gets an absolute bound.
    const LossWeights mse_kl{1.0 / 60.0, 1.0};
    double worst_rel = 0.0, worst_abs_summed = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        VaeConfig c;
        c.hidden_units = 8;
        c.rng_seed = seed;
        auto model = VaeModel::initialize(c);
        std::mt19937_64 rng(seed + 500);
        Eigen::MatrixXd batch = random_matrix(rng, 60, 5, 0.5);
        Eigen::MatrixXd noise = random_matrix(rng, 2, 5, 1.0);
        worst_rel = std::max(worst_rel, gradient_check(model, batch, noise, 1e-5, mse_kl).max_relative_error);
        worst_abs_summed = std::max(worst_abs_summed, gradient_check(model, batch, noise).max_absolute_error);
    }
    return {worst_rel < 1e-4 && worst_abs_summed < 1e-8,
            "h=8, 10 seeds, max relative error " + fmt(worst_rel) + ", summed-objective max absolute error " +
                fmt(worst_abs_summed)};
}

Outcome vae_training() {
    const auto data = testing::three_cluster_poses(200, 7);
    const VaeConfig config;
    const VaeModel model = train(data.data, config);
    const auto& trace = model.training_trace();
    const double first = trace.front().reconstruction, last = trace.back().reconstruction;
    std::vector<std::array<double, 2>> pts;
    for (Eigen::Index i = 0; i < data.data.cols(); ++i) {
        std::vector<double> col(data.data.col(i).data(), data.data.col(i).data() + 60);
        pts.push_back(model.encode(std::span<const double>(col)));
    }
    const double sil = testing::silhouette(pts, data.labels);
    return {config.hidden_units == 64 && config.epochs == 200 && last < 0.1 * first && sil > 0.5,
            std::to_string(data.data.cols()) + " poses, h=" + std::to_string(config.hidden_units) + ", " +
                std::to_string(trace.size()) + " epochs, final/first MSE " + fmt(last / first) + ", silhouette " +
                fmt(sil)};
}

// ---- map ---------------------------------------------------------------------

Outcome map_grid() {
    std::vector<std::string> failures;
    VaeConfig c;
    c.hidden_units = 8;
    const auto model = VaeModel::initialize(c);

    std::mt19937_64 rng(9);
    std::vector<LatentPoint> pts;
    for (int i = 0; i < 80; ++i) pts.push_back({testing::normal(rng), 2.0 * testing::normal(rng) - 0.5});
    const auto def = landmark_grid(model, default_viewport(pts));
    if (def.m != 11 || def.points.size() != 121 || def.poses.size() != 121) failures.push_back("default not 11x11");

    const auto small = landmark_grid(model, Viewport{-1, 1, -1, 1, 3});
    const double axis[3] = {-1, 0, 1};
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) {
            const auto& p = small.points[static_cast<std::size_t>(r * 3 + col)];
            if (p[0] != axis[col] || p[1] != axis[r]) failures.push_back("m=3 landmark off the lattice");
        }

    const Viewport v{-3, 3, -5, 4, 11};
    const int res = 48;
    const auto d = density_grid(pts, v, res);
    const double cw = 6.0 / res, ch = 9.0 / res;
    double worst = 0.0;
    for (auto [row, col] : {std::pair{0, 0}, {24, 24}, {5, 40}, {47, 47}, {30, 3}, {12, 33}}) {
        const double oracle = testing::kde_cell_mean(pts, d.bandwidth_x, d.bandwidth_y, -3 + cw * col,
                                                     -3 + cw * (col + 1), -5 + ch * row, -5 + ch * (row + 1));
        worst = std::max(worst, std::abs(d.values[static_cast<std::size_t>(row * res + col)] - oracle));
    }
    if (worst > 1e-9) failures.push_back("density off by " + fmt(worst));
    std::string detail = "121 default landmarks, m=3 lattice exact, density probes within " + fmt(worst);
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

// ---- service -----------------------------------------------------------------

struct Running {
    AnalysisSession session;
    ApiServer server{session};
    int port = 0;
    std::thread thread;

    Running() {
        port = server.bind("127.0.0.1", 0);
        thread = std::thread([this] { server.serve(); });
        server.wait_until_ready();
    }
    ~Running() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(300, 0);
        return c;
    }
};

Json expect(const httplib::Result& r, int status, const std::string& what) {
    if (!r) throw std::runtime_error(what + ": no response");
    if (r->status != status)
        throw std::runtime_error(what + ": HTTP " + std::to_string(r->status) + " " + r->body);
    return Json::parse(r->body);
}

void await_job(httplib::Client& c, const Json& accepted, const std::string& what) {
    const std::string id = accepted.at("job").at("id");
    for (int i = 0; i < 60000; ++i) {
        Json j = expect(c.Get("/jobs/" + id), 200, what);
        if (j["status"] == "done") return;
        if (j["status"] == "failed") throw std::runtime_error(what + " failed: " + j["error"].dump());
        std::this_thread::sleep_for(5ms);
    }
    throw std::runtime_error(what + " timed out");
}

Outcome service_round_trip() {
    Running first;
    auto c = first.client();
    expect(c.Post("/datasets", serialize_corpus(testing::demo_corpus()), "application/json"), 201, "ingest");
    await_job(c, expect(c.Post("/embedding/train", "{}", "application/json"), 202, "train"), "train");
    Json summary = expect(c.Get("/embedding/model"), 200, "model");
    Json encoded = expect(c.Post("/embedding/encode", Json{{"sequence_id", "demo/p1/wave/1"}}.dump(), "application/json"),
                          200, "encode");

    const std::vector<std::string> referents{"wave", "raise", "crouch"};
    for (const auto& r : referents)
        await_job(c, expect(c.Post("/consensus/" + r, "", "application/json"), 202, "consensus"), "consensus");
    const std::string payload = c.Get("/consensus/wave")->body;
    auto again = c.Post("/consensus/wave", "", "application/json");
    Json again_body = expect(again, 200, "repeat consensus");
    const bool cache_hit = again_body["cached"] == true && again_body["result"] == Json::parse(payload);

    Json created = expect(c.Post("/clusters",
                                 Json{{"scope", "all"},
                                      {"seeds", {"demo/p1/wave/1", "demo/p1/raise/1", "demo/p1/crouch/1"}}}
                                     .dump(),
                                 "application/json"),
                          201, "cluster create");
    const std::string id = created["id"];
    await_job(c, expect(c.Post("/clusters/" + id + "/run", "", "application/json"), 202, "cluster run"), "cluster run");
    expect(c.Post("/clusters/" + id + "/reassign", Json{{"sequence_id", "demo/p2/wave/2"}, {"cluster", 1}}.dump(),
                  "application/json"),
           200, "reassign");
    Json model_before = expect(c.Get("/clusters/" + id), 200, "cluster")["model"];

    auto exported = c.Get("/export");
    expect(exported, 200, "export");

    Running second;
    auto f = second.client();
    expect(f.Post("/export", exported->body, "application/json"), 200, "import");

    std::vector<std::string> diffs;
    for (const auto& r : referents) {
        const double a = Json::parse(c.Get("/consensus/" + r)->body)["variance"];
        const double b = expect(f.Get("/consensus/" + r), 200, "imported consensus")["variance"];
        if (a != b) diffs.push_back(r + " variance");
    }
    Json model_after = expect(f.Get("/clusters/" + id), 200, "imported cluster")["model"];
    if (model_after["assignments"] != model_before["assignments"]) diffs.push_back("assignments");
    if (model_after["pinned"] != model_before["pinned"]) diffs.push_back("pinned");
    Json encoded_after = expect(
        f.Post("/embedding/encode", Json{{"sequence_id", "demo/p1/wave/1"}}.dump(), "application/json"), 200, "encode");
    if (encoded_after != encoded) diffs.push_back("encoding");
    Json imported_hit = expect(f.Post("/consensus/wave", "", "application/json"), 200, "imported consensus hit");
    if (imported_hit["cached"] != true) diffs.push_back("imported cache");

    std::string detail = "24 sequences, h=" + summary["config"]["hidden_units"].dump() + ", 3 referents, " +
                         std::to_string(model_before["assignments"].size()) + " assignments; repeat consensus " +
                         (cache_hit ? "served from cache" : "NOT served from cache");
    for (const auto& d : diffs) detail += "; mismatch: " + d;
    return {cache_hit && diffs.empty(), detail};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"DTW oracle equivalence", 10, dtw_oracle},
        {"DBA monotonicity", 60, dba_monotone},
        {"variance consensus fidelity", 0, consensus_fidelity},
        {"k-means separation and pinning", 0, kmeans_separation},
        {"VAE gradient check", 0, vae_gradient},
        {"VAE training sanity", 300, vae_training},
        {"map grid contract", 0, map_grid},
        {"service round trip", 0, service_round_trip},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
            o.ok = false;
            o.detail += "; over the " + fmt(c.time_limit_s) + " s limit";
        }
        failed += !o.ok;
        std::printf("%s  %-32s %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
    return failed == 0 ? 0 : 1;
}
