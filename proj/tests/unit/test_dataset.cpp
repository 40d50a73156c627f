#include "gesturemap/dataset.hpp"
#include "gesturemap/error.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>
#include <json.hpp>

#include <random>
#include <sstream>

using namespace gmap;

namespace {

Pose random_pose(std::mt19937_64& rng) {
    Pose p;
    for (auto& j : p.joints)
        for (double& v : j) v = testing::normal(rng);
    return p;
}

std::string one_sequence_json(int frames) {
    nlohmann::json doc;
    doc["id"] = "ds";
    doc["joints"] = default_joint_names();
    nlohmann::json seq = {{"participant", "p1"}, {"referent", "wave"}, {"trial", 1}, {"frames", nlohmann::json::array()}};
    for (int f = 0; f < frames; ++f) {
        nlohmann::json frame = nlohmann::json::array();
        for (std::size_t j = 0; j < kJointCount; ++j) frame.push_back({0.1 * j, 1.0 + f, 0.5});
        seq["frames"].push_back(frame);
    }
    doc["sequences"] = {seq};
    return doc.dump();
}

std::string csv_header() {
    std::string h = "dataset,participant,referent,trial,frame";
    for (int j = 0; j < 20; ++j)
        for (char a : {'x', 'y', 'z'}) h += ",j" + std::to_string(j) + a;
    return h + "\n";
}

std::string csv_row(const std::string& ds, const std::string& part, const std::string& ref, int trial, int frame,
                    int values, double base = 0.0) {
    std::string r = ds + "," + part + "," + ref + "," + std::to_string(trial) + "," + std::to_string(frame);
    for (int k = 0; k < values; ++k) r += "," + std::to_string(base + 0.01 * k);
    return r + "\n";
}

// Overwrites the final value of the final row.
void replace_last_field(std::string& text, const std::string& value) {
    const auto end = text.rfind('\n');
    const auto start = text.rfind(',', end) + 1;
    text.replace(start, end - start, value);
}

}  // namespace

TEST_CASE("flatten is joint-major and round-trips") {
    Pose zero;
    auto flat = flatten(zero);
    CHECK(flat.size() == 60);
    for (double v : flat) CHECK(v == 0.0);

    Pose p;
    p.joints[3][1] = 7.5;
    CHECK(flatten(p)[10] == 7.5);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        Pose r = random_pose(rng);
        auto f = flatten(r);
        CHECK(unflatten(f) == r);
    }
    CHECK_THROWS_AS(unflatten(std::vector<double>(59)), Error);
}

TEST_CASE("normalize_pose") {
    const auto& names = default_joint_names();
    Pose standing = testing::skeleton(0.2, 0.2, 0.0);  // hip at origin, torso length 1

    SUBCASE("fixed point") {
        Pose n = normalize_pose(standing, names);
        for (std::size_t j = 0; j < kJointCount; ++j)
            for (int a = 0; a < 3; ++a) CHECK(n.joints[j][a] == doctest::Approx(standing.joints[j][a]).epsilon(1e-12));
    }

    SUBCASE("translation and scale invariance, idempotence") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            Pose p = random_pose(rng);
            const double s = testing::uniform(rng, 0.1, 10.0);
            const Joint t{testing::uniform(rng, -5, 5), testing::uniform(rng, -5, 5), testing::uniform(rng, -5, 5)};
            Pose moved;
            for (std::size_t j = 0; j < kJointCount; ++j)
                for (int a = 0; a < 3; ++a) moved.joints[j][a] = s * p.joints[j][a] + t[a];
            Pose a = normalize_pose(p, names), b = normalize_pose(moved, names);
            Pose twice = normalize_pose(a, names);
            for (std::size_t j = 0; j < kJointCount; ++j)
                for (int k = 0; k < 3; ++k) {
                    CHECK(std::abs(a.joints[j][k] - b.joints[j][k]) < 1e-9);
                    CHECK(std::abs(twice.joints[j][k] - a.joints[j][k]) < 1e-12);
                }
            CHECK(std::abs(a.joints[0][0]) < 1e-9);
            const auto& sc = a.joints[2];
            CHECK(std::abs(std::hypot(sc[0], sc[1], sc[2]) - 1.0) < 1e-9);
        }
    }

    SUBCASE("translated by (5,5,5) gives the same pose") {
        Pose moved = standing;
        for (auto& j : moved.joints)
            for (double& v : j) v += 5.0;
        Pose a = normalize_pose(standing, names), b = normalize_pose(moved, names);
        for (std::size_t j = 0; j < kJointCount; ++j)
            for (int k = 0; k < 3; ++k) CHECK(std::abs(a.joints[j][k] - b.joints[j][k]) < 1e-9);
    }

    SUBCASE("degenerate torso") {
        Pose collapsed;
        try {
            normalize_pose(collapsed, names);
            FAIL("expected degenerate-skeleton error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::degenerate);
        }
    }

    SUBCASE("unidentifiable torso joints") {
        std::vector<std::string> anon(20, "j");
        CHECK_THROWS_AS(normalize_pose(standing, anon), Error);
    }
}

TEST_CASE("canonical-json parse") {
    Corpus c = parse_dataset_string(one_sequence_json(2), DatasetFormat::canonical_json);
    REQUIRE(c.sequences().size() == 1);
    CHECK(c.sequences()[0].length() == 2);
    CHECK(c.sequences()[0].id == "ds/p1/wave/1");
    CHECK(c.datasets()[0].joints == default_joint_names());
    CHECK_FALSE(c.normalized());
    CHECK(c.sequences()[0].frames[1].joints[0][1] == 2.0);  // raw, not normalized

    SUBCASE("wrong joint count is a schema error naming the sequence") {
        auto doc = nlohmann::json::parse(one_sequence_json(1));
        doc["sequences"][0]["frames"][0].erase(0);
        try {
            parse_dataset_string(doc.dump(), DatasetFormat::canonical_json);
            FAIL("expected schema error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::schema);
            CHECK(std::string(e.what()).find("ds/p1/wave/1") != std::string::npos);
        }
    }

    SUBCASE("malformed JSON is a parse error") {
        try {
            parse_dataset_string("{\"id\": ", DatasetFormat::canonical_json);
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse);
        }
    }

    SUBCASE("missing coordinates drop the frame and are counted") {
        auto doc = nlohmann::json::parse(one_sequence_json(3));
        doc["sequences"][0]["frames"][1][4][2] = nullptr;
        Corpus d = parse_dataset_string(doc.dump(), DatasetFormat::canonical_json);
        CHECK(d.sequences()[0].length() == 2);
        CHECK(d.sequences()[0].dropped_frames == 1);
    }
}

TEST_CASE("frames-csv parse") {
    std::string text = csv_header() + csv_row("kin", "p1", "wave", 1, 1, 60, 1.0) +
                       csv_row("kin", "p1", "wave", 1, 0, 60, 0.0) + csv_row("kin", "p2", "wave", 1, 0, 60, 2.0);
    Corpus c = parse_dataset_string(text, DatasetFormat::frames_csv);
    REQUIRE(c.sequences().size() == 2);
    const auto& s = c.at("kin/p1/wave/1");
    CHECK(s.length() == 2);
    CHECK(s.frames[0].joints[0][0] == 0.0);  // ordered by frame index
    CHECK(s.frames[1].joints[0][0] == 1.0);
    CHECK(c.pose_count() == 3);

    SUBCASE("59 values is a schema error for that sequence") {
        std::string bad = csv_header() + csv_row("kin", "p9", "jump", 2, 0, 59);
        try {
            parse_dataset_string(bad, DatasetFormat::frames_csv);
            FAIL("expected schema error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::schema);
            CHECK(std::string(e.what()).find("kin/p9/jump/2") != std::string::npos);
        }
    }

    SUBCASE("non-numeric value is a parse error with the line") {
        std::string bad = csv_header() + csv_row("kin", "p1", "wave", 1, 0, 60);
        replace_last_field(bad, "abc!");
        try {
            parse_dataset_string(bad, DatasetFormat::frames_csv);
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse);
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }

    SUBCASE("nan drops a frame") {
        std::string t = csv_header() + csv_row("kin", "p1", "wave", 1, 0, 60) + csv_row("kin", "p1", "wave", 1, 1, 60);
        replace_last_field(t, "nan");
        Corpus d = parse_dataset_string(t, DatasetFormat::frames_csv);
        CHECK(d.sequences()[0].length() == 1);
        CHECK(d.sequences()[0].dropped_frames == 1);
    }
}

TEST_CASE("merge and corpus invariants") {
    Corpus a = parse_dataset_string(one_sequence_json(2), DatasetFormat::canonical_json);
    std::string csv = csv_header() + csv_row("kin", "p1", "wave", 1, 0, 60) + csv_row("kin", "p1", "wave", 1, 1, 60) +
                      csv_row("kin", "p1", "wave", 1, 2, 60);
    Corpus b = parse_dataset_string(csv, DatasetFormat::frames_csv);
    Corpus m = merge({a, b});
    CHECK(m.datasets().size() == 2);
    CHECK(m.pose_count() == a.pose_count() + b.pose_count());
    CHECK(m.referents() == std::vector<std::string>{"wave"});
    CHECK(m.by_referent("wave").size() == 2);

    CHECK_THROWS_AS(merge({a, a}), Error);                           // duplicate dataset id
    CHECK_THROWS_AS(merge({a, a.normalized_copy()}), Error);         // mixed regimes
}

TEST_CASE("content hash and serialization round trip") {
    Corpus a = parse_dataset_string(one_sequence_json(3), DatasetFormat::canonical_json);
    const std::string once = serialize_corpus(a);
    Corpus b = deserialize_corpus(once);
    CHECK(serialize_corpus(b) == once);
    CHECK(b.content_hash() == a.content_hash());
    CHECK(a.content_hash().size() == 64);

    // Same bytes, same hash.
    Corpus again = parse_dataset_string(one_sequence_json(3), DatasetFormat::canonical_json);
    CHECK(again.content_hash() == a.content_hash());

    // Any change to a sequence changes the hash.
    Corpus changed = parse_dataset_string(one_sequence_json(4), DatasetFormat::canonical_json);
    CHECK(changed.content_hash() != a.content_hash());
    CHECK(a.normalized_copy().content_hash() != a.content_hash());
}

TEST_CASE("normalized corpus copy") {
    Corpus a = parse_dataset_string(one_sequence_json(2), DatasetFormat::canonical_json);
    Corpus n = a.normalized_copy();
    CHECK(n.normalized());
    for (const auto& s : n.sequences())
        for (const auto& p : s.frames) {
            CHECK(std::abs(p.joints[0][0]) < 1e-9);
            const auto& sc = p.joints[2];
            CHECK(std::abs(std::hypot(sc[0] - p.joints[0][0], sc[1] - p.joints[0][1], sc[2] - p.joints[0][2]) - 1.0) < 1e-9);
        }
}

TEST_CASE("duplicate (dataset, participant, referent, trial) is rejected") {
    auto doc = nlohmann::json::parse(one_sequence_json(1));
    doc["sequences"].push_back(doc["sequences"][0]);
    doc["sequences"][1]["id"] = "other";
    CHECK_THROWS_AS(parse_dataset_string(doc.dump(), DatasetFormat::canonical_json), Error);
}
