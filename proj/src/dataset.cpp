#include "gesturemap/dataset.hpp"

#include "gesturemap/digest.hpp"
#include "gesturemap/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

namespace gmap {

using nlohmann::json;

std::array<double, kPoseDim> flatten(const Pose& pose) {
    std::array<double, kPoseDim> out{};
    for (std::size_t j = 0; j < kJointCount; ++j)
        for (std::size_t a = 0; a < 3; ++a) out[3 * j + a] = pose.joints[j][a];
    return out;
}

Pose unflatten(std::span<const double> values) {
    if (values.size() != kPoseDim)
        throw Error(ErrorCode::domain, "pose vector must have " + std::to_string(kPoseDim) +
                                           " components, got " + std::to_string(values.size()));
    Pose p;
    for (std::size_t j = 0; j < kJointCount; ++j)
        for (std::size_t a = 0; a < 3; ++a) p.joints[j][a] = values[3 * j + a];
    return p;
}

bool is_finite(const Pose& pose) {
    for (const auto& j : pose.joints)
        for (double v : j)
            if (!std::isfinite(v)) return false;
    return true;
}

const std::vector<std::string>& default_joint_names() {
    static const std::vector<std::string> names = {
        "HipCenter",     "Spine",      "ShoulderCenter", "Head",      "ShoulderLeft",
        "ElbowLeft",     "WristLeft",  "HandLeft",       "ShoulderRight", "ElbowRight",
        "WristRight",    "HandRight",  "HipLeft",        "KneeLeft",  "AnkleLeft",
        "FootLeft",      "HipRight",   "KneeRight",      "AnkleRight", "FootRight"};
    return names;
}

namespace {

std::string fold_name(std::string_view name) {
    std::string out;
    for (char c : name)
        if (std::isalnum(static_cast<unsigned char>(c)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::optional<std::size_t> find_joint(const std::vector<std::string>& names,
                                      std::initializer_list<std::string_view> aliases) {
    for (auto alias : aliases)
        for (std::size_t i = 0; i < names.size(); ++i)
            if (fold_name(names[i]) == alias) return i;
    return std::nullopt;
}

}  // namespace

TorsoJoints resolve_torso_joints(const std::vector<std::string>& joint_names) {
    auto hip = find_joint(joint_names, {"hipcenter", "spinebase", "pelvis", "hip"});
    auto shoulder = find_joint(joint_names, {"shouldercenter", "spineshoulder", "neck"});
    if (!hip || !shoulder)
        throw Error(ErrorCode::schema,
                    "joint list does not identify both hip-center and shoulder-center joints");
    return {*hip, *shoulder};
}

Pose normalize_pose(const Pose& raw, const TorsoJoints& torso) {
    const Joint origin = raw.joints[torso.hip_center];
    const Joint& top = raw.joints[torso.shoulder_center];
    const double length = std::hypot(top[0] - origin[0], top[1] - origin[1], top[2] - origin[2]);
    if (!(length >= kMinTorsoLength))
        throw Error(ErrorCode::degenerate, "torso length " + std::to_string(length) +
                                               " below minimum; cannot normalize pose");
    Pose out;
    for (std::size_t j = 0; j < kJointCount; ++j)
        for (std::size_t a = 0; a < 3; ++a)
            out.joints[j][a] = (raw.joints[j][a] - origin[a]) / length;
    return out;
}

Pose normalize_pose(const Pose& raw, const std::vector<std::string>& joint_names) {
    return normalize_pose(raw, resolve_torso_joints(joint_names));
}

Series GestureSequence::to_series() const {
    std::vector<double> data;
    data.reserve(frames.size() * kPoseDim);
    for (const auto& p : frames) {
        auto flat = flatten(p);
        data.insert(data.end(), flat.begin(), flat.end());
    }
    return Series(kPoseDim, std::move(data));
}

std::string make_sequence_id(std::string_view dataset_id, std::string_view participant,
                             std::string_view referent, int trial) {
    std::string id;
    id.append(dataset_id).append("/").append(participant).append("/").append(referent);
    id.append("/").append(std::to_string(trial));
    return id;
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

json pose_to_json(const Pose& p) {
    json frame = json::array();
    for (const auto& j : p.joints) frame.push_back({j[0], j[1], j[2]});
    return frame;
}

json corpus_to_json(const std::vector<DatasetDescriptor>& datasets,
                    const std::vector<GestureSequence>& sequences, bool normalized) {
    json doc;
    doc["format"] = "gesturemap-corpus";
    doc["version"] = 1;
    doc["normalized"] = normalized;
    doc["datasets"] = json::array();
    for (const auto& d : datasets) {
        json jd;
        jd["id"] = d.id;
        jd["name"] = d.name;
        jd["frame_rate"] = d.frame_rate;
        jd["joints"] = d.joints;
        jd["sequences"] = json::array();
        for (const auto& s : sequences) {
            if (s.dataset_id != d.id) continue;
            json js;
            js["id"] = s.id;
            js["participant"] = s.participant;
            js["referent"] = s.referent;
            js["trial"] = s.trial;
            js["dropped_frames"] = s.dropped_frames;
            js["frames"] = json::array();
            for (const auto& p : s.frames) js["frames"].push_back(pose_to_json(p));
            jd["sequences"].push_back(std::move(js));
        }
        doc["datasets"].push_back(std::move(jd));
    }
    return doc;
}

}  // namespace

Corpus::Corpus(std::vector<DatasetDescriptor> datasets, std::vector<GestureSequence> sequences,
               bool normalized)
    : datasets_(std::move(datasets)), sequences_(std::move(sequences)), normalized_(normalized) {
    std::map<std::string, std::size_t, std::less<>> dataset_rank;
    for (std::size_t i = 0; i < datasets_.size(); ++i) {
        const auto& d = datasets_[i];
        if (d.joints.size() != kJointCount)
            throw Error(ErrorCode::schema, "dataset '" + d.id + "' must name exactly " +
                                               std::to_string(kJointCount) + " joints");
        if (!dataset_rank.emplace(d.id, i).second)
            throw Error(ErrorCode::validation, "duplicate dataset id '" + d.id + "'");
    }

    std::set<std::tuple<std::string, std::string, std::string, int>> keys;
    for (const auto& s : sequences_) {
        if (!dataset_rank.contains(s.dataset_id))
            throw Error(ErrorCode::validation,
                        "sequence '" + s.id + "' references unknown dataset '" + s.dataset_id + "'");
        if (s.frames.empty())
            throw Error(ErrorCode::schema, "sequence '" + s.id + "' has no frames");
        if (s.trial < 1)
            throw Error(ErrorCode::schema, "sequence '" + s.id + "' has trial < 1");
        for (const auto& p : s.frames)
            if (!is_finite(p))
                throw Error(ErrorCode::schema, "sequence '" + s.id + "' has non-finite coordinates");
        if (!keys.emplace(s.dataset_id, s.participant, s.referent, s.trial).second)
            throw Error(ErrorCode::validation, "duplicate (dataset, participant, referent, trial) for '" +
                                                   s.id + "'");
    }

    // Sequences are kept grouped by dataset so the canonical document
    // round-trips without reordering.
    std::stable_sort(sequences_.begin(), sequences_.end(), [&](const auto& a, const auto& b) {
        return dataset_rank.find(a.dataset_id)->second < dataset_rank.find(b.dataset_id)->second;
    });

    for (std::size_t i = 0; i < sequences_.size(); ++i)
        if (!index_.emplace(sequences_[i].id, i).second)
            throw Error(ErrorCode::validation, "duplicate sequence id '" + sequences_[i].id + "'");

    content_hash_ = sha256_hex(corpus_to_json(datasets_, sequences_, normalized_).dump());
}

std::size_t Corpus::pose_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sequences_) n += s.frames.size();
    return n;
}

const GestureSequence* Corpus::find(std::string_view id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &sequences_[it->second];
}

const GestureSequence& Corpus::at(std::string_view id) const {
    if (auto* s = find(id)) return *s;
    throw Error(ErrorCode::not_found, "unknown sequence '" + std::string(id) + "'");
}

const DatasetDescriptor* Corpus::find_dataset(std::string_view id) const {
    for (const auto& d : datasets_)
        if (d.id == id) return &d;
    return nullptr;
}

std::vector<std::string> Corpus::referents() const {
    std::vector<std::string> out;
    std::set<std::string, std::less<>> seen;
    for (const auto& s : sequences_)
        if (seen.insert(s.referent).second) out.push_back(s.referent);
    return out;
}

std::vector<const GestureSequence*> Corpus::by_referent(std::string_view referent) const {
    std::vector<const GestureSequence*> out;
    for (const auto& s : sequences_)
        if (s.referent == referent) out.push_back(&s);
    return out;
}

Corpus Corpus::normalized_copy() const {
    if (normalized_) return *this;
    std::map<std::string, TorsoJoints, std::less<>> torso;
    for (const auto& d : datasets_) torso.emplace(d.id, resolve_torso_joints(d.joints));
    auto seqs = sequences_;
    for (auto& s : seqs) {
        const auto& t = torso.find(s.dataset_id)->second;
        for (auto& p : s.frames) p = normalize_pose(p, t);
    }
    return Corpus(datasets_, std::move(seqs), true);
}

// ---------------------------------------------------------------------------
// Parsing

DatasetFormat parse_format(std::string_view name) {
    if (name == "canonical-json" || name == "json") return DatasetFormat::canonical_json;
    if (name == "frames-csv" || name == "csv") return DatasetFormat::frames_csv;
    throw Error(ErrorCode::validation, "unknown dataset format '" + std::string(name) + "'");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string scalar_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    return v.dump();
}

// Returns nullopt for a frame with missing coordinates.
std::optional<Pose> pose_from_json(const json& frame, const std::string& seq_name) {
    if (!frame.is_array() || frame.size() != kJointCount)
        throw Error(ErrorCode::schema, "sequence '" + seq_name + "': frame must hold exactly " +
                                           std::to_string(kJointCount) + " joints");
    Pose p;
    bool complete = true;
    for (std::size_t j = 0; j < kJointCount; ++j) {
        const auto& jt = frame[j];
        if (!jt.is_array() || jt.size() != 3)
            throw Error(ErrorCode::schema,
                        "sequence '" + seq_name + "': joint " + std::to_string(j) + " must be [x,y,z]");
        for (std::size_t a = 0; a < 3; ++a) {
            if (jt[a].is_null()) {
                p.joints[j][a] = kNaN;
            } else if (jt[a].is_number()) {
                p.joints[j][a] = jt[a].get<double>();
            } else {
                throw Error(ErrorCode::parse, "sequence '" + seq_name + "': non-numeric coordinate");
            }
            if (!std::isfinite(p.joints[j][a])) complete = false;
        }
    }
    if (!complete) return std::nullopt;
    return p;
}

void dataset_from_json(const json& jd, std::vector<DatasetDescriptor>& datasets,
                       std::vector<GestureSequence>& sequences) {
    if (!jd.is_object() || !jd.contains("id"))
        throw Error(ErrorCode::parse, "dataset document must be an object with an 'id'");
    DatasetDescriptor d;
    d.id = scalar_string(jd.at("id"));
    d.name = jd.contains("name") ? jd["name"].get<std::string>() : d.id;
    d.frame_rate = jd.value("frame_rate", 30.0);
    d.joints = jd.contains("joints") ? jd["joints"].get<std::vector<std::string>>()
                                     : default_joint_names();
    if (d.joints.size() != kJointCount)
        throw Error(ErrorCode::schema, "dataset '" + d.id + "' must name exactly " +
                                           std::to_string(kJointCount) + " joints");

    const json empty = json::array();
    const json& seqs = jd.contains("sequences") ? jd["sequences"] : empty;
    for (std::size_t r = 0; r < seqs.size(); ++r) {
        const auto& js = seqs[r];
        if (!js.is_object() || !js.contains("participant") || !js.contains("referent") ||
            !js.contains("frames"))
            throw Error(ErrorCode::parse, "dataset '" + d.id + "' record " + std::to_string(r) +
                                              ": expected {participant, referent, trial, frames}");
        GestureSequence s;
        s.dataset_id = d.id;
        s.participant = scalar_string(js["participant"]);
        s.referent = js["referent"].get<std::string>();
        s.trial = js.value("trial", 1);
        s.id = js.contains("id") ? js["id"].get<std::string>()
                                 : make_sequence_id(d.id, s.participant, s.referent, s.trial);
        s.dropped_frames = js.value("dropped_frames", std::size_t{0});
        for (const auto& frame : js["frames"]) {
            if (auto p = pose_from_json(frame, s.id))
                s.frames.push_back(*p);
            else
                ++s.dropped_frames;
        }
        sequences.push_back(std::move(s));
    }
    datasets.push_back(std::move(d));
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_coordinate(std::string_view text, std::size_t line_no) {
    text = trim(text);
    if (text.empty() || text == "nan" || text == "NaN" || text == "NAN") return kNaN;
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": cannot parse number '" +
                                          std::string(text) + "'");
    return v;
}

long parse_integer(std::string_view text, std::size_t line_no, const char* what) {
    text = trim(text);
    long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": invalid " + what +
                                          " '" + std::string(text) + "'");
    return v;
}

Corpus parse_csv(std::istream& in) {
    constexpr std::size_t kMeta = 5;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw Error(ErrorCode::parse, "line 1: missing header");
    ++line_no;
    {
        auto header = split_csv(line);
        if (header.size() != kMeta + kPoseDim || trim(header[0]) != "dataset" ||
            trim(header[4]) != "frame")
            throw Error(ErrorCode::parse,
                        "line 1: header must be dataset,participant,referent,trial,frame,j0x,...,j19z");
    }

    struct Pending {
        GestureSequence seq;
        std::vector<std::pair<long, std::optional<Pose>>> frames;
    };
    std::vector<Pending> pending;
    std::map<std::string, std::size_t> by_key;
    std::vector<std::string> dataset_order;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cols = split_csv(line);
        if (cols.size() < kMeta)
            throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": malformed record");
        const std::string dataset(trim(cols[0]));
        const std::string participant(trim(cols[1]));
        const std::string referent(trim(cols[2]));
        const int trial = static_cast<int>(parse_integer(cols[3], line_no, "trial"));
        const std::string seq_id = make_sequence_id(dataset, participant, referent, trial);
        if (cols.size() != kMeta + kPoseDim)
            throw Error(ErrorCode::schema, "sequence '" + seq_id + "' (line " + std::to_string(line_no) +
                                               "): expected " + std::to_string(kPoseDim) +
                                               " coordinates, got " +
                                               std::to_string(cols.size() - kMeta));
        const long frame_index = parse_integer(cols[4], line_no, "frame index");

        Pose p;
        bool complete = true;
        for (std::size_t k = 0; k < kPoseDim; ++k) {
            double v = parse_coordinate(cols[kMeta + k], line_no);
            p.joints[k / 3][k % 3] = v;
            if (!std::isfinite(v)) complete = false;
        }

        auto [it, inserted] = by_key.emplace(seq_id, pending.size());
        if (inserted) {
            Pending pd;
            pd.seq.id = seq_id;
            pd.seq.dataset_id = dataset;
            pd.seq.participant = participant;
            pd.seq.referent = referent;
            pd.seq.trial = trial;
            pending.push_back(std::move(pd));
            if (std::find(dataset_order.begin(), dataset_order.end(), dataset) == dataset_order.end())
                dataset_order.push_back(dataset);
        }
        pending[it->second].frames.emplace_back(frame_index,
                                                complete ? std::optional<Pose>(p) : std::nullopt);
    }

    std::vector<GestureSequence> sequences;
    for (auto& pd : pending) {
        std::stable_sort(pd.frames.begin(), pd.frames.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 1; i < pd.frames.size(); ++i)
            if (pd.frames[i].first == pd.frames[i - 1].first)
                throw Error(ErrorCode::schema, "sequence '" + pd.seq.id + "': duplicate frame index " +
                                                   std::to_string(pd.frames[i].first));
        for (auto& [idx, pose] : pd.frames) {
            if (pose)
                pd.seq.frames.push_back(*pose);
            else
                ++pd.seq.dropped_frames;
        }
        if (pd.seq.frames.empty())
            throw Error(ErrorCode::schema, "sequence '" + pd.seq.id + "' has no complete frames");
        sequences.push_back(std::move(pd.seq));
    }

    std::vector<DatasetDescriptor> datasets;
    for (const auto& id : dataset_order)
        datasets.push_back({id, id, default_joint_names(), 30.0});
    return Corpus(std::move(datasets), std::move(sequences), false);
}

Corpus corpus_from_json(const json& doc) {
    std::vector<DatasetDescriptor> datasets;
    std::vector<GestureSequence> sequences;
    bool normalized = false;
    if (doc.is_object() && doc.contains("datasets")) {
        normalized = doc.value("normalized", false);
        for (const auto& jd : doc["datasets"]) dataset_from_json(jd, datasets, sequences);
    } else {
        dataset_from_json(doc, datasets, sequences);
    }
    for (const auto& s : sequences)
        if (s.frames.empty())
            throw Error(ErrorCode::schema, "sequence '" + s.id + "' has no complete frames");
    return Corpus(std::move(datasets), std::move(sequences), normalized);
}

json parse_json_text(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("malformed JSON at byte ") +
                                          std::to_string(e.byte) + ": " + e.what());
    }
}

}  // namespace

Corpus parse_dataset(std::istream& in, DatasetFormat format) {
    if (format == DatasetFormat::frames_csv) return parse_csv(in);
    std::stringstream buf;
    buf << in.rdbuf();
    return corpus_from_json(parse_json_text(buf.str()));
}

Corpus parse_dataset_string(std::string_view text, DatasetFormat format) {
    std::istringstream in{std::string(text)};
    return parse_dataset(in, format);
}

Corpus merge(const std::vector<Corpus>& parts) {
    std::vector<DatasetDescriptor> datasets;
    std::vector<GestureSequence> sequences;
    std::optional<bool> normalized;
    for (const auto& c : parts) {
        if (c.datasets().empty()) continue;
        if (normalized && *normalized != c.normalized())
            throw Error(ErrorCode::validation, "cannot merge normalized and raw corpora");
        normalized = c.normalized();
        datasets.insert(datasets.end(), c.datasets().begin(), c.datasets().end());
        sequences.insert(sequences.end(), c.sequences().begin(), c.sequences().end());
    }
    return Corpus(std::move(datasets), std::move(sequences), normalized.value_or(false));
}

std::string serialize_corpus(const Corpus& corpus) {
    return corpus_to_json(corpus.datasets(), corpus.sequences(), corpus.normalized()).dump();
}

Corpus deserialize_corpus(std::string_view text) { return corpus_from_json(parse_json_text(text)); }

Corpus load_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open corpus file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize_corpus(buf.str());
}

void save_corpus_file(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::internal, "cannot write corpus file '" + path + "'");
    out << serialize_corpus(corpus);
}

}  // namespace gmap
