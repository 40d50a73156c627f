#pragma once

#include "gesturemap/series.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gmap {

inline constexpr std::size_t kJointCount = 20;
inline constexpr std::size_t kPoseDim = kJointCount * 3;

using Joint = std::array<double, 3>;

/// One skeleton frame: 20 joints, each (x, y, z).
struct Pose {
    std::array<Joint, kJointCount> joints{};

    bool operator==(const Pose&) const = default;
};

/// Joint-major flattening: joint j's axis a lands at index 3*j + a.
std::array<double, kPoseDim> flatten(const Pose& pose);
Pose unflatten(std::span<const double> values);

bool is_finite(const Pose& pose);

/// Kinect v1 joint order, used when a source does not name its joints.
const std::vector<std::string>& default_joint_names();

/// Indices of the hip-center and shoulder-center joints, resolved from
/// joint names (case and punctuation insensitive, common aliases accepted).
struct TorsoJoints {
    std::size_t hip_center;
    std::size_t shoulder_center;
};
TorsoJoints resolve_torso_joints(const std::vector<std::string>& joint_names);

inline constexpr double kMinTorsoLength = 1e-6;

/// Translate the hip center to the origin and scale so the torso
/// (hip center to shoulder center) has unit length. Throws
/// ErrorCode::degenerate when the torso is shorter than kMinTorsoLength.
Pose normalize_pose(const Pose& raw, const TorsoJoints& torso);
Pose normalize_pose(const Pose& raw, const std::vector<std::string>& joint_names);

struct DatasetDescriptor {
    std::string id;
    std::string name;
    std::vector<std::string> joints;
    double frame_rate = 30.0;

    bool operator==(const DatasetDescriptor&) const = default;
};

struct GestureSequence {
    std::string id;
    std::string dataset_id;
    std::string participant;
    std::string referent;
    int trial = 1;
    std::vector<Pose> frames;
    /// Frames removed at parse time because a joint was missing.
    std::size_t dropped_frames = 0;

    std::size_t length() const noexcept { return frames.size(); }
    /// Frames flattened to a 60-D series.
    Series to_series() const;

    bool operator==(const GestureSequence&) const = default;
};

std::string make_sequence_id(std::string_view dataset_id, std::string_view participant,
                             std::string_view referent, int trial);

/// Immutable collection of datasets and their sequences. Construction
/// validates cross-references and uniqueness and computes the content hash.
class Corpus {
public:
    Corpus() : Corpus(std::vector<DatasetDescriptor>{}, std::vector<GestureSequence>{}, false) {}
    Corpus(std::vector<DatasetDescriptor> datasets, std::vector<GestureSequence> sequences,
           bool normalized);

    const std::vector<DatasetDescriptor>& datasets() const noexcept { return datasets_; }
    const std::vector<GestureSequence>& sequences() const noexcept { return sequences_; }
    bool normalized() const noexcept { return normalized_; }
    const std::string& content_hash() const noexcept { return content_hash_; }

    /// Total number of poses over all sequences.
    std::size_t pose_count() const noexcept;
    bool empty() const noexcept { return sequences_.empty(); }

    const GestureSequence* find(std::string_view id) const;
    const GestureSequence& at(std::string_view id) const;
    const DatasetDescriptor* find_dataset(std::string_view id) const;

    /// Referent names in first-appearance order, each once.
    std::vector<std::string> referents() const;
    std::vector<const GestureSequence*> by_referent(std::string_view referent) const;

    /// Copy with every pose normalized using its dataset's joint names.
    Corpus normalized_copy() const;

private:
    std::vector<DatasetDescriptor> datasets_;
    std::vector<GestureSequence> sequences_;
    bool normalized_ = false;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::string content_hash_;
};

enum class DatasetFormat { canonical_json, frames_csv };
DatasetFormat parse_format(std::string_view name);

/// Parse one stream. Poses are returned raw (not normalized). Frames with
/// missing coordinates are dropped and counted on their sequence.
Corpus parse_dataset(std::istream& in, DatasetFormat format);
Corpus parse_dataset_string(std::string_view text, DatasetFormat format);

/// Combine fragments into one corpus. Dataset ids must be distinct and all
/// fragments must share a normalization regime.
Corpus merge(const std::vector<Corpus>& parts);

/// Canonical corpus document (sorted keys, shortest round-trip numbers).
std::string serialize_corpus(const Corpus& corpus);
/// Accepts a corpus document or a single canonical dataset document.
Corpus deserialize_corpus(std::string_view text);

Corpus load_corpus_file(const std::string& path);
void save_corpus_file(const Corpus& corpus, const std::string& path);

}  // namespace gmap
