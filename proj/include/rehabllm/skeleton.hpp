#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rehabllm/geometry.hpp"
#include "rehabllm/matrix.hpp"

namespace rehab {

enum class DatasetId { UIPRMD, REHAB24_6, GENERIC };
enum class Units { Meters, Millimeters, Normalized };
enum class Label { Correct, Incorrect };
enum class Side { Left, Right, Unknown };

std::string_view to_string(DatasetId id);
std::string_view to_string(Units u);
std::string_view to_string(Label l);  // "correct" / "incorrect"
std::string_view to_string(Side s);
DatasetId dataset_from_string(std::string_view s);
Units units_from_string(std::string_view s);
Label label_from_string(std::string_view s);
Side side_from_string(std::string_view s);

inline Label opposite(Label l) { return l == Label::Correct ? Label::Incorrect : Label::Correct; }

// Joint layout of one capture system. Construct through make() so the
// name/index bijection and the unit up axis are always validated.
class SkeletonSpec {
 public:
  static SkeletonSpec make(DatasetId dataset, std::vector<std::string> joint_names, Vec3 up_axis,
                           Units units);

  /// Kinect v2 layout shipped with UI-PRMD (22 joints, y up).
  static SkeletonSpec uiprmd();
  /// Motion-capture layout used for REHAB24-6 (26 joints, z up).
  static SkeletonSpec rehab24_6();
  static SkeletonSpec builtin(DatasetId dataset);

  /// Reads a skeleton description file (see configs/skeletons/).
  static SkeletonSpec load(const std::filesystem::path& path);

  DatasetId dataset_id() const noexcept { return dataset_; }
  const std::vector<std::string>& joint_names() const noexcept { return joint_names_; }
  std::size_t joint_count() const noexcept { return joint_names_.size(); }
  static constexpr std::size_t channel_count() noexcept { return 3; }
  std::size_t column_count() const noexcept { return joint_count() * channel_count(); }
  Vec3 up_axis() const noexcept { return up_; }
  Units units() const noexcept { return units_; }

  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const SkeletonSpec& a, const SkeletonSpec& b) {
    return a.dataset_ == b.dataset_ && a.joint_names_ == b.joint_names_ && a.up_ == b.up_ &&
           a.units_ == b.units_;
  }

 private:
  DatasetId dataset_ = DatasetId::GENERIC;
  std::vector<std::string> joint_names_;
  std::map<std::string, std::size_t, std::less<>> name_to_index_;
  Vec3 up_{0.0, 1.0, 0.0};
  Units units_ = Units::Meters;
};

struct RepetitionSample {
  std::string exercise_id;
  std::string subject_id;
  std::size_t repetition_index = 0;
  Label label = Label::Correct;
  Matrix frames;  // num_frames x (joint_count * 3)
  double frame_rate_hz = 30.0;
  Side dominant_side = Side::Unknown;

  std::size_t num_frames() const noexcept { return frames.rows(); }
  Vec3 joint(std::size_t frame, std::size_t joint_index) const {
    const std::size_t c = joint_index * 3;
    return {frames(frame, c), frames(frame, c + 1), frames(frame, c + 2)};
  }
  /// "exercise/subject/repetition", unique within a dataset.
  std::string identity() const;

  friend bool operator==(const RepetitionSample&, const RepetitionSample&) = default;
};

struct RepetitionAnnotation {
  std::string recording_id;  // file stem of the joint-position recording
  std::string subject_id;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  // exclusive
  Label correctness = Label::Correct;
  Side dominant_side = Side::Unknown;
};

struct LoadResult {
  std::vector<RepetitionSample> samples;
  std::vector<std::string> warnings;
};

/// Longest run of non-finite frames repaired by interpolation.
inline constexpr std::size_t kMaxRepairGap = 5;

/// Reads a whitespace- or comma-separated numeric table, one frame per line.
/// Non-finite tokens ("nan", "inf") are accepted here and repaired later.
Matrix read_numeric_table(const std::filesystem::path& path, std::size_t expected_columns);

/// Linearly interpolates runs of non-finite values per column. Runs touching
/// the start or end are filled from the single finite neighbour. Returns the
/// number of repaired cells; throws RangeError when a run exceeds max_gap.
std::size_t repair_gaps(Matrix& frames, std::size_t max_gap = kMaxRepairGap);

LoadResult load_uiprmd(const std::filesystem::path& root, std::string_view exercise_id,
                       const SkeletonSpec& spec);

/// Annotation table: CSV with header
/// exercise_id,recording_id,subject_id,start_frame,end_frame,correctness[,dominant_side]
std::vector<RepetitionAnnotation> read_rehab24_annotations(const std::filesystem::path& csv,
                                                           std::string_view exercise_id);

LoadResult load_rehab24(const std::filesystem::path& root, std::string_view exercise_id,
                        const SkeletonSpec& spec, const std::vector<RepetitionAnnotation>& annotations,
                        double frame_rate_hz = 30.0);

// Normalized interchange format: JSON lines, header first, one record per
// repetition after it.
inline constexpr int kGenericSchemaVersion = 1;

struct GenericDataset {
  SkeletonSpec skeleton;
  std::string exercise_id;
  double frame_rate_hz = 30.0;
  std::vector<RepetitionSample> samples;
};

void save_generic(const std::filesystem::path& path, const GenericDataset& dataset);
GenericDataset load_generic(const std::filesystem::path& path);

enum class SplitPolicy { SubjectDisjoint, Any };
SplitPolicy split_policy_from_string(std::string_view s);
std::string_view to_string(SplitPolicy p);

struct SupportTestSplit {
  std::vector<RepetitionSample> support;  // Correct block first, then Incorrect
  std::vector<RepetitionSample> test;     // source order
};

/// Draws k Correct and k Incorrect support samples. Under SubjectDisjoint,
/// every sample of a subject that contributed support is excluded from test.
SupportTestSplit split_support_and_test(const std::vector<RepetitionSample>& samples, std::size_t k,
                                        std::uint64_t seed, SplitPolicy policy);

}  // namespace rehab
