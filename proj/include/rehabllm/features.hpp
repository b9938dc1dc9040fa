#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rehabllm/matrix.hpp"
#include "rehabllm/skeleton.hpp"

namespace rehab {

enum class Primitive {
  JointAngle,
  SegmentVerticalAngle,
  PlaneDeviation,
  PairSymmetry,
  PelvicTilt,
  HorizontalDistance,
  VerticalDisplacement,
  StabilityRange,
};

enum class FeatureUnits { Degrees, Length };

std::string_view to_string(Primitive p);
Primitive primitive_from_string(std::string_view s);
std::string_view to_string(FeatureUnits u);

// Joint references may carry a side placeholder: "{ACTIVE}Knee" resolves to
// "LeftKnee" or "RightKnee" depending on the active side, "{PASSIVE}Knee" to
// the other one.
inline constexpr std::string_view kActiveToken = "{ACTIVE}";
inline constexpr std::string_view kPassiveToken = "{PASSIVE}";

struct FeatureDef {
  std::string name;
  Primitive primitive = Primitive::JointAngle;
  std::vector<std::string> joint_refs;
  FeatureUnits units = FeatureUnits::Degrees;
  // Report |value - deviation_from| instead of the raw angle (flexion and
  // valgus angles are deviations from a straight limb).
  std::optional<double> deviation_from;
  // JointAngle only: project onto the frontal plane spanned by up and the
  // line between these two joints before measuring.
  std::vector<std::string> projection_refs;
  // StabilityRange only: exactly one wrapped feature.
  std::vector<FeatureDef> inner;

  /// True when the value depends on the world up axis, so only rotations
  /// about that axis leave it unchanged.
  bool vertical_referenced() const;
  /// True for features emitted as one value repeated on every frame.
  bool constant_column() const;
};

struct FeatureSpec {
  std::string exercise_id;
  std::string exercise_name;  // used in prompts, e.g. "deep squat"
  DatasetId dataset_id = DatasetId::GENERIC;
  std::vector<FeatureDef> features;

  std::size_t num_features() const noexcept { return features.size(); }
  std::vector<std::string> feature_names() const;
  bool uses_side_placeholders() const;
};

/// Parses and validates one feature-config document (JSON with // comments).
FeatureSpec parse_feature_spec(const std::string& text, const std::string& origin = "<memory>");
FeatureSpec load_feature_spec(const std::filesystem::path& path);

/// Every feature config found under `root` (searched recursively), keyed by
/// exercise id.
class FeatureCatalog {
 public:
  static FeatureCatalog load(const std::filesystem::path& root);

  const FeatureSpec& at(std::string_view exercise_id) const;
  bool contains(std::string_view exercise_id) const;
  std::vector<std::string> exercise_ids() const;
  std::size_t size() const noexcept { return specs_.size(); }

 private:
  std::map<std::string, FeatureSpec, std::less<>> specs_;
};

struct FeatureSequence {
  std::string exercise_id;
  std::string subject_id;
  std::size_t repetition_index = 0;
  Label label = Label::Correct;
  std::vector<std::string> feature_names;
  std::vector<FeatureUnits> units;
  Matrix values;  // num_frames x num_features

  std::string identity() const {
    return exercise_id + "/" + subject_id + "/" + std::to_string(repetition_index);
  }
};

/// Replaces side placeholders in a joint reference.
std::string resolve_joint_ref(std::string_view ref, Side active);

/// Side that performs the movement: metadata when known, otherwise the side
/// whose placeholder-referenced joints travel further (ties go Left).
Side resolve_active_side(const RepetitionSample& sample, const SkeletonSpec& spec, const FeatureSpec& features);

FeatureSequence extract_features(const RepetitionSample& sample, const SkeletonSpec& spec,
                                 const FeatureSpec& features);

/// Raw joint coordinates as a sequence with columns "<joint>.x|y|z", used for
/// the raw-joint prompt variant.
FeatureSequence joints_as_sequence(const RepetitionSample& sample, const SkeletonSpec& spec);

}  // namespace rehab
