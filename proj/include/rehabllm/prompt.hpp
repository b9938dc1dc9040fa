#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rehabllm/features.hpp"
#include "rehabllm/parser.hpp"

namespace rehab {

enum class TechniqueKind {
  Classification,
  ChainOfThought,
  Probability,
  Certainty,
  ChainOfThoughtPlusCertainty,
  RolePlayFeedback,
};

std::string_view to_string(TechniqueKind k);
TechniqueKind technique_from_string(std::string_view s);

struct PromptTechnique {
  TechniqueKind kind = TechniqueKind::Classification;
  std::size_t k = 0;
  std::optional<std::string> persona;  // RolePlayFeedback only

  /// Throws ConfigError unless persona is present exactly for
  /// RolePlayFeedback and k > 0 for feedback.
  void validate() const;
};

OutputFormat expected_format(TechniqueKind kind);

struct SerializationPolicy {
  std::size_t target_frames = 30;
  int decimals = 1;
  std::string delimiter = ",";
  bool include_header = true;

  void validate() const;
};

/// Round half away from zero to `decimals` places.
double round_to(double value, int decimals);

/// Row indices kept when resampling n frames to `target` frames.
std::vector<std::size_t> resample_indices(std::size_t n, std::size_t target);

/// Resampled and rounded values, exactly the numbers serialize_features prints.
Matrix serialized_values(const FeatureSequence& seq, const SerializationPolicy& policy);

std::string serialize_features(const FeatureSequence& seq, const SerializationPolicy& policy);

/// "1st", "2nd", "3rd", "4th", "11th", "21st", ...
std::string ordinal(std::size_t n);

/// Sensor phrase used in the task sentence for a dataset.
std::string sensor_name(DatasetId dataset);

struct SampleRef {
  std::string identity;
  Label label = Label::Correct;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct PromptBundle {
  PromptTechnique technique;
  std::string rendered_text;
  std::vector<SampleRef> support_ids;
  std::string test_id;
  OutputFormat expected_output_format = OutputFormat::Label;
};

// Prompt scaffolding. Placeholders: {ordinal} {exercise} {sensor}
// {format_clause} {data_blocks}; the feedback template also takes {persona}
// and {verdict}.
struct TemplateSet {
  std::string task;
  std::string feedback;
  std::map<TechniqueKind, std::string> format_clauses;

  static TemplateSet builtin();
  /// Reads task.txt, feedback.txt and format_<technique>.txt from `dir`.
  static TemplateSet load(const std::filesystem::path& dir);

  const std::string& format_clause(TechniqueKind kind) const;
};

/// Substitutes {name} placeholders; unknown placeholders are left as is.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

PromptBundle render_prompt(const PromptTechnique& technique, const std::vector<FeatureSequence>& support,
                           const FeatureSequence& test, std::string_view exercise_name,
                           std::string_view sensor, const SerializationPolicy& policy,
                           const TemplateSet& templates = TemplateSet::builtin());

PromptBundle render_feedback_prompt(std::string_view persona, const AssessmentOutcome& prior,
                                    const FeatureSequence& test, std::string_view exercise_name,
                                    std::string_view sensor, const SerializationPolicy& policy,
                                    const TemplateSet& templates = TemplateSet::builtin(), std::size_t k = 3);

}  // namespace rehab
