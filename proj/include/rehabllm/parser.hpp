#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "rehabllm/skeleton.hpp"

namespace rehab {

enum class OutputFormat {
  Label,
  LabelReasoning,
  ProbabilityOnly,
  LabelCertainty,
  LabelCertaintyReasoning,
  FreeText,
};

std::string_view to_string(OutputFormat f);
OutputFormat output_format_from_string(std::string_view s);

enum class ParseStatus { Parsed, Recovered, Failed };
std::string_view to_string(ParseStatus s);

inline constexpr double kDefaultDecisionThreshold = 0.5;

struct AssessmentOutcome {
  std::optional<Label> predicted_label;
  std::optional<double> probability_correct;
  std::optional<double> certainty;
  std::optional<std::string> reasoning_text;
  std::optional<std::string> feedback_text;
  ParseStatus parse_status = ParseStatus::Failed;
  std::string raw_text;

  bool has_label() const { return parse_status != ParseStatus::Failed && predicted_label.has_value(); }
};

/// Parses a model reply. Never throws: a strict pass requires the exact
/// requested shape (labels case-insensitive, surrounding quotes and
/// whitespace tolerated); a recovery pass then scans free text for the first
/// standalone label word and the first number in [0, 1]. Text containing
/// "incorrect" anywhere never recovers as Correct.
AssessmentOutcome parse(std::string_view response_text, OutputFormat expected,
                        double threshold = kDefaultDecisionThreshold);

}  // namespace rehab
