#include "rehabllm/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rehabllm/errors.hpp"

namespace rehab {

namespace fs = std::filesystem;

namespace {

struct TechniqueName {
  TechniqueKind kind;
  std::string_view name;
  std::string_view file_stem;
};

constexpr TechniqueName kTechniques[] = {
    {TechniqueKind::Classification, "Classification", "classification"},
    {TechniqueKind::ChainOfThought, "ChainOfThought", "chain_of_thought"},
    {TechniqueKind::Probability, "Probability", "probability"},
    {TechniqueKind::Certainty, "Certainty", "certainty"},
    {TechniqueKind::ChainOfThoughtPlusCertainty, "ChainOfThoughtPlusCertainty", "chain_of_thought_certainty"},
    {TechniqueKind::RolePlayFeedback, "RolePlayFeedback", "role_play_feedback"},
};

constexpr std::string_view kTaskTemplate =
    "Identify the label for the {ordinal} data sample below containing sequences of features extracted "
    "from {sensor} of the {exercise} exercise. Ensure the output adheres to the output format: "
    "{format_clause}\n\n{data_blocks}";

constexpr std::string_view kFeedbackTemplate =
    "You are a {persona}. A patient has just performed one repetition of the {exercise} exercise. The data "
    "sample below contains sequences of features extracted from {sensor} for that repetition, which was "
    "assessed as '{verdict}'. Speaking as a {persona}, give the patient brief, specific advice on how to "
    "improve the quality of this exercise, drawing on trends in the features.\n\n{data_blocks}";

std::string read_template(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("template not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

std::string format_number(double v, int decimals) {
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string data_header(std::size_t index, std::optional<Label> label) {
  std::string out = "<Data " + std::to_string(index);
  if (label) out += ", Label " + std::to_string(index) + ": " + std::string(to_string(*label));
  return out + ">";
}

}  // namespace

std::string_view to_string(TechniqueKind k) {
  for (const auto& t : kTechniques) {
    if (t.kind == k) return t.name;
  }
  return "Classification";
}

TechniqueKind technique_from_string(std::string_view s) {
  for (const auto& t : kTechniques) {
    if (t.name == s || t.file_stem == s) return t.kind;
  }
  throw ConfigError("unknown prompting technique '" + std::string(s) + "'");
}

void PromptTechnique::validate() const {
  const bool feedback = kind == TechniqueKind::RolePlayFeedback;
  if (feedback != persona.has_value()) {
    throw ConfigError("persona must be set for RolePlayFeedback and only for it");
  }
  if (feedback && persona->empty()) throw ConfigError("persona must not be empty");
  if (feedback && k == 0) throw ConfigError("RolePlayFeedback follows a few-shot assessment; k must be positive");
}

OutputFormat expected_format(TechniqueKind kind) {
  switch (kind) {
    case TechniqueKind::Classification: return OutputFormat::Label;
    case TechniqueKind::ChainOfThought: return OutputFormat::LabelReasoning;
    case TechniqueKind::Probability: return OutputFormat::ProbabilityOnly;
    case TechniqueKind::Certainty: return OutputFormat::LabelCertainty;
    case TechniqueKind::ChainOfThoughtPlusCertainty: return OutputFormat::LabelCertaintyReasoning;
    case TechniqueKind::RolePlayFeedback: return OutputFormat::FreeText;
  }
  return OutputFormat::Label;
}

void SerializationPolicy::validate() const {
  if (target_frames < 2) throw ConfigError("serialization target_frames must be at least 2");
  if (decimals < 0 || decimals > 6) throw ConfigError("serialization decimals must be in [0, 6]");
  if (delimiter.empty()) throw ConfigError("serialization delimiter must not be empty");
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

std::vector<std::size_t> resample_indices(std::size_t n, std::size_t target) {
  std::vector<std::size_t> idx(target);
  if (n == 0) return {};
  for (std::size_t i = 0; i < target; ++i) {
    // nearest of i * (n - 1) / (target - 1), halves rounded up
    const std::size_t num = 2 * i * (n - 1) + (target - 1);
    idx[i] = num / (2 * (target - 1));
  }
  return idx;
}

Matrix serialized_values(const FeatureSequence& seq, const SerializationPolicy& policy) {
  const auto idx = resample_indices(seq.values.rows(), policy.target_frames);
  Matrix out(idx.size(), seq.values.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < seq.values.cols(); ++c) {
      out(r, c) = round_to(seq.values(idx[r], c), policy.decimals);
    }
  }
  return out;
}

std::string serialize_features(const FeatureSequence& seq, const SerializationPolicy& policy) {
  policy.validate();
  if (seq.values.rows() == 0) throw RangeError("cannot serialize an empty feature sequence");
  const Matrix values = serialized_values(seq, policy);
  std::string out;
  if (policy.include_header) {
    for (std::size_t c = 0; c < seq.feature_names.size(); ++c) {
      if (c) out += policy.delimiter;
      out += seq.feature_names[c];
    }
  }
  for (std::size_t r = 0; r < values.rows(); ++r) {
    if (!out.empty()) out += '\n';
    for (std::size_t c = 0; c < values.cols(); ++c) {
      if (c) out += policy.delimiter;
      out += format_number(values(r, c), policy.decimals);
    }
  }
  return out;
}

std::string ordinal(std::size_t n) {
  const std::size_t mod100 = n % 100;
  const char* suffix = "th";
  if (mod100 < 11 || mod100 > 13) {
    switch (n % 10) {
      case 1: suffix = "st"; break;
      case 2: suffix = "nd"; break;
      case 3: suffix = "rd"; break;
      default: break;
    }
  }
  return std::to_string(n) + suffix;
}

std::string sensor_name(DatasetId dataset) {
  switch (dataset) {
    case DatasetId::UIPRMD: return "Kinect data";
    case DatasetId::REHAB24_6: return "inertial sensor data";
    case DatasetId::GENERIC: return "body joint data";
  }
  return "body joint data";
}

TemplateSet TemplateSet::builtin() {
  TemplateSet t;
  t.task = kTaskTemplate;
  t.feedback = kFeedbackTemplate;
  const std::string label_clause = "\"Label\". The label is either 'correct' or 'incorrect'.";
  const std::string cot = "Explain your reasoning step by step.";
  const std::string certainty = "Give a score between 0 and 1 for how certain you are in your classification.";
  t.format_clauses[TechniqueKind::Classification] = label_clause;
  t.format_clauses[TechniqueKind::ChainOfThought] = "\"Label, Reasoning\". " + cot;
  t.format_clauses[TechniqueKind::Probability] =
      "\"Probability\". Provide a probability score, where a higher score means a higher probability towards "
      "'correct' and a lower score for 'incorrect'.";
  t.format_clauses[TechniqueKind::Certainty] = "\"Label, Certainty\". " + certainty;
  t.format_clauses[TechniqueKind::ChainOfThoughtPlusCertainty] =
      "\"Label, Certainty, Reasoning\". " + cot + " " + certainty;
  return t;
}

TemplateSet TemplateSet::load(const fs::path& dir) {
  TemplateSet t;
  t.task = read_template(dir / "task.txt");
  t.feedback = read_template(dir / "feedback.txt");
  for (const auto& tn : kTechniques) {
    if (tn.kind == TechniqueKind::RolePlayFeedback) continue;
    t.format_clauses[tn.kind] = read_template(dir / ("format_" + std::string(tn.file_stem) + ".txt"));
  }
  return t;
}

const std::string& TemplateSet::format_clause(TechniqueKind kind) const {
  const auto it = format_clauses.find(kind);
  if (it == format_clauses.end()) throw ConfigError("no format clause for " + std::string(to_string(kind)));
  return it->second;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

PromptBundle render_prompt(const PromptTechnique& technique, const std::vector<FeatureSequence>& support,
                           const FeatureSequence& test, std::string_view exercise_name, std::string_view sensor,
                           const SerializationPolicy& policy, const TemplateSet& templates) {
  technique.validate();
  if (technique.kind == TechniqueKind::RolePlayFeedback) {
    throw ConfigError("use render_feedback_prompt for RolePlayFeedback");
  }
  policy.validate();
  std::vector<const FeatureSequence*> correct;
  std::vector<const FeatureSequence*> incorrect;
  for (const auto& s : support) (s.label == Label::Correct ? correct : incorrect).push_back(&s);
  if (correct.size() != technique.k || incorrect.size() != technique.k) {
    throw ConfigError("support set must hold exactly " + std::to_string(technique.k) +
                      " samples per class (got " + std::to_string(correct.size()) + " correct, " +
                      std::to_string(incorrect.size()) + " incorrect)");
  }
  auto by_identity = [](const FeatureSequence* a, const FeatureSequence* b) { return a->identity() < b->identity(); };
  std::stable_sort(correct.begin(), correct.end(), by_identity);
  std::stable_sort(incorrect.begin(), incorrect.end(), by_identity);

  PromptBundle bundle;
  bundle.technique = technique;
  bundle.expected_output_format = expected_format(technique.kind);
  bundle.test_id = test.identity();

  std::string blocks;
  std::size_t index = 1;
  for (const auto* group : {&correct, &incorrect}) {
    for (const auto* s : *group) {
      blocks += data_header(index, s->label) + "\n" + serialize_features(*s, policy) + "\n";
      bundle.support_ids.push_back({s->identity(), s->label});
      ++index;
    }
  }
  blocks += data_header(index, std::nullopt) + "\n" + serialize_features(test, policy);

  bundle.rendered_text = fill_template(templates.task, {{"ordinal", ordinal(index)},
                                                        {"exercise", std::string(exercise_name)},
                                                        {"sensor", std::string(sensor)},
                                                        {"format_clause", templates.format_clause(technique.kind)},
                                                        {"data_blocks", blocks}});
  return bundle;
}

PromptBundle render_feedback_prompt(std::string_view persona, const AssessmentOutcome& prior,
                                    const FeatureSequence& test, std::string_view exercise_name,
                                    std::string_view sensor, const SerializationPolicy& policy,
                                    const TemplateSet& templates, std::size_t k) {
  if (persona.empty()) throw ConfigError("persona must not be empty");
  if (!prior.has_label()) throw StateError("feedback needs a parsed step-one label for " + test.identity());
  PromptBundle bundle;
  bundle.technique = PromptTechnique{TechniqueKind::RolePlayFeedback, k, std::string(persona)};
  bundle.technique.validate();
  policy.validate();
  bundle.expected_output_format = OutputFormat::FreeText;
  bundle.test_id = test.identity();
  const std::string blocks = data_header(1, std::nullopt) + "\n" + serialize_features(test, policy);
  bundle.rendered_text = fill_template(templates.feedback, {{"persona", std::string(persona)},
                                                            {"verdict", std::string(to_string(*prior.predicted_label))},
                                                            {"exercise", std::string(exercise_name)},
                                                            {"sensor", std::string(sensor)},
                                                            {"ordinal", ordinal(1)},
                                                            {"data_blocks", blocks}});
  return bundle;
}

}  // namespace rehab
