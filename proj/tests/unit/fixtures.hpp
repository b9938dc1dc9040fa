#pragma once

// Fixed inputs for the prompt goldens and generated cases for the parser
// checks. Shared by the unit tests and the acceptance binary.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rehabllm/gateway.hpp"
#include "rehabllm/parser.hpp"
#include "rehabllm/prompt.hpp"

namespace rehab::testing {

inline const std::vector<std::string>& squat_feature_names() {
  static const std::vector<std::string> names{"Knee Flexion A.", "Trunk A.", "Knee Valgus A."};
  return names;
}

// Values are multiples of 1/4 so printing never sits on a rounding edge
// that differs between platforms.
inline FeatureSequence fixture_sequence(std::size_t index, Label label, std::size_t frames = 40) {
  FeatureSequence s;
  s.exercise_id = "m01";
  s.subject_id = "s0" + std::to_string(1 + index % 4);
  s.repetition_index = index;
  s.label = label;
  s.feature_names = squat_feature_names();
  s.units.assign(3, FeatureUnits::Degrees);
  s.values = Matrix(frames, 3);
  const double depth = label == Label::Correct ? 110.0 : 45.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double phase = static_cast<double>((f * 8) % (2 * frames)) / static_cast<double>(frames);
    const double tri = phase < 1.0 ? phase : 2.0 - phase;
    s.values(f, 0) = std::round(depth * tri * 4.0) / 4.0;
    s.values(f, 1) = std::round(0.35 * depth * tri * 4.0) / 4.0 + static_cast<double>(index % 3);
    s.values(f, 2) = 0.25 * static_cast<double>((f + index) % 9);
  }
  return s;
}

inline std::vector<FeatureSequence> fixture_support(std::size_t k) {
  std::vector<FeatureSequence> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(fixture_sequence(10 + i, Label::Incorrect));
    out.push_back(fixture_sequence(20 + i, Label::Correct));
  }
  return out;
}

struct GoldenCase {
  std::string file;
  PromptBundle bundle;
};

inline const char* golden_stem(TechniqueKind kind) {
  switch (kind) {
    case TechniqueKind::Classification: return "classification";
    case TechniqueKind::ChainOfThought: return "chain_of_thought";
    case TechniqueKind::Probability: return "probability";
    case TechniqueKind::Certainty: return "certainty";
    case TechniqueKind::ChainOfThoughtPlusCertainty: return "chain_of_thought_certainty";
    case TechniqueKind::RolePlayFeedback: return "role_play_feedback";
  }
  return "";
}

/// One rendered prompt per technique: squat, two shots per class.
inline std::vector<GoldenCase> golden_cases(const TemplateSet& templates) {
  const SerializationPolicy policy;
  const auto support = fixture_support(2);
  const FeatureSequence test = fixture_sequence(1, Label::Incorrect);
  std::vector<GoldenCase> out;
  for (auto kind : {TechniqueKind::Classification, TechniqueKind::ChainOfThought, TechniqueKind::Probability,
                    TechniqueKind::Certainty, TechniqueKind::ChainOfThoughtPlusCertainty}) {
    out.push_back({std::string(golden_stem(kind)) + ".txt",
                   render_prompt({kind, 2, std::nullopt}, support, test, "squat", "Kinect data", policy, templates)});
  }
  AssessmentOutcome prior;
  prior.predicted_label = Label::Incorrect;
  prior.parse_status = ParseStatus::Parsed;
  out.push_back({"role_play_feedback.txt",
                 render_feedback_prompt("physiotherapist", prior, test, "squat", "Kinect data", policy, templates, 2)});
  return out;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Compares every golden case with the file under `dir`. With `update` the
/// files are rewritten instead.
inline CheckResult check_goldens(const std::filesystem::path& dir, const TemplateSet& templates, bool update) {
  CheckResult r;
  for (const auto& g : golden_cases(templates)) {
    const auto path = dir / g.file;
    if (update) {
      std::filesystem::create_directories(dir);
      std::ofstream(path, std::ios::binary) << g.bundle.rendered_text;
    }
    const bool same = std::filesystem::exists(path) && read_text(path) == g.bundle.rendered_text;
    r.record(same ? 0.0 : 1.0, 0.0, "golden " + g.file);
  }
  return r;
}

inline std::size_t count_of(const std::string& hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

/// "<Data" occurs 2k+1 times and the ordinal names block 2k+1, for every
/// technique and k in 0..5.
inline CheckResult check_block_counts() {
  CheckResult r;
  const SerializationPolicy policy{8, 1, ",", true};
  const FeatureSequence test = fixture_sequence(1, Label::Correct, 12);
  for (std::size_t k = 0; k <= 5; ++k) {
    for (auto kind : {TechniqueKind::Classification, TechniqueKind::ChainOfThought, TechniqueKind::Probability,
                      TechniqueKind::Certainty, TechniqueKind::ChainOfThoughtPlusCertainty}) {
      const auto b = render_prompt({kind, k, std::nullopt}, fixture_support(k), test, "squat", "Kinect data", policy);
      const std::string tag = "k=" + std::to_string(k) + " " + std::string(to_string(kind));
      r.record(count_of(b.rendered_text, "<Data") == 2 * k + 1 ? 0.0 : 1.0, 0.0, tag + " block count");
      r.record(count_of(b.rendered_text, "the " + ordinal(2 * k + 1) + " data sample") == 1 ? 0.0 : 1.0, 0.0,
               tag + " ordinal");
      r.record(b.support_ids.size() == 2 * k ? 0.0 : 1.0, 0.0, tag + " support ids");
      const std::string last = "<Data " + std::to_string(2 * k + 1) + ">";
      r.record(count_of(b.rendered_text, last) == 1 ? 0.0 : 1.0, 0.0, tag + " unlabeled final block");
    }
  }
  return r;
}

// --- parser -----------------------------------------------------------------

inline OracleConfig random_oracle(Rng& rng) {
  OracleConfig c;
  const std::size_t n = 1 + rng.index(3);
  for (std::size_t i = 0; i < n; ++i) {
    OracleRule rule;
    rule.feature = squat_feature_names()[rng.index(3)];
    rule.threshold = std::round(rng.uniform(-20.0, 80.0) * 4.0) / 4.0;
    rule.correct_if_above = rng.index(2) == 0;
    c.rules.push_back(rule);
  }
  c.certainty = static_cast<double>(50 + rng.index(50)) / 100.0;
  return c;
}

inline FeatureSequence random_sequence(Rng& rng, std::size_t index) {
  FeatureSequence s;
  s.exercise_id = "m01";
  s.subject_id = "s" + std::to_string(index % 7);
  s.repetition_index = index;
  s.label = rng.index(2) ? Label::Correct : Label::Incorrect;
  s.feature_names = squat_feature_names();
  s.units.assign(3, FeatureUnits::Degrees);
  const std::size_t frames = 5 + rng.index(60);
  s.values = Matrix(frames, 3);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < 3; ++c) s.values(f, c) = rng.uniform(-30.0, 130.0);
  }
  return s;
}

/// Mock oracle replies parsed back must give the oracle's own decision:
/// label for every format, probability and certainty to the cent.
inline CheckResult check_mock_round_trip(std::size_t cases, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  CheckResult r;
  const TechniqueKind kinds[] = {TechniqueKind::Classification, TechniqueKind::ChainOfThought,
                                 TechniqueKind::Probability, TechniqueKind::Certainty,
                                 TechniqueKind::ChainOfThoughtPlusCertainty};
  for (std::size_t i = 0; i < cases; ++i) {
    const OracleConfig oracle = random_oracle(rng);
    const std::size_t k = rng.index(3);
    SerializationPolicy policy;
    policy.target_frames = 2 + rng.index(40);
    policy.decimals = static_cast<int>(rng.index(4));
    std::vector<FeatureSequence> support;
    for (std::size_t j = 0; j < k; ++j) {
      FeatureSequence a = random_sequence(rng, 100 + 2 * j), b = random_sequence(rng, 101 + 2 * j);
      a.label = Label::Correct;
      b.label = Label::Incorrect;
      support.push_back(std::move(a));
      support.push_back(std::move(b));
    }
    const FeatureSequence test = random_sequence(rng, i);
    const TechniqueKind kind = kinds[i % 5];
    const PromptBundle bundle = render_prompt({kind, k, std::nullopt}, support, test, "squat", "Kinect data", policy);
    const OracleDecision want = direct_oracle_decision(test, policy, oracle);
    const CompletionRecord rec = mock_oracle_complete(bundle, oracle);
    const AssessmentOutcome got = parse(rec.response_text, bundle.expected_output_format);

    const std::string tag = "case " + std::to_string(i) + " " + std::string(to_string(kind));
    r.record(got.parse_status == ParseStatus::Parsed ? 0.0 : 1.0, 0.0, tag + " strict parse");
    r.record(got.predicted_label == want.label ? 0.0 : 1.0, 0.0, tag + " label");
    if (kind == TechniqueKind::Probability) {
      const double p = got.probability_correct.value_or(-1.0);
      r.record(std::abs(p * 100.0 - want.probability_hundredths), 1e-9, tag + " probability");
    }
    if (kind == TechniqueKind::Certainty || kind == TechniqueKind::ChainOfThoughtPlusCertainty) {
      r.record(std::abs(got.certainty.value_or(-1.0) - oracle.certainty), 1e-12, tag + " certainty");
    }
    if (kind == TechniqueKind::ChainOfThought || kind == TechniqueKind::ChainOfThoughtPlusCertainty) {
      r.record(got.reasoning_text && !got.reasoning_text->empty() ? 0.0 : 1.0, 0.0, tag + " reasoning");
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string random_response(Rng& rng) {
  static const char* const pieces[] = {
      "correct",  "incorrect", "Correct",   "INCORRECT", "Incorrect", "label",   "Label:", ",",     ", ",   ".",
      "0.85",     "0.5",       "1",         "0",         "1.7",       "-0.2",    "85%",    "\n",    " ",    "\"",
      "'",        "the knee",  "looks",     "not",       "uncorrect", "correctly", "reasoning", ":", "{",  "}",
      "Label, Certainty", "Probability", "nan", "inf", "1e3", "0.999999", "because", "incorrectly", "the", "0.",
  };
  std::string s;
  const std::size_t n = rng.index(12);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.index(10) == 0) {
      s += static_cast<char>(rng.index(256));
    } else {
      s += pieces[rng.index(std::size(pieces))];
    }
    if (rng.index(3) == 0) s += ' ';
  }
  return s;
}

/// Totality and range checks over generated replies in every format:
/// parse never throws, numbers stay in [0, 1], the status agrees with the
/// fields, and any reply mentioning "incorrect" never comes out Correct
/// through the recovery pass.
inline CheckResult check_parser_properties(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  CheckResult r;
  const OutputFormat formats[] = {OutputFormat::Label,          OutputFormat::LabelReasoning,
                                  OutputFormat::ProbabilityOnly, OutputFormat::LabelCertainty,
                                  OutputFormat::LabelCertaintyReasoning, OutputFormat::FreeText};
  for (std::size_t i = 0; i < cases; ++i) {
    const std::string text = random_response(rng);
    const OutputFormat fmt = formats[i % 6];
    const double threshold = rng.uniform(0.0, 1.0);
    const std::string tag = "reply '" + text + "' as " + std::string(to_string(fmt));
    AssessmentOutcome o;
    try {
      o = parse(text, fmt, threshold);
    } catch (...) {
      r.record(1.0, 0.0, tag + " threw");
      continue;
    }
    r.record(o.raw_text == text ? 0.0 : 1.0, 0.0, tag + " raw text kept");
    auto in_unit = [](const std::optional<double>& v) { return !v || (*v >= 0.0 && *v <= 1.0); };
    r.record(in_unit(o.probability_correct) && in_unit(o.certainty) ? 0.0 : 1.0, 0.0, tag + " range");
    const bool needs_label = fmt != OutputFormat::FreeText;
    if (o.parse_status != ParseStatus::Failed && needs_label) {
      r.record(o.predicted_label ? 0.0 : 1.0, 0.0, tag + " label present");
    }
    if (fmt == OutputFormat::ProbabilityOnly && o.parse_status != ParseStatus::Failed) {
      const bool ok = o.probability_correct &&
                      o.predicted_label == (*o.probability_correct >= threshold ? Label::Correct : Label::Incorrect);
      r.record(ok ? 0.0 : 1.0, 0.0, tag + " threshold rule");
    }
    std::string low = text;
    for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (o.parse_status == ParseStatus::Recovered && low.find("incorrect") != std::string::npos &&
        fmt != OutputFormat::ProbabilityOnly) {
      r.record(o.predicted_label != Label::Correct ? 0.0 : 1.0, 0.0, tag + " substring safety");
    }
  }
  return r;
}

// --- metrics ----------------------------------------------------------------

inline AssessmentOutcome labeled(Label l) {
  AssessmentOutcome o;
  o.predicted_label = l;
  o.parse_status = ParseStatus::Parsed;
  return o;
}

/// Hand-computed confusion examples, compared with exact equality.
inline CheckResult check_metric_examples() {
  CheckResult r;
  const Label C = Label::Correct, I = Label::Incorrect;
  auto exact = [&](double got, double want, const std::string& what) { r.record(got == want ? 0.0 : 1.0, 0.0, what); };

  const ConfusionCounts a = confusion(std::vector<Label>{C, C, I, I}, std::vector<Label>{C, I, C, I});
  r.record(a == ConfusionCounts{1, 1, 1, 1} ? 0.0 : 1.0, 0.0, "[C,C,I,I] vs [C,I,C,I]");
  const BasicMetrics am = basic_metrics(a);
  exact(am.accuracy, 0.5, "half right accuracy");
  exact(am.f1, 0.5, "half right f1");

  const ConfusionCounts perfect = confusion(std::vector<Label>{C, I, I, C, C}, std::vector<Label>{C, I, I, C, C});
  r.record(perfect.fp == 0 && perfect.fn == 0 ? 0.0 : 1.0, 0.0, "perfect predictions");
  exact(basic_metrics(perfect).accuracy, 1.0, "perfect accuracy");
  exact(basic_metrics(perfect).f1, 1.0, "perfect f1");

  AssessmentOutcome failed;
  failed.raw_text = "?";
  const ConfusionCounts f = confusion(std::vector<ScoredOutcome>{{failed, C}, {labeled(C), C}});
  r.record(f == ConfusionCounts{1, 0, 0, 1} ? 0.0 : 1.0, 0.0, "failed outcome with truth Correct is fn");
  const ConfusionCounts g = confusion(std::vector<ScoredOutcome>{{failed, I}});
  r.record(g == ConfusionCounts{0, 1, 0, 0} ? 0.0 : 1.0, 0.0, "failed outcome with truth Incorrect is fp");

  const BasicMetrics m = basic_metrics({3, 1, 5, 1});
  exact(m.accuracy, 0.8, "accuracy 0.8");
  exact(m.precision, 0.75, "precision 0.75");
  exact(m.recall, 0.75, "recall 0.75");
  exact(m.f1, 0.75, "f1 0.75");
  const BasicMetrics scaled = basic_metrics({30, 10, 50, 10});
  exact(scaled.accuracy, m.accuracy, "scaled accuracy");
  exact(scaled.precision, m.precision, "scaled precision");
  exact(scaled.recall, m.recall, "scaled recall");
  exact(scaled.f1, m.f1, "scaled f1");

  const BasicMetrics none = basic_metrics({0, 0, 4, 2});
  exact(none.precision, 0.0, "0/0 precision");
  r.record(none.precision_undefined && !none.recall_undefined ? 0.0 : 1.0, 0.0, "0/0 precision flagged");
  exact(none.f1, 0.0, "f1 without precision");

  const std::vector<ScoredSample> last{{0.9, false}, {0.8, false}, {0.7, false}, {0.1, true}};
  exact(auc_pr(last), 0.25, "positive ranked last of four");
  exact(auc_roc(last), 0.0, "positive ranked last roc");
  const std::vector<ScoredSample> ties{{0.4, true}, {0.4, false}, {0.4, true}, {0.4, false}};
  exact(auc_roc(ties), 0.5, "all ties");
  const std::vector<ScoredSample> separated{{0.9, true}, {0.8, true}, {0.3, false}, {0.1, false}};
  exact(auc_roc(separated), 1.0, "separated roc");
  exact(auc_pr(separated), 1.0, "separated pr");
  return r;
}

}  // namespace rehab::testing
