#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rehabllm/parser.hpp"
#include "rehabllm/skeleton.hpp"

namespace rehab {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

using ScoredOutcome = std::pair<AssessmentOutcome, Label>;  // (outcome, truth)

/// Outcomes without a usable label count as predicting the opposite of the
/// truth. Throws EmptyInput on an empty list.
ConfusionCounts confusion(const std::vector<ScoredOutcome>& outcomes, Label positive = Label::Correct);
ConfusionCounts confusion(const std::vector<Label>& predicted, const std::vector<Label>& truth,
                          Label positive = Label::Correct);

struct BasicMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // tp + fp == 0, reported as 0
  bool recall_undefined = false;     // tp + fn == 0, reported as 0
};

BasicMetrics basic_metrics(const ConfusionCounts& c);

struct ScoredSample {
  double score = 0.0;  // higher means more likely positive
  bool positive = false;
};

/// Mann-Whitney statistic with midranks for ties. Throws UndefinedMetric
/// unless both classes are present.
double auc_roc(const std::vector<ScoredSample>& samples);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

/// (fpr, tpr) points from (0, 0) to (1, 1), one per distinct threshold.
std::vector<CurvePoint> roc_curve(const std::vector<ScoredSample>& samples);
double trapezoid_area(const std::vector<CurvePoint>& curve);

/// Average precision over a descending threshold sweep with tied scores
/// taken together. Throws UndefinedMetric without positives.
double auc_pr(const std::vector<ScoredSample>& samples);

/// (recall, precision) points, one per distinct threshold.
std::vector<CurvePoint> pr_curve(const std::vector<ScoredSample>& samples);

struct MetricsReport {
  std::string exercise_id;
  std::string technique;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string model_name;
  std::string input_variant = "features";
  Label positive_class = Label::Correct;

  std::size_t n_samples = 0;
  ConfusionCounts counts;
  BasicMetrics metrics;
  std::optional<double> auc_roc;
  std::optional<double> auc_pr;
  std::size_t n_scored = 0;  // samples with a usable probability
  double parse_failure_rate = 0.0;
  double recovered_rate = 0.0;  // labels found only by the lenient pass
  std::vector<std::string> notes;
};

/// Scores one cell. AUCs are computed only when `probabilities_elicited`,
/// over the outcomes that carry a probability.
MetricsReport make_report(const std::vector<ScoredOutcome>& outcomes, Label positive, bool probabilities_elicited);

nlohmann::json to_json(const MetricsReport& r);

/// "0.76"; "-" for a missing value.
std::string format_metric(std::optional<double> v);

/// Fixed-width text table. The first row is the header.
std::string text_table(const std::vector<std::vector<std::string>>& rows);

}  // namespace rehab
