#include "rehabllm/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"

namespace rehab {

namespace {

void tally(ConfusionCounts& c, Label predicted, Label truth, Label positive) {
  const bool pred_pos = predicted == positive;
  const bool true_pos = truth == positive;
  if (pred_pos && true_pos) ++c.tp;
  else if (pred_pos) ++c.fp;
  else if (true_pos) ++c.fn;
  else ++c.tn;
}

std::pair<std::size_t, std::size_t> class_sizes(const std::vector<ScoredSample>& s) {
  const auto pos = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.positive; }));
  return {pos, s.size() - pos};
}

// Indices ordered by descending score.
std::vector<std::size_t> descending(const std::vector<ScoredSample>& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a].score > s[b].score; });
  return idx;
}

}  // namespace

ConfusionCounts confusion(const std::vector<ScoredOutcome>& outcomes, Label positive) {
  if (outcomes.empty()) throw EmptyInput("no outcomes to score");
  ConfusionCounts c;
  for (const auto& [outcome, truth] : outcomes) {
    const bool usable = outcome.parse_status != ParseStatus::Failed && outcome.predicted_label.has_value();
    tally(c, usable ? *outcome.predicted_label : opposite(truth), truth, positive);
  }
  return c;
}

ConfusionCounts confusion(const std::vector<Label>& predicted, const std::vector<Label>& truth, Label positive) {
  if (predicted.size() != truth.size()) throw RangeError("prediction and truth lists differ in length");
  if (predicted.empty()) throw EmptyInput("no outcomes to score");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) tally(c, predicted[i], truth[i], positive);
  return c;
}

BasicMetrics basic_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw EmptyInput("confusion counts are empty");
  BasicMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.precision_undefined = c.tp + c.fp == 0;
  m.recall_undefined = c.tp + c.fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double sum = m.precision + m.recall;
  m.f1 = sum == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / sum;
  return m;
}

double auc_roc(const std::vector<ScoredSample>& samples) {
  const auto [n_pos, n_neg] = class_sizes(samples);
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("AUC-ROC needs both classes");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  // Sum of midranks of the positives, doubled to stay in integers.
  std::size_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) ++j;
    const std::size_t twice_midrank = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (samples[idx[t]].positive) twice_rank_sum += twice_midrank;
    }
    i = j;
  }
  const double u = static_cast<double>(twice_rank_sum) / 2.0 - static_cast<double>(n_pos * (n_pos + 1)) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<CurvePoint> roc_curve(const std::vector<ScoredSample>& samples) {
  const auto [n_pos, n_neg] = class_sizes(samples);
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("ROC curve needs both classes");
  const auto idx = descending(samples);
  std::vector<CurvePoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) {
      (samples[idx[j]].positive ? tp : fp) += 1;
      ++j;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return curve;
}

double trapezoid_area(const std::vector<CurvePoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].x - curve[i - 1].x) * (curve[i].y + curve[i - 1].y) / 2.0;
  }
  return area;
}

std::vector<CurvePoint> pr_curve(const std::vector<ScoredSample>& samples) {
  const auto n_pos = class_sizes(samples).first;
  if (n_pos == 0) throw UndefinedMetric("precision-recall curve needs a positive sample");
  const auto idx = descending(samples);
  std::vector<CurvePoint> curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) {
      (samples[idx[j]].positive ? tp : fp) += 1;
      ++j;
    }
    curve.push_back({static_cast<double>(tp) / static_cast<double>(n_pos),
                     static_cast<double>(tp) / static_cast<double>(tp + fp)});
    i = j;
  }
  return curve;
}

double auc_pr(const std::vector<ScoredSample>& samples) {
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& p : pr_curve(samples)) {
    ap += (p.x - prev_recall) * p.y;
    prev_recall = p.x;
  }
  return ap;
}

MetricsReport make_report(const std::vector<ScoredOutcome>& outcomes, Label positive, bool probabilities_elicited) {
  MetricsReport r;
  r.positive_class = positive;
  r.n_samples = outcomes.size();
  r.counts = confusion(outcomes, positive);
  r.metrics = basic_metrics(r.counts);
  const auto failed = std::count_if(outcomes.begin(), outcomes.end(),
                                    [](const auto& o) { return o.first.parse_status == ParseStatus::Failed; });
  r.parse_failure_rate = static_cast<double>(failed) / static_cast<double>(outcomes.size());
  const auto recovered = std::count_if(outcomes.begin(), outcomes.end(),
                                       [](const auto& o) { return o.first.parse_status == ParseStatus::Recovered; });
  r.recovered_rate = static_cast<double>(recovered) / static_cast<double>(outcomes.size());
  if (recovered > 0) r.notes.push_back(std::to_string(recovered) + " response(s) parsed by the recovery pass");
  if (r.metrics.precision_undefined) r.notes.push_back("precision undefined (no positive predictions), reported as 0");
  if (r.metrics.recall_undefined) r.notes.push_back("recall undefined (no positive samples), reported as 0");

  if (probabilities_elicited) {
    std::vector<ScoredSample> scored;
    for (const auto& [outcome, truth] : outcomes) {
      if (outcome.parse_status == ParseStatus::Failed || !outcome.probability_correct) continue;
      const double p = *outcome.probability_correct;
      scored.push_back({positive == Label::Correct ? p : 1.0 - p, truth == positive});
    }
    r.n_scored = scored.size();
    if (scored.size() < outcomes.size()) {
      r.notes.push_back(std::to_string(outcomes.size() - scored.size()) + " samples without a probability left out of AUC");
    }
    try {
      r.auc_roc = auc_roc(scored);
    } catch (const UndefinedMetric& e) {
      r.notes.push_back(std::string("AUC-ROC undefined: ") + e.what());
    }
    try {
      r.auc_pr = auc_pr(scored);
    } catch (const UndefinedMetric& e) {
      r.notes.push_back(std::string("AUC-PR undefined: ") + e.what());
    }
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"exercise_id", r.exercise_id},
          {"technique", r.technique},
          {"k", r.k},
          {"seed", r.seed},
          {"model_name", r.model_name},
          {"input_variant", r.input_variant},
          {"positive_class", to_string(r.positive_class)},
          {"n_samples", r.n_samples},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"tn", r.counts.tn},
          {"fn", r.counts.fn},
          {"accuracy", r.metrics.accuracy},
          {"precision", r.metrics.precision},
          {"recall", r.metrics.recall},
          {"f1", r.metrics.f1},
          {"precision_undefined", r.metrics.precision_undefined},
          {"recall_undefined", r.metrics.recall_undefined},
          {"auc_roc", opt(r.auc_roc)},
          {"auc_pr", opt(r.auc_pr)},
          {"n_scored", r.n_scored},
          {"parse_failure_rate", r.parse_failure_rate},
          {"recovered_rate", r.recovered_rate},
          {"notes", r.notes}};
}

std::string format_metric(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string text_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (row.size() > width.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& cell = rows[r][c];
      if (c == 0) {
        out += cell + std::string(width[c] - cell.size(), ' ');
      } else {
        out += "  " + std::string(width[c] - cell.size(), ' ') + cell;
      }
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
      out += std::string(total, '-') + '\n';
    }
  }
  return out;
}

}  // namespace rehab
