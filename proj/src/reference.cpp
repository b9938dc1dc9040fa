#include "rehabllm/reference.hpp"

namespace rehab {

std::vector<ReferenceRow> reference_shot_table(DatasetId dataset) {
  switch (dataset) {
    case DatasetId::UIPRMD:
      return {{"0-shot", 0.57, 0.55, 0.75, 0.64, {}, {}}, {"1-shot", 0.59, 0.57, 0.72, 0.63, {}, {}},
              {"2-shot", 0.66, 0.62, 0.84, 0.71, {}, {}}, {"3-shot", 0.68, 0.74, 0.79, 0.76, {}, {}},
              {"4-shot", 0.42, 0.43, 0.50, 0.46, {}, {}}, {"5-shot", 0.63, 0.64, 0.60, 0.62, {}, {}}};
    case DatasetId::REHAB24_6:
      return {{"0-shot", 0.53, 0.54, 0.73, 0.62, {}, {}}, {"1-shot", 0.58, 0.58, 0.77, 0.66, {}, {}},
              {"2-shot", 0.61, 0.59, 0.81, 0.68, {}, {}}, {"3-shot", 0.63, 0.60, 0.85, 0.70, {}, {}},
              {"4-shot", 0.57, 0.68, 0.72, 0.65, {}, {}}, {"5-shot", 0.56, 0.62, 0.61, 0.60, {}, {}}};
    case DatasetId::GENERIC: break;
  }
  return {};
}

std::optional<ReferenceRow> reference_shot_row(DatasetId dataset, std::size_t k) {
  const auto table = reference_shot_table(dataset);
  if (k >= table.size()) return std::nullopt;
  return table[k];
}

std::optional<ReferenceRow> reference_technique_row(DatasetId dataset, TechniqueKind kind) {
  struct Entry {
    DatasetId dataset;
    TechniqueKind kind;
    ReferenceRow row;
  };
  static const std::vector<Entry> entries = {
      {DatasetId::UIPRMD, TechniqueKind::Classification, {"3-shot", 0.68, 0.74, 0.79, 0.76, {}, {}}},
      {DatasetId::UIPRMD, TechniqueKind::ChainOfThought, {"Chain-of-Thought", 0.72, 0.75, 0.67, 0.71, {}, {}}},
      {DatasetId::UIPRMD, TechniqueKind::Certainty, {"Certainty", 0.76, 0.72, 0.87, 0.79, {}, {}}},
      {DatasetId::UIPRMD, TechniqueKind::Probability, {"Probability", 0.68, 0.65, 0.79, 0.71, 0.70, 0.68}},
      {DatasetId::UIPRMD, TechniqueKind::ChainOfThoughtPlusCertainty,
       {"Chain-of-Thought + Certainty", 0.64, 0.59, 0.90, 0.72, {}, {}}},
      {DatasetId::REHAB24_6, TechniqueKind::Classification, {"3-shot", 0.63, 0.60, 0.85, 0.70, {}, {}}},
      {DatasetId::REHAB24_6, TechniqueKind::ChainOfThought, {"Chain-of-Thought", 0.70, 0.71, 0.67, 0.69, {}, {}}},
      {DatasetId::REHAB24_6, TechniqueKind::Certainty, {"Certainty", 0.70, 0.67, 0.80, 0.73, {}, {}}},
      {DatasetId::REHAB24_6, TechniqueKind::Probability, {"Probability", 0.67, 0.63, 0.80, 0.71, 0.72, 0.68}},
      {DatasetId::REHAB24_6, TechniqueKind::ChainOfThoughtPlusCertainty,
       {"Chain-of-Thought + Certainty", 0.67, 0.63, 0.80, 0.71, {}, {}}},
  };
  for (const auto& e : entries) {
    if (e.dataset == dataset && e.kind == kind) return e.row;
  }
  return std::nullopt;
}

std::optional<ReferenceRow> reference_exercise_row(std::string_view exercise_id) {
  static const std::vector<ReferenceRow> rows = {
      {"ex1", 0.67, 0.71, 0.75, 0.73, {}, {}}, {"ex5", 0.74, 0.69, 0.90, 0.78, {}, {}},
      {"ex6", 0.75, 0.78, 0.70, 0.74, {}, {}}, {"m07", 0.76, 0.76, 0.84, 0.80, {}, {}},
      {"m03", 0.67, 0.64, 0.76, 0.70, {}, {}}, {"m01", 0.76, 0.69, 0.95, 0.80, {}, {}},
  };
  for (const auto& r : rows) {
    if (r.setting == exercise_id) return r;
  }
  return std::nullopt;
}

}  // namespace rehab
