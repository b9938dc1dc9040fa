#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rehabllm/prompt.hpp"
#include "rehabllm/skeleton.hpp"

namespace rehab {

// Published results for side-by-side comparison in reports. They come from
// a hosted model that cannot be seeded, so nothing here is ever asserted.
struct ReferenceRow {
  std::string setting;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc_roc;
  std::optional<double> auc_pr;
};

/// One row per k in 0..5; empty for GENERIC.
std::vector<ReferenceRow> reference_shot_table(DatasetId dataset);
std::optional<ReferenceRow> reference_shot_row(DatasetId dataset, std::size_t k);

std::optional<ReferenceRow> reference_technique_row(DatasetId dataset, TechniqueKind kind);

/// Certainty elicitation at three shots: ex1, ex5, ex6, m07, m03, m01.
std::optional<ReferenceRow> reference_exercise_row(std::string_view exercise_id);

}  // namespace rehab
