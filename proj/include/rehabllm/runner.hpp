#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rehabllm/features.hpp"
#include "rehabllm/gateway.hpp"
#include "rehabllm/metrics.hpp"
#include "rehabllm/prompt.hpp"
#include "rehabllm/skeleton.hpp"

namespace rehab {

enum class InputVariant { Features, Joints };
std::string_view to_string(InputVariant v);
InputVariant input_variant_from_string(std::string_view s);

// Where repetitions come from. kind is one of:
//   generic    <root>/<exercise>.jsonl
//   uiprmd     UI-PRMD release rooted at <root>
//   rehab24    recordings under <root> plus an annotation CSV
//   synthetic  generated in memory (m01, m07)
struct DataSource {
  std::string kind = "generic";
  std::filesystem::path root;
  std::filesystem::path annotations;
  std::filesystem::path skeleton;  // optional skeleton override
  std::size_t repetitions = 40;    // synthetic only
};

struct ExperimentConfig {
  DatasetId dataset_id = DatasetId::UIPRMD;
  std::vector<std::string> exercise_ids;
  std::vector<PromptTechnique> techniques;  // compare; empty means all five
  std::vector<std::size_t> k_values{0, 1, 2, 3, 4, 5};
  std::uint64_t seed = 42;
  SplitPolicy split_policy = SplitPolicy::SubjectDisjoint;
  SerializationPolicy serialization;
  ModelEndpointConfig endpoint;
  bool mock = false;
  std::map<std::string, OracleConfig> oracle;  // per exercise, mock mode
  double threshold = 0.5;
  std::filesystem::path output_dir = "results";
  DataSource data;
  std::vector<InputVariant> input_variants{InputVariant::Features};
  std::filesystem::path configs_dir;
  std::filesystem::path templates_dir;
  std::filesystem::path cache_dir;
  Label positive_class = Label::Correct;
  std::string persona = "physiotherapist";
  std::size_t feedback_samples = 3;
  std::size_t fixed_k = 3;  // shots for compare, per-exercise and feedback

  /// Throws ConfigError on any inconsistency, including exercise ids missing
  /// from the catalog.
  void validate(const FeatureCatalog& catalog) const;
};

/// Field names mirror ExperimentConfig. Relative paths resolve against
/// `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

/// Split seed for a cell. Technique is deliberately left out so every
/// technique sees the same support and test sets.
std::uint64_t cell_seed(std::uint64_t seed, std::string_view exercise_id, std::size_t k);

struct CellKey {
  std::string exercise_id;
  TechniqueKind technique = TechniqueKind::Classification;
  std::size_t k = 0;
  InputVariant variant = InputVariant::Features;

  std::string name() const;
};

struct AuditRow {
  std::string test_id;
  std::string prompt_hash;
  std::vector<SampleRef> support_ids;
  Label truth = Label::Correct;
  AssessmentOutcome outcome;
  TransportStatus transport_status = TransportStatus::Ok;
  bool from_cache = false;
};

nlohmann::json to_json(const AuditRow& row);

struct CellResult {
  CellKey key;
  std::uint64_t split_seed = 0;
  MetricsReport report;
  std::vector<AuditRow> audit;  // one per test sample, test order
  std::vector<FeatureSequence> test_sequences;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;

  std::vector<ScoredOutcome> scored() const;
};

/// Builds a backend for one exercise (mock rules differ per exercise).
using BackendFactory = std::function<std::shared_ptr<CompletionBackend>(const std::string& exercise_id)>;

struct RunContext {
  BackendFactory backend_factory;
  std::shared_ptr<CompletionCache> cache;
  std::ostream* log = nullptr;
};

/// Mock oracle backends in mock mode, otherwise chat-completion backends
/// over HTTP. The cache lives in config.cache_dir when set.
RunContext make_run_context(const ExperimentConfig& config, std::ostream* log = nullptr);

struct ShotSweepResult {
  std::vector<CellResult> cells;
  std::vector<std::string> skipped;  // cells that could not be built
  std::string plot_csv;
  std::string table_text;
};

struct ComparisonResult {
  std::vector<CellResult> cells;
  std::map<TechniqueKind, MetricsReport> pooled;
  bool test_sets_identical = true;
  std::vector<std::string> skipped;
  std::string table_text;
};

struct PerExerciseResult {
  std::vector<CellResult> cells;  // one per exercise, config order
  std::vector<std::string> skipped;
  std::string table_text;
};

struct FeedbackEntry {
  std::string exercise_id;
  std::string test_id;
  std::string persona;
  Label verdict = Label::Correct;
  std::string prompt;
  std::string feedback_text;
  bool mentions_feature = false;
};

struct FeedbackResult {
  std::vector<FeedbackEntry> entries;
  double feature_mention_rate = 0.0;
  std::string transcript_text;
};

// Runs experiment cells against one cache. Reports and audit records are
// written under config.output_dir.
class ExperimentRunner {
 public:
  ExperimentRunner(ExperimentConfig config, RunContext context);

  const ExperimentConfig& config() const noexcept { return config_; }
  const FeatureCatalog& catalog() const noexcept { return catalog_; }

  CellResult run_cell(const CellKey& key);

  ShotSweepResult run_shot_sweep();
  ComparisonResult run_reasoning_comparison();
  PerExerciseResult run_per_exercise();
  /// Two-step flow: feedback for the first feedback_samples test samples of
  /// each step-one cell. Runs per-exercise cells first when none are given.
  FeedbackResult run_feedback(const std::vector<CellResult>& step_one = {});

  /// Metrics from applying the mock oracle's rule straight to the feature
  /// sequences of a cell, without prompts or parsing.
  MetricsReport direct_oracle_report(const CellResult& cell) const;

  std::size_t backend_calls() const noexcept { return backend_calls_; }
  std::size_t cache_hits() const noexcept { return cache_hits_; }

 private:
  struct ExerciseData {
    SkeletonSpec skeleton;
    std::vector<RepetitionSample> samples;
    std::vector<std::string> warnings;
  };

  const ExerciseData& exercise_data(const std::string& exercise_id);
  Gateway& gateway(const std::string& exercise_id);
  FeatureSequence sequence_for(const RepetitionSample& sample, const ExerciseData& data, InputVariant variant) const;
  void write_cell(const CellResult& cell) const;
  void log(const std::string& line) const;

  ExperimentConfig config_;
  RunContext context_;
  FeatureCatalog catalog_;
  TemplateSet templates_;
  std::map<std::string, ExerciseData> data_;
  std::map<std::string, std::unique_ptr<Gateway>> gateways_;
  std::size_t backend_calls_ = 0;
  std::size_t cache_hits_ = 0;
};

/// Pools the outcomes of several cells into one report.
MetricsReport pooled_report(const std::vector<const CellResult*>& cells, Label positive, bool probabilities);

/// Loads the repetitions of one exercise as the config describes.
LoadResult load_exercise(const ExperimentConfig& config, const std::string& exercise_id, SkeletonSpec& skeleton);

/// Renders a report over previously written cell records (cells.jsonl).
std::string summarize_results(const std::filesystem::path& output_dir);

}  // namespace rehab
