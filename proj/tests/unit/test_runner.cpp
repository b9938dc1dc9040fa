#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "pipeline.hpp"
#include "rehabllm/errors.hpp"
#include "rehabllm/runner.hpp"
#include "tmpdir.hpp"

using namespace rehab;
using namespace rehab::testing;
using json = nlohmann::json;

namespace {

RunContext counting_context(const ExperimentConfig& config, std::shared_ptr<std::atomic<int>> built) {
  RunContext ctx = make_run_context(config);
  auto inner = ctx.backend_factory;
  ctx.backend_factory = [inner, built](const std::string& ex) {
    ++*built;
    return inner(ex);
  };
  return ctx;
}

}  // namespace

TEST_CASE("config parsing") {
  TempDir dir;
  write_file(dir / "exp.json", R"({
    // comments are allowed
    "dataset_id": "UIPRMD",
    "exercise_ids": ["m01"],
    "techniques": ["Certainty", {"kind": "Probability"}],
    "k_values": [0, 3],
    "seed": 7,
    "split_policy": "Any",
    "serialization": {"target_frames": 20, "decimals": 2},
    "endpoint": {"base_url": "http://localhost:9/v1", "model_name": "m", "max_retries": 1},
    "output_dir": "results",
    "data": {"kind": "generic", "root": "data"},
    "input_variants": ["features", "joints"],
    "positive_class": "Incorrect"
  })");
  const ExperimentConfig c = load_experiment_config(dir / "exp.json");
  CHECK(c.exercise_ids == std::vector<std::string>{"m01"});
  REQUIRE(c.techniques.size() == 2);
  CHECK(c.techniques[1].kind == TechniqueKind::Probability);
  CHECK(c.k_values == std::vector<std::size_t>{0, 3});
  CHECK(c.seed == 7);
  CHECK(c.split_policy == SplitPolicy::Any);
  CHECK(c.serialization.target_frames == 20);
  CHECK(c.serialization.decimals == 2);
  CHECK(c.serialization.delimiter == ",");
  CHECK_FALSE(c.mock);
  CHECK(c.endpoint.max_retries == 1);
  CHECK(c.output_dir == dir.path() / "results");
  CHECK(c.data.root == dir.path() / "data");
  CHECK(c.input_variants.size() == 2);
  CHECK(c.positive_class == Label::Incorrect);

  const ExperimentConfig again = parse_experiment_config(to_json(c), dir.path());
  CHECK(to_json(again) == to_json(c));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_experiment_config({{"exercise_id", {"m01"}}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"endpoint", {{"url", "x"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"endpoint", "live"}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"techniques", {"ZeroShot"}}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"k_values", "3"}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"dataset_id", "NTU"}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"input_variants", {"pixels"}}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"mock_oracle", {{"m01", {{"rules", json::array()}}}}}}), ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/exp.json"), ConfigError);

  TempDir dir;
  const FeatureCatalog catalog = FeatureCatalog::load(synthetic_mock_config(dir.path()).configs_dir);
  ExperimentConfig c = synthetic_mock_config(dir.path());
  CHECK_NOTHROW(c.validate(catalog));
  c.k_values.clear();
  CHECK_THROWS_AS(c.validate(catalog), ConfigError);
  c = synthetic_mock_config(dir.path());
  c.exercise_ids = {"ex1"};  // belongs to the other dataset
  CHECK_THROWS_AS(c.validate(catalog), ConfigError);
  c = synthetic_mock_config(dir.path());
  c.exercise_ids = {"m03"};  // no mock rules and no generator
  CHECK_THROWS_AS(c.validate(catalog), ConfigError);
  c = synthetic_mock_config(dir.path());
  c.threshold = 1.5;
  CHECK_THROWS_AS(c.validate(catalog), ConfigError);
  c = synthetic_mock_config(dir.path());
  c.data.kind = "generic";
  CHECK_THROWS_AS(c.validate(catalog), ConfigError);
}

TEST_CASE("unknown exercise fails before any completion call") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path());
  c.exercise_ids = {"m01", "m42"};
  auto built = std::make_shared<std::atomic<int>>(0);
  CHECK_THROWS_AS(ExperimentRunner(c, counting_context(c, built)), ConfigError);
  CHECK(*built == 0);
}

TEST_CASE("cell seeds") {
  CHECK(cell_seed(42, "m01", 3) == cell_seed(42, "m01", 3));
  CHECK(cell_seed(42, "m01", 3) != cell_seed(42, "m01", 2));
  CHECK(cell_seed(42, "m01", 3) != cell_seed(42, "m07", 3));
  CHECK(cell_seed(42, "m01", 3) != cell_seed(43, "m01", 3));
  CHECK(CellKey{"m01", TechniqueKind::Certainty, 3, InputVariant::Features}.name() == "m01_Certainty_k3_features");
}

TEST_CASE("shot sweep in mock mode") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path());
  ExperimentRunner runner(c, make_run_context(c));
  const auto sweep = runner.run_shot_sweep();
  CHECK(sweep.cells.size() == 12);
  CHECK(sweep.skipped.empty());
  for (const auto& cell : sweep.cells) {
    CAPTURE(cell.key.name());
    CHECK(cell.audit.size() == cell.report.n_samples);
    CHECK(cell.audit.size() <= 40 - 2 * cell.key.k);
    // support subjects never show up among the test samples
    auto subject = [](const std::string& id) { return id.substr(0, id.rfind('/')); };
    std::set<std::string> support_subjects;
    for (const auto& s : cell.audit.front().support_ids) support_subjects.insert(subject(s.identity));
    for (const auto& row : cell.audit) CHECK(support_subjects.count(subject(row.test_id)) == 0);
    if (cell.key.k >= 1) CHECK(cell.report.metrics.accuracy == 1.0);
    CHECK(same_report(cell.report, runner.direct_oracle_report(cell)));
    CHECK(std::filesystem::exists(dir / ("cells/" + cell.key.name() + ".json")));
  }
  // header plus one row per k
  CHECK(count_of(sweep.plot_csv, "\n") == 7);
  CHECK(sweep.plot_csv.rfind("k,features_macro_accuracy,features_pooled_accuracy\n", 0) == 0);
  CHECK(sweep.table_text.find("3-shot") != std::string::npos);
  CHECK(sweep.table_text.find("0.68") != std::string::npos);  // reference column
  CHECK(std::filesystem::exists(dir / "sweep_plot.csv"));

  const std::string summary = summarize_results(dir.path());
  CHECK(summary.find("m07_Classification_k5_features") != std::string::npos);
}

TEST_CASE("audit rows carry what is needed to rebuild the prompt") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path());
  c.k_values = {2};
  c.exercise_ids = {"m01"};
  ExperimentRunner runner(c, make_run_context(c));
  const CellResult cell = runner.run_cell({"m01", TechniqueKind::Classification, 2, InputVariant::Features});
  const json record = json::parse(read_text(dir / "cells/m01_Classification_k2_features.json"));
  CHECK(record.at("audit").size() == cell.audit.size());
  const auto& row = record.at("audit").at(0);
  CHECK(row.at("support_ids").size() == 4);
  CHECK(row.at("prompt_hash").get<std::string>().size() == 64);
  CHECK(row.at("parse_status") == "Parsed");
  CHECK(record.at("split_seed") == cell_seed(42, "m01", 2));
}

TEST_CASE("technique comparison in mock mode") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path());
  ExperimentRunner runner(c, make_run_context(c));
  const auto cmp = runner.run_reasoning_comparison();
  CHECK(cmp.test_sets_identical);
  CHECK(cmp.pooled.size() == 5);
  for (const auto& [kind, report] : cmp.pooled) {
    CAPTURE(to_string(kind));
    CHECK(report.auc_roc.has_value() == (kind == TechniqueKind::Probability));
    CHECK(report.auc_pr.has_value() == (kind == TechniqueKind::Probability));
    CHECK(report.counts == cmp.pooled.at(TechniqueKind::Classification).counts);
  }
  // the oracle ignores the technique, so every technique gives the same labels
  std::map<std::string, std::vector<std::optional<Label>>> labels;
  for (const auto& cell : cmp.cells) {
    std::vector<std::optional<Label>> l;
    for (const auto& row : cell.audit) l.push_back(row.outcome.predicted_label);
    const auto [it, fresh] = labels.emplace(cell.key.exercise_id, l);
    if (!fresh) CHECK(it->second == l);
    if (cell.key.technique == TechniqueKind::Certainty) {
      for (const auto& row : cell.audit) CHECK(row.outcome.certainty == 0.85);
    }
    if (cell.key.technique == TechniqueKind::ChainOfThought) {
      for (const auto& row : cell.audit) CHECK(row.outcome.reasoning_text.has_value());
    }
  }
  CHECK(cmp.table_text.find("Identical test sets across techniques: yes") != std::string::npos);
  CHECK(cmp.table_text.find("Chain-of-Thought + Certainty") != std::string::npos);
}

TEST_CASE("per-exercise and feedback") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path());
  c.exercise_ids = {"m07", "m01"};
  ExperimentRunner runner(c, make_run_context(c));
  const auto per = runner.run_per_exercise();
  REQUIRE(per.cells.size() == 2);
  CHECK(per.cells[0].key.exercise_id == "m07");
  CHECK(per.cells[0].key.technique == TechniqueKind::Certainty);
  CHECK(per.cells[0].key.k == 3);
  CHECK(per.table_text.find("0.76") != std::string::npos);  // m01 reference accuracy

  const auto fb = runner.run_feedback(per.cells);
  CHECK(fb.entries.size() == 6);
  for (const auto& e : fb.entries) {
    CHECK(e.persona == "physiotherapist");
    CHECK_FALSE(e.feedback_text.empty());
    CHECK(e.mentions_feature);
    CHECK(e.prompt.find("You are a physiotherapist.") != std::string::npos);
  }
  CHECK(fb.feature_mention_rate == 1.0);

  TempDir other;
  ExperimentConfig c2 = c;
  c2.output_dir = other.path();
  ExperimentRunner again(c2, make_run_context(c2));
  CHECK(again.run_feedback().transcript_text == fb.transcript_text);
  CHECK(std::filesystem::exists(other / "feedback_transcript.jsonl"));
}

TEST_CASE("feedback without a step-one label is a state error") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path());
  c.exercise_ids = {"m01"};
  ExperimentRunner runner(c, make_run_context(c));
  auto per = runner.run_per_exercise();
  per.cells[0].audit[0].outcome = AssessmentOutcome{};
  CHECK_THROWS_AS(runner.run_feedback(per.cells), StateError);
}

TEST_CASE("cells without enough samples are skipped and noted") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path(), 12);
  c.k_values = {1, 9};
  ExperimentRunner runner(c, make_run_context(c));
  const auto sweep = runner.run_shot_sweep();
  CHECK(sweep.cells.size() == 2);
  CHECK(sweep.skipped.size() == 2);
  CHECK(sweep.table_text.find("skipped: m01_Classification_k9_features") != std::string::npos);
}

TEST_CASE("mock end-to-end equals the direct rule") {
  TempDir dir;
  const auto e = check_mock_end_to_end(dir.path());
  INFO(e.check.detail);
  CHECK(e.check.ok);
  CHECK(e.min_accuracy == 1.0);
}

TEST_CASE("interrupted sweep resumes from the cache") {
  TempDir dir;
  const auto r = check_resumability(dir.path(), 50);
  INFO(r.check.detail);
  CHECK(r.check.ok);
  CHECK(r.second_run_calls + r.second_run_hits == r.total_prompts);
}

TEST_CASE("joints input variant in mock mode needs rules over joint columns") {
  TempDir dir;
  ExperimentConfig c = synthetic_mock_config(dir.path(), 12);
  c.k_values = {1};
  c.exercise_ids = {"m01"};
  c.input_variants = {InputVariant::Joints};
  ExperimentRunner runner(c, make_run_context(c));
  CHECK_THROWS_AS(runner.run_shot_sweep(), OracleError);

  c.oracle["m01"] = OracleConfig{{{"Waist.y", std::nullopt, -100.0, true}}, ",", 0.85};
  ExperimentRunner with_rule(c, make_run_context(c));
  const auto sweep = with_rule.run_shot_sweep();
  REQUIRE(sweep.cells.size() == 1);
  CHECK(sweep.cells[0].report.parse_failure_rate == 0.0);
}
