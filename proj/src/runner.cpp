#include "rehabllm/runner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"
#include "rehabllm/random.hpp"
#include "rehabllm/reference.hpp"
#include "rehabllm/synthetic.hpp"

#ifndef REHAB_SOURCE_DIR
#define REHAB_SOURCE_DIR "."
#endif

namespace rehab {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(InputVariant v) { return v == InputVariant::Features ? "features" : "joints"; }

InputVariant input_variant_from_string(std::string_view s) {
  if (s == "features") return InputVariant::Features;
  if (s == "joints") return InputVariant::Joints;
  throw ConfigError("unknown input variant '" + std::string(s) + "' (expected features or joints)");
}

// ---------------------------------------------------------------------------
// Config

namespace {

const std::vector<TechniqueKind> kComparedTechniques = {
    TechniqueKind::Classification, TechniqueKind::ChainOfThought, TechniqueKind::Certainty,
    TechniqueKind::Probability, TechniqueKind::ChainOfThoughtPlusCertainty};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown field '" + key + "' in " + where);
  }
}

ModelEndpointConfig parse_endpoint(const json& j) {
  check_keys(j,
             {"base_url", "model_name", "api_key_env_var", "temperature", "max_output_tokens", "request_timeout_s",
              "max_retries", "backoff_initial_ms", "max_in_flight"},
             "endpoint");
  ModelEndpointConfig e;
  e.base_url = j.value("base_url", e.base_url);
  e.model_name = j.value("model_name", e.model_name);
  e.api_key_env_var = j.value("api_key_env_var", e.api_key_env_var);
  e.temperature = j.value("temperature", e.temperature);
  e.max_output_tokens = j.value("max_output_tokens", e.max_output_tokens);
  e.request_timeout_s = j.value("request_timeout_s", e.request_timeout_s);
  e.max_retries = j.value("max_retries", e.max_retries);
  e.backoff_initial_ms = j.value("backoff_initial_ms", e.backoff_initial_ms);
  e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
  return e;
}

OracleConfig parse_oracle(const json& j, const std::string& exercise) {
  check_keys(j, {"rules", "certainty"}, "mock_oracle." + exercise);
  OracleConfig c;
  c.certainty = j.value("certainty", c.certainty);
  for (const auto& r : j.at("rules")) {
    check_keys(r, {"feature", "column", "threshold", "correct_if_above"}, "mock_oracle." + exercise + " rule");
    OracleRule rule;
    rule.feature = r.value("feature", std::string());
    if (r.contains("column")) rule.column = r.at("column").get<std::size_t>();
    rule.threshold = r.at("threshold").get<double>();
    rule.correct_if_above = r.value("correct_if_above", true);
    if (rule.feature.empty() && !rule.column) throw ConfigError("oracle rule needs a feature name or a column");
    c.rules.push_back(rule);
  }
  if (c.rules.empty()) throw ConfigError("mock_oracle." + exercise + " has no rules");
  return c;
}

OracleConfig oracle_for(const ExperimentConfig& config, const std::string& exercise_id) {
  OracleConfig c;
  if (const auto it = config.oracle.find(exercise_id); it != config.oracle.end()) {
    c = it->second;
  } else {
    const auto ids = synthetic_exercise_ids();
    if (std::find(ids.begin(), ids.end(), exercise_id) == ids.end()) {
      throw ConfigError("mock mode needs mock_oracle rules for exercise '" + exercise_id + "'");
    }
    c = synthetic_oracle(exercise_id);
  }
  c.delimiter = config.serialization.delimiter;
  return c;
}

std::string technique_title(TechniqueKind kind, std::size_t k) {
  switch (kind) {
    case TechniqueKind::Classification: return std::to_string(k) + "-shot";
    case TechniqueKind::ChainOfThought: return "Chain-of-Thought";
    case TechniqueKind::Certainty: return "Certainty";
    case TechniqueKind::Probability: return "Probability";
    case TechniqueKind::ChainOfThoughtPlusCertainty: return "Chain-of-Thought + Certainty";
    case TechniqueKind::RolePlayFeedback: return "Role-play feedback";
  }
  return "";
}

std::string fmt(double v) { return format_metric(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

constexpr std::string_view kReferenceNote =
    "Reference columns are published values from a hosted model that cannot be seeded; they are shown for "
    "comparison only.\n";

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.configs_dir = fs::path(REHAB_SOURCE_DIR) / "configs" / "features";
  c.templates_dir = fs::path(REHAB_SOURCE_DIR) / "templates";
  try {
    check_keys(j,
               {"dataset_id", "exercise_ids", "techniques", "k_values", "seed", "split_policy", "serialization",
                "endpoint", "mock", "mock_oracle", "threshold", "output_dir", "data", "input_variants",
                "configs_dir", "templates_dir", "cache_dir", "positive_class", "persona", "feedback_samples",
                "fixed_k"},
               "experiment config");
    if (j.contains("dataset_id")) c.dataset_id = dataset_from_string(j.at("dataset_id").get<std::string>());
    if (j.contains("exercise_ids")) c.exercise_ids = j.at("exercise_ids").get<std::vector<std::string>>();
    if (j.contains("techniques")) {
      for (const auto& t : j.at("techniques")) {
        PromptTechnique pt;
        if (t.is_string()) {
          pt.kind = technique_from_string(t.get<std::string>());
        } else {
          check_keys(t, {"kind", "persona"}, "technique");
          pt.kind = technique_from_string(t.at("kind").get<std::string>());
          if (t.contains("persona")) pt.persona = t.at("persona").get<std::string>();
        }
        c.techniques.push_back(pt);
      }
    }
    if (j.contains("k_values")) c.k_values = j.at("k_values").get<std::vector<std::size_t>>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("split_policy")) c.split_policy = split_policy_from_string(j.at("split_policy").get<std::string>());
    if (j.contains("serialization")) {
      const auto& s = j.at("serialization");
      check_keys(s, {"target_frames", "decimals", "delimiter", "include_header"}, "serialization");
      c.serialization.target_frames = s.value("target_frames", c.serialization.target_frames);
      c.serialization.decimals = s.value("decimals", c.serialization.decimals);
      c.serialization.delimiter = s.value("delimiter", c.serialization.delimiter);
      c.serialization.include_header = s.value("include_header", c.serialization.include_header);
    }
    if (j.contains("endpoint")) {
      const auto& e = j.at("endpoint");
      if (e.is_string()) {
        if (e.get<std::string>() != "mock") throw ConfigError("endpoint must be an object or \"mock\"");
        c.mock = true;
      } else {
        c.endpoint = parse_endpoint(e);
      }
    }
    if (j.contains("mock")) c.mock = c.mock || j.at("mock").get<bool>();
    if (j.contains("mock_oracle")) {
      for (const auto& [ex, o] : j.at("mock_oracle").items()) c.oracle[ex] = parse_oracle(o, ex);
    }
    if (j.contains("threshold")) c.threshold = j.at("threshold").get<double>();
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, {"kind", "root", "annotations", "skeleton", "repetitions"}, "data");
      c.data.kind = d.value("kind", c.data.kind);
      if (d.contains("root")) c.data.root = resolve(base_dir, d.at("root").get<std::string>());
      if (d.contains("annotations")) c.data.annotations = resolve(base_dir, d.at("annotations").get<std::string>());
      if (d.contains("skeleton")) c.data.skeleton = resolve(base_dir, d.at("skeleton").get<std::string>());
      c.data.repetitions = d.value("repetitions", c.data.repetitions);
    }
    if (j.contains("input_variants")) {
      c.input_variants.clear();
      for (const auto& v : j.at("input_variants")) c.input_variants.push_back(input_variant_from_string(v.get<std::string>()));
    }
    if (j.contains("configs_dir")) c.configs_dir = resolve(base_dir, j.at("configs_dir").get<std::string>());
    if (j.contains("templates_dir")) c.templates_dir = resolve(base_dir, j.at("templates_dir").get<std::string>());
    if (j.contains("cache_dir")) c.cache_dir = resolve(base_dir, j.at("cache_dir").get<std::string>());
    if (j.contains("positive_class")) c.positive_class = label_from_string(j.at("positive_class").get<std::string>());
    if (j.contains("persona")) c.persona = j.at("persona").get<std::string>();
    if (j.contains("feedback_samples")) c.feedback_samples = j.at("feedback_samples").get<std::size_t>();
    if (j.contains("fixed_k")) c.fixed_k = j.at("fixed_k").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json techniques = json::array();
  for (const auto& t : c.techniques) techniques.push_back(to_string(t.kind));
  json variants = json::array();
  for (auto v : c.input_variants) variants.push_back(to_string(v));
  json j = {{"dataset_id", to_string(c.dataset_id)},
            {"exercise_ids", c.exercise_ids},
            {"techniques", techniques},
            {"k_values", c.k_values},
            {"seed", c.seed},
            {"split_policy", to_string(c.split_policy)},
            {"serialization",
             {{"target_frames", c.serialization.target_frames},
              {"decimals", c.serialization.decimals},
              {"delimiter", c.serialization.delimiter},
              {"include_header", c.serialization.include_header}}},
            {"mock", c.mock},
            {"threshold", c.threshold},
            {"output_dir", c.output_dir.string()},
            {"data",
             {{"kind", c.data.kind},
              {"root", c.data.root.string()},
              {"annotations", c.data.annotations.string()},
              {"skeleton", c.data.skeleton.string()},
              {"repetitions", c.data.repetitions}}},
            {"input_variants", variants},
            {"configs_dir", c.configs_dir.string()},
            {"templates_dir", c.templates_dir.string()},
            {"cache_dir", c.cache_dir.string()},
            {"positive_class", to_string(c.positive_class)},
            {"persona", c.persona},
            {"feedback_samples", c.feedback_samples},
            {"fixed_k", c.fixed_k}};
  if (!c.mock) {
    j["endpoint"] = {{"base_url", c.endpoint.base_url},
                     {"model_name", c.endpoint.model_name},
                     {"api_key_env_var", c.endpoint.api_key_env_var},
                     {"temperature", c.endpoint.temperature},
                     {"max_output_tokens", c.endpoint.max_output_tokens},
                     {"request_timeout_s", c.endpoint.request_timeout_s},
                     {"max_retries", c.endpoint.max_retries},
                     {"backoff_initial_ms", c.endpoint.backoff_initial_ms},
                     {"max_in_flight", c.endpoint.max_in_flight}};
  }
  return j;
}

void ExperimentConfig::validate(const FeatureCatalog& catalog) const {
  if (exercise_ids.empty()) throw ConfigError("exercise_ids must not be empty");
  if (k_values.empty()) throw ConfigError("k_values must not be empty");
  if (input_variants.empty()) throw ConfigError("input_variants must not be empty");
  for (const auto& ex : exercise_ids) {
    if (!catalog.contains(ex)) throw ConfigError("unknown exercise id '" + ex + "'");
    if (dataset_id != DatasetId::GENERIC && catalog.at(ex).dataset_id != dataset_id) {
      throw ConfigError("exercise '" + ex + "' belongs to " + std::string(to_string(catalog.at(ex).dataset_id)) +
                        ", not " + std::string(to_string(dataset_id)));
    }
  }
  for (const auto& t : techniques) {
    if (t.kind == TechniqueKind::RolePlayFeedback) {
      throw ConfigError("RolePlayFeedback is driven by the feedback command, not listed as a technique");
    }
  }
  serialization.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  if (persona.empty()) throw ConfigError("persona must not be empty");
  if (feedback_samples == 0) throw ConfigError("feedback_samples must be positive");
  static const std::set<std::string> kinds = {"generic", "uiprmd", "rehab24", "synthetic"};
  if (!kinds.count(data.kind)) throw ConfigError("unknown data kind '" + data.kind + "'");
  if (data.kind != "synthetic" && data.root.empty()) throw ConfigError("data.root must be set");
  if (data.kind == "rehab24" && data.annotations.empty()) throw ConfigError("data.annotations must be set for rehab24");
  if (mock) {
    for (const auto& ex : exercise_ids) (void)oracle_for(*this, ex);
  } else {
    endpoint.validate();
  }
}

std::uint64_t cell_seed(std::uint64_t seed, std::string_view exercise_id, std::size_t k) {
  return fnv1a64(std::to_string(seed) + "/" + std::string(exercise_id) + "/" + std::to_string(k));
}

std::string CellKey::name() const {
  return exercise_id + "_" + std::string(to_string(technique)) + "_k" + std::to_string(k) + "_" +
         std::string(to_string(variant));
}

json to_json(const AuditRow& row) {
  json support = json::array();
  for (const auto& s : row.support_ids) support.push_back({{"id", s.identity}, {"label", to_string(s.label)}});
  const auto& o = row.outcome;
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  return {{"test_id", row.test_id},
          {"prompt_hash", row.prompt_hash},
          {"support_ids", support},
          {"truth", to_string(row.truth)},
          {"predicted", o.predicted_label ? json(to_string(*o.predicted_label)) : json(nullptr)},
          {"parse_status", to_string(o.parse_status)},
          {"probability_correct", opt(o.probability_correct)},
          {"certainty", opt(o.certainty)},
          {"reasoning_text", opt(o.reasoning_text)},
          {"raw_text", o.raw_text},
          {"transport_status", to_string(row.transport_status)},
          {"from_cache", row.from_cache}};
}

std::vector<ScoredOutcome> CellResult::scored() const {
  std::vector<ScoredOutcome> out;
  out.reserve(audit.size());
  for (const auto& row : audit) out.emplace_back(row.outcome, row.truth);
  return out;
}

RunContext make_run_context(const ExperimentConfig& config, std::ostream* log) {
  RunContext ctx;
  ctx.log = log;
  ctx.cache = config.cache_dir.empty() ? std::make_shared<CompletionCache>()
                                       : std::make_shared<CompletionCache>(config.cache_dir);
  if (config.mock) {
    ctx.backend_factory = [config](const std::string& ex) -> std::shared_ptr<CompletionBackend> {
      return std::make_shared<MockOracleBackend>(oracle_for(config, ex));
    };
  } else {
    auto shared = std::make_shared<std::shared_ptr<CompletionBackend>>();
    ctx.backend_factory = [config, shared](const std::string&) {
      if (!*shared) {
        *shared = std::make_shared<ChatCompletionBackend>(
            config.endpoint, make_http_transport(config.endpoint.base_url, config.endpoint.request_timeout_s));
      }
      return *shared;
    };
  }
  return ctx;
}

LoadResult load_exercise(const ExperimentConfig& config, const std::string& exercise_id, SkeletonSpec& skeleton) {
  const auto& d = config.data;
  auto builtin_or_file = [&](DatasetId id) {
    return d.skeleton.empty() ? SkeletonSpec::builtin(id) : SkeletonSpec::load(d.skeleton);
  };
  if (d.kind == "generic") {
    GenericDataset ds = load_generic(d.root / (exercise_id + ".jsonl"));
    if (ds.exercise_id != exercise_id) {
      throw SchemaError("dataset file for '" + exercise_id + "' holds exercise '" + ds.exercise_id + "'");
    }
    skeleton = ds.skeleton;
    return {std::move(ds.samples), {}};
  }
  if (d.kind == "uiprmd") {
    skeleton = builtin_or_file(DatasetId::UIPRMD);
    return load_uiprmd(d.root, exercise_id, skeleton);
  }
  if (d.kind == "rehab24") {
    skeleton = builtin_or_file(DatasetId::REHAB24_6);
    return load_rehab24(d.root, exercise_id, skeleton, read_rehab24_annotations(d.annotations, exercise_id));
  }
  if (d.kind == "synthetic") {
    GenericDataset ds = synthesize_exercise(exercise_id, d.repetitions, config.seed);
    skeleton = ds.skeleton;
    return {std::move(ds.samples), {}};
  }
  throw ConfigError("unknown data kind '" + d.kind + "'");
}

MetricsReport pooled_report(const std::vector<const CellResult*>& cells, Label positive, bool probabilities) {
  std::vector<ScoredOutcome> all;
  for (const auto* c : cells) {
    auto s = c->scored();
    all.insert(all.end(), s.begin(), s.end());
  }
  MetricsReport r = make_report(all, positive, probabilities);
  if (!cells.empty()) {
    r.exercise_id = "pooled";
    r.technique = cells.front()->report.technique;
    r.k = cells.front()->report.k;
    r.seed = cells.front()->report.seed;
    r.model_name = cells.front()->report.model_name;
    r.input_variant = cells.front()->report.input_variant;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Runner

ExperimentRunner::ExperimentRunner(ExperimentConfig config, RunContext context)
    : config_(std::move(config)), context_(std::move(context)) {
  if (!fs::is_directory(config_.configs_dir)) {
    throw ConfigError("feature config directory not found: " + config_.configs_dir.string());
  }
  catalog_ = FeatureCatalog::load(config_.configs_dir);
  config_.validate(catalog_);
  templates_ = fs::is_directory(config_.templates_dir) ? TemplateSet::load(config_.templates_dir) : TemplateSet::builtin();
  if (!context_.cache) context_.cache = std::make_shared<CompletionCache>();
  if (!context_.backend_factory) throw ConfigError("run context has no backend");
  fs::create_directories(config_.output_dir / "cells");
}

void ExperimentRunner::log(const std::string& line) const {
  if (context_.log) *context_.log << line << '\n';
}

const ExperimentRunner::ExerciseData& ExperimentRunner::exercise_data(const std::string& exercise_id) {
  if (const auto it = data_.find(exercise_id); it != data_.end()) return it->second;
  ExerciseData d{SkeletonSpec::uiprmd(), {}, {}};
  LoadResult loaded = load_exercise(config_, exercise_id, d.skeleton);
  d.samples = std::move(loaded.samples);
  d.warnings = std::move(loaded.warnings);
  for (const auto& w : d.warnings) log("warning: " + w);
  if (d.samples.empty()) throw EmptyInput("no repetitions found for exercise '" + exercise_id + "'");
  return data_.emplace(exercise_id, std::move(d)).first->second;
}

Gateway& ExperimentRunner::gateway(const std::string& exercise_id) {
  auto& slot = gateways_[exercise_id];
  if (!slot) {
    const int in_flight = config_.mock ? 4 : config_.endpoint.max_in_flight;
    slot = std::make_unique<Gateway>(context_.backend_factory(exercise_id), context_.cache, in_flight);
  }
  return *slot;
}

FeatureSequence ExperimentRunner::sequence_for(const RepetitionSample& sample, const ExerciseData& data,
                                               InputVariant variant) const {
  return variant == InputVariant::Features ? extract_features(sample, data.skeleton, catalog_.at(sample.exercise_id))
                                           : joints_as_sequence(sample, data.skeleton);
}

CellResult ExperimentRunner::run_cell(const CellKey& key) {
  const ExerciseData& data = exercise_data(key.exercise_id);
  const FeatureSpec& spec = catalog_.at(key.exercise_id);
  CellResult cell;
  cell.key = key;
  cell.split_seed = cell_seed(config_.seed, key.exercise_id, key.k);
  const SupportTestSplit split = split_support_and_test(data.samples, key.k, cell.split_seed, config_.split_policy);
  if (split.test.empty()) throw CapacityError("no test samples left for " + key.name());

  std::vector<FeatureSequence> support;
  for (const auto& s : split.support) support.push_back(sequence_for(s, data, key.variant));
  for (const auto& s : split.test) cell.test_sequences.push_back(sequence_for(s, data, key.variant));

  const PromptTechnique technique{key.technique, key.k, std::nullopt};
  const std::string sensor = sensor_name(config_.dataset_id);
  std::vector<PromptBundle> bundles;
  for (const auto& t : cell.test_sequences) {
    bundles.push_back(render_prompt(technique, support, t, spec.exercise_name, sensor, config_.serialization, templates_));
  }

  Gateway& gw = gateway(key.exercise_id);
  const std::size_t calls_before = gw.backend_calls();
  const auto records = gw.complete_all(bundles);
  cell.backend_calls = gw.backend_calls() - calls_before;

  for (std::size_t i = 0; i < bundles.size(); ++i) {
    AuditRow row;
    row.test_id = bundles[i].test_id;
    row.prompt_hash = records[i].prompt_hash;
    row.support_ids = bundles[i].support_ids;
    row.truth = cell.test_sequences[i].label;
    row.outcome = parse(records[i].response_text, bundles[i].expected_output_format, config_.threshold);
    row.transport_status = records[i].transport_status;
    row.from_cache = records[i].from_cache;
    if (row.from_cache) ++cell.cache_hits;
    cell.audit.push_back(std::move(row));
  }

  cell.report = make_report(cell.scored(), config_.positive_class, key.technique == TechniqueKind::Probability);
  cell.report.exercise_id = key.exercise_id;
  cell.report.technique = std::string(to_string(key.technique));
  cell.report.k = key.k;
  cell.report.seed = config_.seed;
  cell.report.model_name = gw.backend().model_name();
  cell.report.input_variant = std::string(to_string(key.variant));

  backend_calls_ += cell.backend_calls;
  cache_hits_ += cell.cache_hits;
  write_cell(cell);
  log(key.name() + ": n=" + std::to_string(cell.report.n_samples) + " accuracy=" + fmt(cell.report.metrics.accuracy) +
      " calls=" + std::to_string(cell.backend_calls) + " cached=" + std::to_string(cell.cache_hits));
  return cell;
}

void ExperimentRunner::write_cell(const CellResult& cell) const {
  json audit = json::array();
  for (const auto& row : cell.audit) audit.push_back(to_json(row));
  const json record = {{"cell", cell.key.name()},
                       {"split_seed", cell.split_seed},
                       {"split_policy", to_string(config_.split_policy)},
                       {"report", to_json(cell.report)},
                       {"audit", audit}};
  write_text(config_.output_dir / "cells" / (cell.key.name() + ".json"), record.dump(2) + "\n");
}

ShotSweepResult ExperimentRunner::run_shot_sweep() {
  ShotSweepResult result;
  // variant -> k -> cells
  std::map<InputVariant, std::map<std::size_t, std::vector<std::size_t>>> index;
  for (auto variant : config_.input_variants) {
    for (auto k : config_.k_values) {
      auto& slot = index[variant][k];
      for (const auto& ex : config_.exercise_ids) {
        const CellKey key{ex, TechniqueKind::Classification, k, variant};
        try {
          result.cells.push_back(run_cell(key));
          slot.push_back(result.cells.size() - 1);
        } catch (const CapacityError& e) {
          result.skipped.push_back(key.name() + ": " + e.what());
          log("skipped " + key.name() + ": " + e.what());
        }
      }
    }
  }

  std::ostringstream csv;
  csv << "k";
  for (auto v : config_.input_variants) csv << ',' << to_string(v) << "_macro_accuracy," << to_string(v) << "_pooled_accuracy";
  csv << '\n';
  for (auto k : config_.k_values) {
    csv << k;
    for (auto v : config_.input_variants) {
      const auto& ids = index[v][k];
      if (ids.empty()) {
        csv << ",,";
        continue;
      }
      std::vector<const CellResult*> cells;
      double macro = 0.0;
      for (auto i : ids) {
        cells.push_back(&result.cells[i]);
        macro += result.cells[i].report.metrics.accuracy;
      }
      macro /= static_cast<double>(ids.size());
      const auto pooled = pooled_report(cells, config_.positive_class, false);
      csv << ',' << fmt(macro) << ',' << fmt(pooled.metrics.accuracy);
    }
    csv << '\n';
  }
  result.plot_csv = csv.str();

  std::string text;
  for (auto v : config_.input_variants) {
    text += "Shot sweep, " + std::string(to_string(config_.dataset_id)) + ", " + std::string(to_string(v)) +
            ", pooled over " + std::to_string(config_.exercise_ids.size()) + " exercise(s)\n";
    std::vector<std::vector<std::string>> rows = {
        {"Setting", "Accuracy", "Precision", "Recall", "F1", "n", "Ref Acc.", "Ref Prec.", "Ref Rec.", "Ref F1"}};
    for (auto k : config_.k_values) {
      const auto& ids = index[v][k];
      std::vector<std::string> row{std::to_string(k) + "-shot"};
      if (ids.empty()) {
        row.insert(row.end(), {"-", "-", "-", "-", "0"});
      } else {
        std::vector<const CellResult*> cells;
        for (auto i : ids) cells.push_back(&result.cells[i]);
        const auto r = pooled_report(cells, config_.positive_class, false);
        row.insert(row.end(), {fmt(r.metrics.accuracy), fmt(r.metrics.precision), fmt(r.metrics.recall),
                               fmt(r.metrics.f1), std::to_string(r.n_samples)});
      }
      const auto ref = v == InputVariant::Features ? reference_shot_row(config_.dataset_id, k) : std::nullopt;
      if (ref) {
        row.insert(row.end(), {fmt(ref->accuracy), fmt(ref->precision), fmt(ref->recall), fmt(ref->f1)});
      } else {
        row.insert(row.end(), {"-", "-", "-", "-"});
      }
      rows.push_back(row);
    }
    text += text_table(rows) + "\n";
  }
  text += kReferenceNote;
  for (const auto& s : result.skipped) text += "skipped: " + s + "\n";
  result.table_text = text;

  write_text(config_.output_dir / "sweep_plot.csv", result.plot_csv);
  write_text(config_.output_dir / "sweep_table.txt", result.table_text);
  return result;
}

ComparisonResult ExperimentRunner::run_reasoning_comparison() {
  ComparisonResult result;
  std::vector<TechniqueKind> kinds;
  for (const auto& t : config_.techniques) kinds.push_back(t.kind);
  if (kinds.empty()) kinds = kComparedTechniques;
  const InputVariant variant = config_.input_variants.front();
  const std::size_t k = config_.fixed_k;

  std::map<TechniqueKind, std::vector<std::size_t>> by_technique;
  std::map<std::string, std::vector<std::string>> first_test_ids;
  for (auto kind : kinds) {
    for (const auto& ex : config_.exercise_ids) {
      const CellKey key{ex, kind, k, variant};
      try {
        result.cells.push_back(run_cell(key));
      } catch (const CapacityError& e) {
        result.skipped.push_back(key.name() + ": " + e.what());
        continue;
      }
      by_technique[kind].push_back(result.cells.size() - 1);
      std::vector<std::string> ids;
      for (const auto& row : result.cells.back().audit) ids.push_back(row.test_id);
      const auto [it, inserted] = first_test_ids.emplace(ex, ids);
      if (!inserted && it->second != ids) result.test_sets_identical = false;
    }
  }

  std::vector<std::vector<std::string>> rows = {{"Setting", "Accuracy", "Precision", "Recall", "F1", "AUC-ROC",
                                                 "AUC-PR", "Ref Acc.", "Ref Prec.", "Ref Rec.", "Ref F1",
                                                 "Ref AUC-ROC", "Ref AUC-PR"}};
  for (auto kind : kinds) {
    std::vector<std::string> row{technique_title(kind, k)};
    const auto& ids = by_technique[kind];
    if (ids.empty()) {
      row.insert(row.end(), {"-", "-", "-", "-", "-", "-"});
    } else {
      std::vector<const CellResult*> cells;
      for (auto i : ids) cells.push_back(&result.cells[i]);
      const auto r = pooled_report(cells, config_.positive_class, kind == TechniqueKind::Probability);
      row.insert(row.end(), {fmt(r.metrics.accuracy), fmt(r.metrics.precision), fmt(r.metrics.recall),
                             fmt(r.metrics.f1), format_metric(r.auc_roc), format_metric(r.auc_pr)});
      result.pooled[kind] = r;
    }
    if (const auto ref = reference_technique_row(config_.dataset_id, kind); ref && k == 3) {
      row.insert(row.end(), {fmt(ref->accuracy), fmt(ref->precision), fmt(ref->recall), fmt(ref->f1),
                             format_metric(ref->auc_roc), format_metric(ref->auc_pr)});
    } else {
      row.insert(row.end(), {"-", "-", "-", "-", "-", "-"});
    }
    rows.push_back(row);
  }
  result.table_text = "Prompting techniques, " + std::string(to_string(config_.dataset_id)) + ", " + std::to_string(k) +
                      "-shot, pooled over " + std::to_string(config_.exercise_ids.size()) + " exercise(s)\n" +
                      text_table(rows) + "\n" + std::string(kReferenceNote) +
                      "Identical test sets across techniques: " + (result.test_sets_identical ? "yes" : "no") + "\n";
  for (const auto& s : result.skipped) result.table_text += "skipped: " + s + "\n";
  write_text(config_.output_dir / "compare_table.txt", result.table_text);
  return result;
}

PerExerciseResult ExperimentRunner::run_per_exercise() {
  PerExerciseResult result;
  const InputVariant variant = config_.input_variants.front();
  std::vector<std::vector<std::string>> rows = {{"Exercise"}};
  std::vector<std::string> acc{"Accuracy"}, prec{"Precision"}, rec{"Recall"}, f1{"F1"};
  std::vector<std::string> racc{"Ref Accuracy"}, rprec{"Ref Precision"}, rrec{"Ref Recall"}, rf1{"Ref F1"};
  for (const auto& ex : config_.exercise_ids) {
    const CellKey key{ex, TechniqueKind::Certainty, config_.fixed_k, variant};
    rows[0].push_back(ex);
    try {
      result.cells.push_back(run_cell(key));
      const auto& m = result.cells.back().report.metrics;
      acc.push_back(fmt(m.accuracy));
      prec.push_back(fmt(m.precision));
      rec.push_back(fmt(m.recall));
      f1.push_back(fmt(m.f1));
    } catch (const CapacityError& e) {
      result.skipped.push_back(key.name() + ": " + e.what());
      for (auto* r : {&acc, &prec, &rec, &f1}) r->push_back("-");
    }
    const auto ref = config_.fixed_k == 3 ? reference_exercise_row(ex) : std::nullopt;
    racc.push_back(ref ? fmt(ref->accuracy) : "-");
    rprec.push_back(ref ? fmt(ref->precision) : "-");
    rrec.push_back(ref ? fmt(ref->recall) : "-");
    rf1.push_back(ref ? fmt(ref->f1) : "-");
  }
  for (auto* r : {&acc, &prec, &rec, &f1, &racc, &rprec, &rrec, &rf1}) rows.push_back(*r);
  result.table_text = "Per exercise, certainty elicitation, " + std::to_string(config_.fixed_k) + "-shot\n" +
                      text_table(rows) + "\n" + std::string(kReferenceNote);
  for (const auto& s : result.skipped) result.table_text += "skipped: " + s + "\n";
  write_text(config_.output_dir / "per_exercise_table.txt", result.table_text);
  return result;
}

FeedbackResult ExperimentRunner::run_feedback(const std::vector<CellResult>& step_one) {
  std::vector<CellResult> own;
  const std::vector<CellResult>* cells = &step_one;
  if (step_one.empty()) {
    own = run_per_exercise().cells;
    cells = &own;
  }
  FeedbackResult result;
  const std::string sensor = sensor_name(config_.dataset_id);
  for (const auto& cell : *cells) {
    const auto& ex = cell.key.exercise_id;
    const FeatureSpec& spec = catalog_.at(ex);
    const std::size_t n = std::min(config_.feedback_samples, cell.audit.size());
    std::vector<PromptBundle> bundles;
    for (std::size_t i = 0; i < n; ++i) {
      bundles.push_back(render_feedback_prompt(config_.persona, cell.audit[i].outcome, cell.test_sequences[i],
                                               spec.exercise_name, sensor, config_.serialization, templates_,
                                               std::max<std::size_t>(cell.key.k, 1)));
    }
    Gateway& gw = gateway(ex);
    const std::size_t calls_before = gw.backend_calls();
    const auto records = gw.complete_all(bundles);
    backend_calls_ += gw.backend_calls() - calls_before;
    for (std::size_t i = 0; i < n; ++i) {
      if (records[i].from_cache) ++cache_hits_;
      FeedbackEntry e;
      e.exercise_id = ex;
      e.test_id = bundles[i].test_id;
      e.persona = config_.persona;
      e.verdict = *cell.audit[i].outcome.predicted_label;
      e.prompt = bundles[i].rendered_text;
      e.feedback_text = parse(records[i].response_text, OutputFormat::FreeText).feedback_text.value_or("");
      const std::string low = lower(e.feedback_text);
      for (const auto& name : cell.test_sequences[i].feature_names) {
        if (low.find(lower(name)) != std::string::npos) e.mentions_feature = true;
      }
      result.entries.push_back(std::move(e));
    }
  }

  std::size_t mentions = 0;
  std::string jsonl;
  std::string text;
  for (const auto& e : result.entries) {
    if (e.mentions_feature) ++mentions;
    jsonl += json{{"exercise_id", e.exercise_id},
                  {"test_id", e.test_id},
                  {"persona", e.persona},
                  {"verdict", to_string(e.verdict)},
                  {"prompt", e.prompt},
                  {"feedback_text", e.feedback_text},
                  {"mentions_feature", e.mentions_feature}}
                 .dump() +
             "\n";
    text += "[" + e.test_id + "] persona: " + e.persona + ", verdict: " + std::string(to_string(e.verdict)) + "\n" +
            e.feedback_text + "\n\n";
  }
  result.feature_mention_rate =
      result.entries.empty() ? 0.0 : static_cast<double>(mentions) / static_cast<double>(result.entries.size());
  text += "Feedback mentioning at least one feature name: " + std::to_string(mentions) + " of " +
          std::to_string(result.entries.size()) + "\n";
  result.transcript_text = text;
  write_text(config_.output_dir / "feedback_transcript.jsonl", jsonl);
  write_text(config_.output_dir / "feedback_transcript.txt", text);
  return result;
}

MetricsReport ExperimentRunner::direct_oracle_report(const CellResult& cell) const {
  const OracleConfig oracle = oracle_for(config_, cell.key.exercise_id);
  std::vector<ScoredOutcome> scored;
  for (const auto& seq : cell.test_sequences) {
    const OracleDecision d = direct_oracle_decision(seq, config_.serialization, oracle);
    AssessmentOutcome o;
    o.parse_status = ParseStatus::Parsed;
    o.predicted_label = d.label;
    switch (expected_format(cell.key.technique)) {
      case OutputFormat::ProbabilityOnly:
        o.probability_correct = d.probability_hundredths / 100.0;
        o.predicted_label = *o.probability_correct >= config_.threshold ? Label::Correct : Label::Incorrect;
        break;
      case OutputFormat::LabelCertainty:
      case OutputFormat::LabelCertaintyReasoning: o.certainty = oracle.certainty; break;
      default: break;
    }
    scored.emplace_back(o, seq.label);
  }
  MetricsReport r = make_report(scored, config_.positive_class, cell.key.technique == TechniqueKind::Probability);
  r.exercise_id = cell.report.exercise_id;
  r.technique = cell.report.technique;
  r.k = cell.report.k;
  r.seed = cell.report.seed;
  r.model_name = "direct-threshold";
  r.input_variant = cell.report.input_variant;
  return r;
}

std::string summarize_results(const fs::path& output_dir) {
  const fs::path cells_dir = output_dir / "cells";
  if (!fs::is_directory(cells_dir)) throw ConfigError("no cell records under " + output_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cells_dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::vector<std::string>> rows = {{"Cell", "n", "Accuracy", "Precision", "Recall", "F1", "AUC-ROC",
                                                 "AUC-PR", "Parse fail", "Recovered", "Model"}};
  auto opt = [](const json& v) { return v.is_null() ? std::string("-") : format_metric(v.get<double>()); };
  for (const auto& f : files) {
    std::ifstream in(f);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw SchemaError(f.string() + ": " + e.what());
    }
    const auto& r = j.at("report");
    rows.push_back({j.at("cell").get<std::string>(), std::to_string(r.at("n_samples").get<std::size_t>()),
                    fmt(r.at("accuracy").get<double>()), fmt(r.at("precision").get<double>()),
                    fmt(r.at("recall").get<double>()), fmt(r.at("f1").get<double>()), opt(r.at("auc_roc")),
                    opt(r.at("auc_pr")), fmt(r.at("parse_failure_rate").get<double>()),
                    fmt(r.value("recovered_rate", 0.0)),
                    r.at("model_name").get<std::string>()});
  }
  std::string out = text_table(rows);
  for (const char* name : {"sweep_table.txt", "compare_table.txt", "per_exercise_table.txt"}) {
    if (fs::exists(output_dir / name)) out += "\nsee " + (output_dir / name).string();
  }
  return out + "\n";
}

}  // namespace rehab
