#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"
#include "rehabllm/runner.hpp"
#include "rehabllm/synthetic.hpp"

namespace fs = std::filesystem;
using namespace rehab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTransport = 3;

struct GlobalOptions {
  std::string config;
  bool mock = false;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config is required for this command");
  ExperimentConfig c = load_experiment_config(g.config);
  if (g.mock) c.mock = true;
  if (!g.cache_dir.empty()) c.cache_dir = g.cache_dir;
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

ExperimentRunner make_runner(const GlobalOptions& g) {
  ExperimentConfig c = resolve_config(g);
  RunContext ctx = make_run_context(c, &std::cerr);
  return ExperimentRunner(std::move(c), std::move(ctx));
}

void print_cache_summary(const ExperimentRunner& r) {
  std::cerr << "backend calls: " << r.backend_calls() << ", cache hits: " << r.cache_hits() << "\n";
}

int cmd_ingest(const GlobalOptions& g) {
  ExperimentConfig c = resolve_config(g);
  const fs::path out = g.out.empty() ? c.output_dir / "ingested" : fs::path(g.out);
  fs::create_directories(out);
  for (const auto& ex : c.exercise_ids) {
    SkeletonSpec skeleton = SkeletonSpec::uiprmd();
    LoadResult loaded = load_exercise(c, ex, skeleton);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    if (loaded.samples.empty()) throw EmptyInput("no repetitions found for exercise '" + ex + "'");
    GenericDataset ds{skeleton, ex, loaded.samples.front().frame_rate_hz, std::move(loaded.samples)};
    const fs::path path = out / (ex + ".jsonl");
    save_generic(path, ds);
    std::size_t correct = 0;
    for (const auto& s : ds.samples) correct += s.label == Label::Correct;
    std::cout << ex << ": " << ds.samples.size() << " repetitions (" << correct << " correct) -> " << path.string()
              << "\n";
  }
  return kExitOk;
}

int cmd_features(const GlobalOptions& g) {
  ExperimentConfig c = resolve_config(g);
  const FeatureCatalog catalog = FeatureCatalog::load(c.configs_dir);
  c.validate(catalog);
  const fs::path out = g.out.empty() ? c.output_dir / "features" : fs::path(g.out);
  fs::create_directories(out);
  for (const auto& ex : c.exercise_ids) {
    SkeletonSpec skeleton = SkeletonSpec::uiprmd();
    const LoadResult loaded = load_exercise(c, ex, skeleton);
    const FeatureSpec& spec = catalog.at(ex);
    const fs::path path = out / (ex + "_features.csv");
    std::ofstream csv(path);
    csv << "sample,label,frame";
    for (const auto& name : spec.feature_names()) csv << ',' << name;
    csv << '\n';
    for (const auto& s : loaded.samples) {
      const FeatureSequence seq = extract_features(s, skeleton, spec);
      for (std::size_t f = 0; f < seq.values.rows(); ++f) {
        csv << seq.identity() << ',' << to_string(seq.label) << ',' << f;
        for (std::size_t k = 0; k < seq.values.cols(); ++k) csv << ',' << seq.values(f, k);
        csv << '\n';
      }
    }
    std::cout << ex << ": " << loaded.samples.size() << " repetitions, " << spec.num_features()
              << " features -> " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_synth(const GlobalOptions& g, std::size_t repetitions) {
  const fs::path out = g.out.empty() ? fs::path("synthetic") : fs::path(g.out);
  fs::create_directories(out);
  for (const auto& ex : synthetic_exercise_ids()) {
    const GenericDataset ds = synthesize_exercise(ex, repetitions, g.seed.value_or(42));
    save_generic(out / (ex + ".jsonl"), ds);
    std::cout << ex << ": " << ds.samples.size() << " repetitions -> " << (out / (ex + ".jsonl")).string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exercise quality assessment with language-model prompts"};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config file (JSON)");
  app.add_flag("--mock", g.mock, "Use the deterministic mock oracle instead of a live endpoint");
  app.add_option("--cache-dir", g.cache_dir, "Completion cache directory");
  app.add_option("--seed", g.seed, "Global seed");
  app.add_option("--out", g.out, "Output directory");

  auto* ingest = app.add_subcommand("ingest", "Load a dataset and write it in the generic JSONL format");
  auto* features = app.add_subcommand("features", "Extract per-frame features to CSV");
  auto* sweep = app.add_subcommand("sweep", "Classification accuracy across shot counts");
  auto* compare = app.add_subcommand("compare", "Compare prompting techniques at a fixed shot count");
  auto* per_exercise = app.add_subcommand("per-exercise", "Certainty elicitation per exercise");
  auto* feedback = app.add_subcommand("feedback", "Two-step role-play feedback transcript");
  auto* report = app.add_subcommand("report", "Summarize written cell records");
  auto* synth = app.add_subcommand("synth", "Write synthetic m01/m07 datasets");
  std::size_t repetitions = 40;
  synth->add_option("--repetitions", repetitions, "Repetitions per exercise")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(g);
    if (features->parsed()) return cmd_features(g);
    if (synth->parsed()) return cmd_synth(g, repetitions);
    if (report->parsed()) {
      const fs::path dir = !g.out.empty() ? fs::path(g.out) : resolve_config(g).output_dir;
      std::cout << summarize_results(dir);
      return kExitOk;
    }
    ExperimentRunner runner = make_runner(g);
    if (sweep->parsed()) {
      const auto r = runner.run_shot_sweep();
      std::cout << r.table_text << "\nplot data:\n" << r.plot_csv;
    } else if (compare->parsed()) {
      std::cout << runner.run_reasoning_comparison().table_text;
    } else if (per_exercise->parsed()) {
      std::cout << runner.run_per_exercise().table_text;
    } else if (feedback->parsed()) {
      std::cout << runner.run_feedback().transcript_text;
    }
    print_cache_summary(runner);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const OracleError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NotFound& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TransportError& e) {
    std::cerr << "transport failure: " << e.what() << "\n";
    return kExitTransport;
  } catch (const EndpointError& e) {
    std::cerr << "transport failure: " << e.what() << "\n";
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
