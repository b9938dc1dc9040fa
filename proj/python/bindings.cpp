#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"
#include "rehabllm/features.hpp"
#include "rehabllm/gateway.hpp"
#include "rehabllm/geometry.hpp"
#include "rehabllm/metrics.hpp"
#include "rehabllm/parser.hpp"
#include "rehabllm/prompt.hpp"
#include "rehabllm/runner.hpp"
#include "rehabllm/synthetic.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace rehab;

namespace {

using Point = std::array<double, 3>;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vec3 vec(const Point& p) { return {p[0], p[1], p[2]}; }

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  auto r = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) = m(i, j);
  return a;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ConfigError("frames must be a 2-D array");
  Matrix m(a.shape(0), a.shape(1));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = r(i, j);
  return m;
}

py::dict outcome_dict(const AssessmentOutcome& o) {
  py::dict d;
  d["label"] = o.predicted_label ? py::object(py::str(std::string(to_string(*o.predicted_label)))) : py::none();
  d["probability_correct"] = o.probability_correct;
  d["certainty"] = o.certainty;
  d["reasoning"] = o.reasoning_text;
  d["status"] = std::string(to_string(o.parse_status));
  d["raw_text"] = o.raw_text;
  return d;
}

std::vector<ScoredSample> scored(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ConfigError("scores and labels differ in length");
  std::vector<ScoredSample> s(scores.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = {scores[i], positive[i]};
  return s;
}

FeatureCatalog catalog_at(const std::optional<fs::path>& dir) {
  return FeatureCatalog::load(dir ? *dir : parse_experiment_config(nlohmann::json::object()).configs_dir);
}

ExperimentConfig build_config(const py::object& config, std::optional<bool> mock, std::optional<fs::path> out,
                              std::optional<fs::path> cache_dir, std::optional<std::uint64_t> seed,
                              std::optional<fs::path> configs_dir, std::optional<fs::path> templates_dir) {
  ExperimentConfig c = py::isinstance<py::dict>(config) ? parse_experiment_config(from_python(config))
                                                         : load_experiment_config(config.cast<fs::path>());
  if (mock) c.mock = *mock;
  if (out) c.output_dir = *out;
  if (cache_dir) c.cache_dir = *cache_dir;
  if (seed) c.seed = *seed;
  if (configs_dir) c.configs_dir = *configs_dir;
  if (templates_dir) c.templates_dir = *templates_dir;
  return c;
}

py::list cell_list(const std::vector<CellResult>& cells) {
  py::list out;
  for (const auto& c : cells) {
    nlohmann::json j = to_json(c.report);
    j["cell"] = c.key.name();
    j["exercise_id"] = c.key.exercise_id;
    j["technique"] = to_string(c.key.technique);
    j["k"] = c.key.k;
    j["backend_calls"] = c.backend_calls;
    j["cache_hits"] = c.cache_hits;
    out.append(to_python(j));
  }
  return out;
}

py::dict run_command(const std::string& command, const ExperimentConfig& config) {
  ExperimentRunner runner(config, make_run_context(config));
  py::dict d;
  if (command == "sweep") {
    auto r = runner.run_shot_sweep();
    d["table"] = r.table_text;
    d["plot_csv"] = r.plot_csv;
    d["cells"] = cell_list(r.cells);
    d["skipped"] = r.skipped;
  } else if (command == "compare") {
    auto r = runner.run_reasoning_comparison();
    d["table"] = r.table_text;
    d["cells"] = cell_list(r.cells);
    d["test_sets_identical"] = r.test_sets_identical;
    d["skipped"] = r.skipped;
  } else if (command == "per-exercise") {
    auto r = runner.run_per_exercise();
    d["table"] = r.table_text;
    d["cells"] = cell_list(r.cells);
    d["skipped"] = r.skipped;
  } else if (command == "feedback") {
    auto r = runner.run_feedback();
    d["table"] = r.transcript_text;
    d["feature_mention_rate"] = r.feature_mention_rate;
    py::list entries;
    for (const auto& e : r.entries) {
      py::dict x;
      x["exercise_id"] = e.exercise_id;
      x["test_id"] = e.test_id;
      x["verdict"] = std::string(to_string(e.verdict));
      x["feedback"] = e.feedback_text;
      x["mentions_feature"] = e.mentions_feature;
      entries.append(x);
    }
    d["entries"] = entries;
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  d["backend_calls"] = runner.backend_calls();
  d["cache_hits"] = runner.cache_hits();
  return d;
}

}  // namespace

PYBIND11_MODULE(_rehabllm, m) {
  m.doc() = "Skeleton features, prompt rendering, response parsing and metrics";

  auto base = py::register_exception<Error>(m, "RehabError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<SchemaError>(m, "SchemaError", base);
  py::register_exception<NotFound>(m, "NotFound", base);
  py::register_exception<TransportError>(m, "TransportError", base);
  py::register_exception<EndpointError>(m, "EndpointError", base);
  py::register_exception<OracleError>(m, "OracleError", base);
  py::register_exception<UndefinedMetric>(m, "UndefinedMetric", base);
  py::register_exception<EmptyInput>(m, "EmptyInput", base);
  py::register_exception<DegenerateGeometry>(m, "DegenerateGeometry", base);

  m.def("joint_angle", [](Point a, Point b, Point c) { return joint_angle(vec(a), vec(b), vec(c)); },
        py::arg("a"), py::arg("b"), py::arg("c"));
  m.def("segment_vertical_angle",
        [](Point base, Point tip, Point up) { return segment_vertical_angle(vec(base), vec(tip), vec(up)); },
        py::arg("base"), py::arg("tip"), py::arg("up"));
  m.def("pelvic_tilt", [](Point l, Point r, Point up) { return pelvic_tilt(vec(l), vec(r), vec(up)); },
        py::arg("left_hip"), py::arg("right_hip"), py::arg("up"));

  m.def("exercise_ids", [](std::optional<fs::path> dir) { return catalog_at(dir).exercise_ids(); },
        py::arg("configs_dir") = py::none());
  m.def("feature_names",
        [](const std::string& ex, std::optional<fs::path> dir) { return catalog_at(dir).at(ex).feature_names(); },
        py::arg("exercise_id"), py::arg("configs_dir") = py::none());
  m.def(
      "extract_features",
      [](const std::string& ex, const Array& frames, std::optional<std::string> side, std::optional<fs::path> dir) {
        const FeatureCatalog catalog = catalog_at(dir);
        const FeatureSpec& spec = catalog.at(ex);
        const SkeletonSpec skeleton = SkeletonSpec::builtin(spec.dataset_id);
        RepetitionSample s;
        s.exercise_id = ex;
        s.subject_id = "py";
        s.frames = to_matrix(frames);
        if (side) s.dominant_side = side_from_string(*side);
        const FeatureSequence seq = extract_features(s, skeleton, spec);
        return py::make_tuple(seq.feature_names, to_array(seq.values));
      },
      py::arg("exercise_id"), py::arg("frames"), py::arg("side") = py::none(), py::arg("configs_dir") = py::none(),
      "Per-frame features for one repetition; frames is (n_frames, 3 * n_joints).");

  m.def(
      "synthesize",
      [](const std::string& ex, std::size_t repetitions, std::uint64_t seed) {
        const GenericDataset ds = synthesize_exercise(ex, repetitions, seed);
        py::list out;
        for (const auto& s : ds.samples) {
          py::dict d;
          d["id"] = s.identity();
          d["subject_id"] = s.subject_id;
          d["label"] = std::string(to_string(s.label));
          d["frames"] = to_array(s.frames);
          out.append(d);
        }
        return out;
      },
      py::arg("exercise_id"), py::arg("repetitions") = 40, py::arg("seed") = 42);

  m.def(
      "parse_response",
      [](const std::string& text, const std::string& technique, double threshold) {
        return outcome_dict(parse(text, expected_format(technique_from_string(technique)), threshold));
      },
      py::arg("text"), py::arg("technique") = "Classification", py::arg("threshold") = kDefaultDecisionThreshold);

  m.def("prompt_hash", &prompt_hash, py::arg("text"), py::arg("model_name"), py::arg("temperature") = 0.0);

  m.def("auc_roc", [](const std::vector<double>& s, const std::vector<bool>& p) { return auc_roc(scored(s, p)); },
        py::arg("scores"), py::arg("positive"));
  m.def("auc_pr", [](const std::vector<double>& s, const std::vector<bool>& p) { return auc_pr(scored(s, p)); },
        py::arg("scores"), py::arg("positive"));
  m.def(
      "basic_metrics",
      [](std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
        const BasicMetrics b = basic_metrics({tp, fp, tn, fn});
        py::dict d;
        d["accuracy"] = b.accuracy;
        d["precision"] = b.precision;
        d["recall"] = b.recall;
        d["f1"] = b.f1;
        return d;
      },
      py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

  m.def(
      "run",
      [](const std::string& command, const py::object& config, std::optional<bool> mock, std::optional<fs::path> out,
         std::optional<fs::path> cache_dir, std::optional<std::uint64_t> seed, std::optional<fs::path> configs_dir,
         std::optional<fs::path> templates_dir) {
        return run_command(command, build_config(config, mock, out, cache_dir, seed, configs_dir, templates_dir));
      },
      py::arg("command"), py::arg("config"), py::arg("mock") = py::none(), py::arg("out") = py::none(),
      py::arg("cache_dir") = py::none(), py::arg("seed") = py::none(), py::arg("configs_dir") = py::none(),
      py::arg("templates_dir") = py::none(),
      "command is one of sweep, compare, per-exercise, feedback; config is a dict or a JSON file path.");

  m.def("summarize_results", &summarize_results, py::arg("output_dir"));
}
