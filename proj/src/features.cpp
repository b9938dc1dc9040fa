#include "rehabllm/features.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"
#include "rehabllm/geometry.hpp"

namespace rehab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct PrimitiveInfo {
  Primitive primitive;
  std::string_view name;
  std::size_t arity;
  FeatureUnits units;
};

constexpr PrimitiveInfo kPrimitives[] = {
    {Primitive::JointAngle, "JointAngle", 3, FeatureUnits::Degrees},
    {Primitive::SegmentVerticalAngle, "SegmentVerticalAngle", 2, FeatureUnits::Degrees},
    {Primitive::PlaneDeviation, "PlaneDeviation", 4, FeatureUnits::Length},
    {Primitive::PairSymmetry, "PairSymmetry", 2, FeatureUnits::Length},
    {Primitive::PelvicTilt, "PelvicTilt", 2, FeatureUnits::Degrees},
    {Primitive::HorizontalDistance, "HorizontalDistance", 2, FeatureUnits::Length},
    {Primitive::VerticalDisplacement, "VerticalDisplacement", 1, FeatureUnits::Length},
    {Primitive::StabilityRange, "StabilityRange", 0, FeatureUnits::Degrees},
};

const PrimitiveInfo& info(Primitive p) {
  for (const auto& i : kPrimitives) {
    if (i.primitive == p) return i;
  }
  throw ConfigError("unknown primitive");
}

// "LeftKnee" -> ("Left", "Knee"); placeholders are kept as the side part.
std::pair<std::string, std::string> split_side(std::string_view ref) {
  for (std::string_view side : {kActiveToken, kPassiveToken, std::string_view("Left"), std::string_view("Right")}) {
    if (ref.substr(0, side.size()) == side) return {std::string(side), std::string(ref.substr(side.size()))};
  }
  return {"", std::string(ref)};
}

FeatureUnits units_from_string(std::string_view s, const std::string& origin) {
  if (s == "deg" || s == "degrees") return FeatureUnits::Degrees;
  if (s == "length" || s == "m" || s == "mm" || s == "units") return FeatureUnits::Length;
  throw ConfigError(origin + ": unknown feature units '" + std::string(s) + "'");
}

FeatureDef parse_def(const json& j, const std::string& origin) {
  FeatureDef d;
  d.name = j.value("name", std::string{});
  d.primitive = primitive_from_string(j.at("primitive").get<std::string>());
  if (j.contains("joint_refs")) d.joint_refs = j.at("joint_refs").get<std::vector<std::string>>();
  if (j.contains("deviation_from")) d.deviation_from = j.at("deviation_from").get<double>();
  if (j.contains("projection_refs")) d.projection_refs = j.at("projection_refs").get<std::vector<std::string>>();
  if (j.contains("inner")) d.inner.push_back(parse_def(j.at("inner"), origin));

  const auto& pi = info(d.primitive);
  const std::string where = origin + ": feature '" + d.name + "'";
  if (d.primitive == Primitive::StabilityRange) {
    if (d.inner.size() != 1 || !d.joint_refs.empty()) {
      throw ConfigError(where + ": StabilityRange wraps exactly one inner feature and has no joint_refs");
    }
    d.units = d.inner.front().units;
  } else {
    if (d.joint_refs.size() != pi.arity) {
      throw ConfigError(where + ": " + std::string(pi.name) + " takes " + std::to_string(pi.arity) +
                        " joint refs, got " + std::to_string(d.joint_refs.size()));
    }
    if (!d.inner.empty()) throw ConfigError(where + ": only StabilityRange may wrap a feature");
    d.units = pi.units;
  }
  if (!d.projection_refs.empty() && (d.primitive != Primitive::JointAngle || d.projection_refs.size() != 2)) {
    throw ConfigError(where + ": projection_refs needs two joints and a JointAngle primitive");
  }
  if (d.deviation_from && pi.units != FeatureUnits::Degrees) {
    throw ConfigError(where + ": deviation_from applies to angle primitives only");
  }
  if (d.primitive == Primitive::PairSymmetry) {
    const auto [s0, j0] = split_side(d.joint_refs[0]);
    const auto [s1, j1] = split_side(d.joint_refs[1]);
    const bool mirrored = j0 == j1 && !s0.empty() && !s1.empty() && s0 != s1;
    if (!mirrored) throw ConfigError(where + ": PairSymmetry needs a mirrored joint pair");
  }
  if (j.contains("units")) {
    const auto declared = units_from_string(j.at("units").get<std::string>(), where);
    if (declared != d.units) throw ConfigError(where + ": declared units do not match the primitive");
  }
  return d;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void collect_refs(const FeatureDef& d, std::vector<std::string>& out) {
  out.insert(out.end(), d.joint_refs.begin(), d.joint_refs.end());
  out.insert(out.end(), d.projection_refs.begin(), d.projection_refs.end());
  for (const auto& i : d.inner) collect_refs(i, out);
}

class FrameAccess {
 public:
  FrameAccess(const RepetitionSample& sample, const SkeletonSpec& spec, Side active)
      : sample_(sample), spec_(spec), active_(active) {}

  std::size_t index(std::string_view ref) const {
    const auto name = resolve_joint_ref(ref, active_);
    const auto idx = spec_.index_of(name);
    if (!idx) throw ConfigError("joint '" + name + "' is not part of the " +
                                std::string(to_string(spec_.dataset_id())) + " skeleton");
    return *idx;
  }

  Vec3 at(std::size_t frame, std::size_t joint) const { return sample_.joint(frame, joint); }
  std::size_t frames() const { return sample_.num_frames(); }
  Vec3 up() const { return spec_.up_axis(); }

 private:
  const RepetitionSample& sample_;
  const SkeletonSpec& spec_;
  Side active_;
};

double frontal_joint_angle(Vec3 a, Vec3 b, Vec3 c, Vec3 left, Vec3 right, Vec3 up) {
  Vec3 n = cross(left - right, up);
  const double len = norm(n);
  if (len <= kDegeneracyEpsilon) throw DegenerateGeometry("frontal plane: projection line parallel to up");
  n = (1.0 / len) * n;
  const Vec3 ba = project_onto_plane(a - b, n);
  const Vec3 bc = project_onto_plane(c - b, n);
  if (norm(ba) <= kDegeneracyEpsilon || norm(bc) <= kDegeneracyEpsilon) {
    throw DegenerateGeometry("joint_angle: projected segment shorter than epsilon");
  }
  return angle_between(ba, bc);
}

std::vector<double> compute_series(const FeatureDef& d, const FrameAccess& fa) {
  const std::size_t n = fa.frames();
  std::vector<double> out(n);
  std::vector<std::size_t> j;
  for (const auto& r : d.joint_refs) j.push_back(fa.index(r));
  const Vec3 up = fa.up();

  auto per_frame = [&](auto&& fn) {
    for (std::size_t f = 0; f < n; ++f) {
      try {
        out[f] = fn(f);
      } catch (const DegenerateGeometry& e) {
        throw DegenerateGeometry(d.name + ": " + e.what(), static_cast<long>(f));
      }
    }
  };

  switch (d.primitive) {
    case Primitive::JointAngle:
      if (d.projection_refs.empty()) {
        per_frame([&](std::size_t f) { return joint_angle(fa.at(f, j[0]), fa.at(f, j[1]), fa.at(f, j[2])); });
      } else {
        const auto p = fa.index(d.projection_refs[0]);
        const auto q = fa.index(d.projection_refs[1]);
        per_frame([&](std::size_t f) {
          return frontal_joint_angle(fa.at(f, j[0]), fa.at(f, j[1]), fa.at(f, j[2]), fa.at(f, p), fa.at(f, q), up);
        });
      }
      break;
    case Primitive::SegmentVerticalAngle:
      per_frame([&](std::size_t f) { return segment_vertical_angle(fa.at(f, j[0]), fa.at(f, j[1]), up); });
      break;
    case Primitive::PelvicTilt:
      per_frame([&](std::size_t f) { return pelvic_tilt(fa.at(f, j[0]), fa.at(f, j[1]), up); });
      break;
    case Primitive::HorizontalDistance:
      per_frame([&](std::size_t f) { return horizontal_distance(fa.at(f, j[0]), fa.at(f, j[1]), up); });
      break;
    case Primitive::VerticalDisplacement: {
      const Vec3 origin = fa.at(0, j[0]);
      per_frame([&](std::size_t f) { return dot(fa.at(f, j[0]) - origin, up); });
      break;
    }
    case Primitive::PairSymmetry: {
      double worst = 0.0;
      for (std::size_t f = 0; f < n; ++f) worst = std::max(worst, std::abs(dot(fa.at(f, j[0]) - fa.at(f, j[1]), up)));
      std::fill(out.begin(), out.end(), worst);
      break;
    }
    case Primitive::PlaneDeviation: {
      std::vector<Vec3> track(n);
      for (std::size_t f = 0; f < n; ++f) track[f] = fa.at(f, j[0]);
      try {
        plane_deviation(track, fa.at(0, j[1]), fa.at(0, j[2]), fa.at(0, j[3]), out);
      } catch (const DegenerateGeometry& e) {
        throw DegenerateGeometry(d.name + ": " + e.what(), 0);
      }
      break;
    }
    case Primitive::StabilityRange: {
      const auto inner = compute_series(d.inner.front(), fa);
      std::fill(out.begin(), out.end(), stability_range(inner));
      break;
    }
  }
  if (d.deviation_from) {
    for (auto& v : out) v = std::abs(v - *d.deviation_from);
  }
  return out;
}

}  // namespace

std::string_view to_string(Primitive p) { return info(p).name; }

Primitive primitive_from_string(std::string_view s) {
  for (const auto& i : kPrimitives) {
    if (i.name == s) return i.primitive;
  }
  throw ConfigError("unknown feature primitive '" + std::string(s) + "'");
}

std::string_view to_string(FeatureUnits u) { return u == FeatureUnits::Degrees ? "deg" : "length"; }

bool FeatureDef::vertical_referenced() const {
  switch (primitive) {
    case Primitive::JointAngle: return !projection_refs.empty();
    case Primitive::PlaneDeviation: return false;
    case Primitive::StabilityRange: return inner.front().vertical_referenced();
    default: return true;
  }
}

bool FeatureDef::constant_column() const {
  return primitive == Primitive::StabilityRange || primitive == Primitive::PairSymmetry;
}

std::vector<std::string> FeatureSpec::feature_names() const {
  std::vector<std::string> out;
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

bool FeatureSpec::uses_side_placeholders() const {
  std::vector<std::string> refs;
  for (const auto& f : features) collect_refs(f, refs);
  return std::any_of(refs.begin(), refs.end(), [](const std::string& r) {
    return r.find(kActiveToken) != std::string::npos || r.find(kPassiveToken) != std::string::npos;
  });
}

FeatureSpec parse_feature_spec(const std::string& text, const std::string& origin) {
  try {
    const json j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    FeatureSpec spec;
    spec.exercise_id = j.at("exercise_id").get<std::string>();
    spec.exercise_name = j.value("exercise_name", spec.exercise_id);
    spec.dataset_id = dataset_from_string(j.at("dataset_id").get<std::string>());
    for (const auto& f : j.at("features")) spec.features.push_back(parse_def(f, origin));
    if (spec.num_features() < 3 || spec.num_features() > 5) {
      throw ConfigError(origin + ": exercise " + spec.exercise_id + " must define 3 to 5 features");
    }
    std::set<std::string> names;
    for (const auto& f : spec.features) {
      if (f.name.empty() || !names.insert(f.name).second) {
        throw ConfigError(origin + ": feature names must be non-empty and unique");
      }
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

FeatureSpec load_feature_spec(const fs::path& path) { return parse_feature_spec(read_file(path), path.string()); }

FeatureCatalog FeatureCatalog::load(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError("feature config directory not found: " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  FeatureCatalog cat;
  for (const auto& f : files) {
    auto spec = load_feature_spec(f);
    const std::string id = spec.exercise_id;
    if (!cat.specs_.emplace(id, std::move(spec)).second) {
      throw ConfigError("duplicate feature config for exercise " + id + " (" + f.string() + ")");
    }
  }
  return cat;
}

const FeatureSpec& FeatureCatalog::at(std::string_view exercise_id) const {
  const auto it = specs_.find(exercise_id);
  if (it == specs_.end()) throw ConfigError("no feature config for exercise '" + std::string(exercise_id) + "'");
  return it->second;
}

bool FeatureCatalog::contains(std::string_view exercise_id) const { return specs_.find(exercise_id) != specs_.end(); }

std::vector<std::string> FeatureCatalog::exercise_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : specs_) out.push_back(id);
  return out;
}

std::string resolve_joint_ref(std::string_view ref, Side active) {
  const std::string_view active_name = active == Side::Right ? "Right" : "Left";
  const std::string_view passive_name = active == Side::Right ? "Left" : "Right";
  std::string out(ref);
  for (auto [token, repl] : {std::pair{kActiveToken, active_name}, std::pair{kPassiveToken, passive_name}}) {
    for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token)) {
      out.replace(pos, token.size(), repl);
    }
  }
  return out;
}

Side resolve_active_side(const RepetitionSample& sample, const SkeletonSpec& spec, const FeatureSpec& features) {
  if (sample.dominant_side != Side::Unknown) return sample.dominant_side;
  std::vector<std::string> refs;
  for (const auto& f : features.features) collect_refs(f, refs);
  std::set<std::string> limbs;
  for (const auto& r : refs) {
    const auto [side, joint] = split_side(r);
    if (side == kActiveToken || side == kPassiveToken) limbs.insert(joint);
  }
  auto path_length = [&](std::string_view side) {
    double total = 0.0;
    for (const auto& limb : limbs) {
      const auto idx = spec.index_of(std::string(side) + limb);
      if (!idx) continue;
      for (std::size_t f = 1; f < sample.num_frames(); ++f) {
        total += norm(sample.joint(f, *idx) - sample.joint(f - 1, *idx));
      }
    }
    return total;
  };
  return path_length("Right") > path_length("Left") ? Side::Right : Side::Left;
}

FeatureSequence extract_features(const RepetitionSample& sample, const SkeletonSpec& spec, const FeatureSpec& features) {
  if (sample.frames.cols() != spec.column_count()) {
    throw SchemaError("sample " + sample.identity() + " does not match the skeleton column count");
  }
  const Side active = resolve_active_side(sample, spec, features);
  const FrameAccess fa(sample, spec, active);

  FeatureSequence seq;
  seq.exercise_id = sample.exercise_id;
  seq.subject_id = sample.subject_id;
  seq.repetition_index = sample.repetition_index;
  seq.label = sample.label;
  seq.feature_names = features.feature_names();
  seq.values = Matrix(sample.num_frames(), features.num_features());
  for (std::size_t c = 0; c < features.num_features(); ++c) {
    const auto& def = features.features[c];
    seq.units.push_back(def.units);
    const auto series = compute_series(def, fa);
    for (std::size_t f = 0; f < series.size(); ++f) seq.values(f, c) = series[f];
  }
  return seq;
}

FeatureSequence joints_as_sequence(const RepetitionSample& sample, const SkeletonSpec& spec) {
  FeatureSequence seq;
  seq.exercise_id = sample.exercise_id;
  seq.subject_id = sample.subject_id;
  seq.repetition_index = sample.repetition_index;
  seq.label = sample.label;
  for (const auto& j : spec.joint_names()) {
    for (const char* axis : {".x", ".y", ".z"}) {
      seq.feature_names.push_back(j + axis);
      seq.units.push_back(FeatureUnits::Length);
    }
  }
  seq.values = sample.frames;
  return seq;
}

}  // namespace rehab
