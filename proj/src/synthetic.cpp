#include "rehabllm/synthetic.hpp"

#include <cmath>
#include <map>

#include "rehabllm/errors.hpp"

namespace rehab {

namespace {

const std::map<std::string, Vec3, std::less<>>& body_pose() {
  static const std::map<std::string, Vec3, std::less<>> pose = [] {
    std::map<std::string, Vec3, std::less<>> m = {
        {"Waist", {0.0, 1.00, 0.0}},    {"Pelvis", {0.0, 1.00, 0.0}},   {"Spine", {0.0, 1.12, 0.0}},
        {"SpineLow", {0.0, 1.12, 0.0}}, {"SpineMid", {0.0, 1.25, 0.0}}, {"Chest", {0.0, 1.38, 0.0}},
        {"Neck", {0.0, 1.52, 0.0}},     {"Head", {0.0, 1.62, 0.01}},    {"HeadTip", {0.0, 1.76, 0.0}},
    };
    const std::map<std::string, Vec3> side = {
        {"Collar", {0.07, 1.47, 0.0}},    {"Shoulder", {0.19, 1.45, 0.0}}, {"Elbow", {0.22, 1.17, -0.01}},
        {"Wrist", {0.23, 0.92, 0.02}},    {"HandEnd", {0.235, 0.84, 0.03}}, {"Hip", {0.10, 0.97, 0.0}},
        {"Knee", {0.11, 0.53, 0.02}},     {"Ankle", {0.11, 0.09, -0.01}},  {"Toe", {0.12, 0.02, 0.12}},
        {"ToeEnd", {0.12, 0.01, 0.18}},
    };
    for (const auto& [name, p] : side) {
      m["Left" + name] = p;
      m["Right" + name] = {-p.x, p.y, p.z};
    }
    return m;
  }();
  return pose;
}

// Rotation taking +y onto `up` (Rodrigues).
Vec3 to_world(Vec3 p, Vec3 up) {
  const Vec3 y{0.0, 1.0, 0.0};
  const Vec3 axis = cross(y, up);
  const double s = norm(axis);
  const double c = dot(y, up);
  if (s < 1e-12) return c > 0 ? p : Vec3{p.x, -p.y, -p.z};
  const Vec3 k = axis * (1.0 / s);
  return p * c + cross(k, p) * s + k * (dot(k, p) * (1.0 - c));
}

// Forward lean about the lateral axis through `pivot`.
Vec3 lean(Vec3 p, Vec3 pivot, double angle_rad) {
  const Vec3 d = p - pivot;
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  return pivot + Vec3{d.x, d.y * c - d.z * s, d.y * s + d.z * c};
}

double deg(double d) { return d * kPi / 180.0; }

// Bell-shaped activation over a repetition, 0 at both ends and 1 midway.
double activation(std::size_t t, std::size_t frames) {
  const double s = std::sin(kPi * static_cast<double>(t) / static_cast<double>(frames - 1));
  return s * s;
}

using Pose = std::map<std::string, Vec3, std::less<>>;

Pose squat_pose(double knee_dev_deg, double trunk_lean_deg) {
  Pose p = body_pose();
  const Vec3 pelvis0 = p["Waist"];
  const double phi = deg(knee_dev_deg) / 2.0;
  constexpr double kShank = 0.44, kThigh = 0.44;
  double hip_y = 0.0, hip_z = 0.0;
  for (const std::string side : {"Left", "Right"}) {
    const Vec3 ankle = p[side + "Ankle"];
    const Vec3 knee = ankle + Vec3{0.0, kShank * std::cos(phi), kShank * std::sin(phi)};
    const Vec3 hip{p[side + "Hip"].x, knee.y + kThigh * std::cos(phi), knee.z - kThigh * std::sin(phi)};
    p[side + "Knee"] = knee;
    hip_y = hip.y;
    hip_z = hip.z;
    p[side + "Hip"] = hip;
  }
  const Vec3 shift{0.0, hip_y - 0.97, hip_z};
  const Vec3 pelvis = pelvis0 + shift;
  for (auto& [name, pos] : p) {
    const bool lower = name.find("Hip") != std::string::npos || name.find("Knee") != std::string::npos ||
                       name.find("Ankle") != std::string::npos || name.find("Toe") != std::string::npos;
    if (lower) continue;
    pos = lean(pos + shift, pelvis, deg(trunk_lean_deg));
  }
  return p;
}

Pose abduction_pose(double raise_deg) {
  Pose p = body_pose();
  const Vec3 shoulder = p["LeftShoulder"];
  const double g = deg(6.0 + raise_deg);
  const Vec3 dir{std::sin(g), -std::cos(g), 0.0};
  p["LeftElbow"] = shoulder + dir * 0.28;
  p["LeftWrist"] = shoulder + dir * 0.53;
  p["LeftHandEnd"] = shoulder + dir * 0.61;
  return p;
}

RepetitionSample sample_from_poses(const SkeletonSpec& spec, const std::vector<Pose>& poses, Rng& rng,
                                   double noise) {
  RepetitionSample s;
  s.frames = Matrix(poses.size(), spec.column_count());
  for (std::size_t t = 0; t < poses.size(); ++t) {
    for (std::size_t j = 0; j < spec.joint_count(); ++j) {
      const auto it = poses[t].find(spec.joint_names()[j]);
      if (it == poses[t].end()) throw ConfigError("no synthetic position for joint " + spec.joint_names()[j]);
      const Vec3 w = to_world(it->second, spec.up_axis()) +
                     Vec3{rng.normal() * noise, rng.normal() * noise, rng.normal() * noise};
      s.frames(t, 3 * j) = w.x;
      s.frames(t, 3 * j + 1) = w.y;
      s.frames(t, 3 * j + 2) = w.z;
    }
  }
  return s;
}

struct Generator {
  double threshold;        // on the mean of the first feature
  std::string feature;     // first feature of the shipped config
  double correct_lo, correct_hi, incorrect_lo, incorrect_hi;  // peak amplitude, degrees
};

const Generator& generator(std::string_view exercise_id) {
  static const Generator squat{38.0, "Knee Flexion A.", 100.0, 125.0, 35.0, 60.0};
  static const Generator abduction{70.0, "Arm Elevation A.", 140.0, 160.0, 50.0, 80.0};
  if (exercise_id == "m01") return squat;
  if (exercise_id == "m07") return abduction;
  throw ConfigError("no synthetic generator for exercise '" + std::string(exercise_id) + "'");
}

}  // namespace

std::vector<Vec3> standing_pose(const SkeletonSpec& spec) {
  std::vector<Vec3> out;
  for (const auto& name : spec.joint_names()) {
    const auto it = body_pose().find(name);
    if (it == body_pose().end()) throw ConfigError("no synthetic position for joint " + name);
    out.push_back(to_world(it->second, spec.up_axis()));
  }
  return out;
}

RepetitionSample random_motion_sample(const SkeletonSpec& spec, Rng& rng, std::size_t frames) {
  if (frames < 2) throw RangeError("a synthetic sequence needs at least 2 frames");
  const auto pose = standing_pose(spec);
  RepetitionSample s;
  s.exercise_id = "random";
  s.subject_id = "synthetic";
  s.frames = Matrix(frames, spec.column_count());
  for (std::size_t j = 0; j < pose.size(); ++j) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double amp = rng.uniform(0.0, 0.04);
      const double freq = 1.0 + static_cast<double>(rng.index(2));
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      const double base = a == 0 ? pose[j].x : a == 1 ? pose[j].y : pose[j].z;
      for (std::size_t t = 0; t < frames; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(frames - 1);
        s.frames(t, 3 * j + a) = base + amp * std::sin(2.0 * kPi * freq * u + phase) + rng.normal() * 0.001;
      }
    }
  }
  return s;
}

std::vector<std::string> synthetic_exercise_ids() { return {"m01", "m07"}; }

GenericDataset synthesize_exercise(std::string_view exercise_id, std::size_t repetitions, std::uint64_t seed,
                                   std::size_t subjects) {
  const Generator& gen = generator(exercise_id);
  if (subjects == 0) throw ConfigError("need at least one subject");
  const SkeletonSpec spec = SkeletonSpec::uiprmd();
  Rng rng(fnv1a64(exercise_id, seed));

  std::vector<Label> labels;
  for (std::size_t i = 0; i < repetitions; ++i) labels.push_back(i % 2 == 0 ? Label::Correct : Label::Incorrect);
  rng.shuffle(labels);

  GenericDataset ds{spec, std::string(exercise_id), 30.0, {}};
  std::map<std::size_t, std::size_t> reps_per_subject;
  for (std::size_t i = 0; i < repetitions; ++i) {
    const Label label = labels[i];
    const double amp = label == Label::Correct ? rng.uniform(gen.correct_lo, gen.correct_hi)
                                               : rng.uniform(gen.incorrect_lo, gen.incorrect_hi);
    const std::size_t frames = 50 + rng.index(41);
    std::vector<Pose> poses;
    for (std::size_t t = 0; t < frames; ++t) {
      const double a = activation(t, frames) * amp;
      poses.push_back(exercise_id == "m01" ? squat_pose(a, 0.35 * a) : abduction_pose(a));
    }
    RepetitionSample s = sample_from_poses(spec, poses, rng, 0.002);
    const std::size_t subject = i % subjects;
    char sid[32];
    std::snprintf(sid, sizeof sid, "s%02zu", subject + 1);
    s.exercise_id = std::string(exercise_id);
    s.subject_id = sid;
    s.repetition_index = reps_per_subject[subject]++;
    s.label = label;
    s.frame_rate_hz = 30.0;
    s.dominant_side = Side::Left;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

OracleConfig synthetic_oracle(std::string_view exercise_id) {
  const Generator& gen = generator(exercise_id);
  OracleConfig c;
  c.rules.push_back({gen.feature, 0, gen.threshold, true});
  return c;
}

}  // namespace rehab
