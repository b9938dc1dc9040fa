#include "rehabllm/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"
#include "rehabllm/random.hpp"

namespace rehab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses "s01" / "e03" style tokens out of a UI-PRMD file stem.
std::optional<std::size_t> tagged_number(const std::vector<std::string>& parts, char tag) {
  for (const auto& p : parts) {
    if (p.size() >= 2 && std::tolower(static_cast<unsigned char>(p[0])) == tag &&
        std::all_of(p.begin() + 1, p.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return static_cast<std::size_t>(std::stoul(p.substr(1)));
    }
  }
  return std::nullopt;
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

const std::vector<std::string>& uiprmd_joint_names() {
  // Kinect joint order of the UI-PRMD release. The dataset names segments;
  // each position is the proximal joint of that segment (e.g. "Left forearm"
  // is the left elbow).
  static const std::vector<std::string> names = {
      "Waist",        "Spine",         "Chest",         "Neck",      "Head",      "HeadTip",
      "LeftCollar",   "LeftShoulder",  "LeftElbow",     "LeftWrist", "RightCollar",
      "RightShoulder", "RightElbow",   "RightWrist",    "LeftHip",   "LeftKnee",
      "LeftAnkle",    "LeftToe",       "RightHip",      "RightKnee", "RightAnkle",
      "RightToe"};
  return names;
}

const std::vector<std::string>& rehab24_joint_names() {
  static const std::vector<std::string> names = {
      "Pelvis",        "SpineLow",      "SpineMid",      "Chest",         "Neck",
      "Head",          "LeftCollar",    "LeftShoulder",  "LeftElbow",     "LeftWrist",
      "LeftHandEnd",   "RightCollar",   "RightShoulder", "RightElbow",    "RightWrist",
      "RightHandEnd",  "LeftHip",       "LeftKnee",      "LeftAnkle",     "LeftToe",
      "LeftToeEnd",    "RightHip",      "RightKnee",     "RightAnkle",    "RightToe",
      "RightToeEnd"};
  return names;
}

void check_finite(const RepetitionSample& s, const std::string& where) {
  for (double v : s.frames.data()) {
    if (!std::isfinite(v)) throw SchemaError(where + ": non-finite coordinate");
  }
}

}  // namespace

std::string_view to_string(DatasetId id) {
  switch (id) {
    case DatasetId::UIPRMD: return "UIPRMD";
    case DatasetId::REHAB24_6: return "REHAB24_6";
    case DatasetId::GENERIC: return "GENERIC";
  }
  return "GENERIC";
}

std::string_view to_string(Units u) {
  switch (u) {
    case Units::Meters: return "meters";
    case Units::Millimeters: return "millimeters";
    case Units::Normalized: return "normalized";
  }
  return "meters";
}

std::string_view to_string(Label l) { return l == Label::Correct ? "correct" : "incorrect"; }

std::string_view to_string(Side s) {
  switch (s) {
    case Side::Left: return "left";
    case Side::Right: return "right";
    case Side::Unknown: return "unknown";
  }
  return "unknown";
}

DatasetId dataset_from_string(std::string_view s) {
  const auto l = lower(s);
  if (l == "uiprmd" || l == "ui-prmd") return DatasetId::UIPRMD;
  if (l == "rehab24_6" || l == "rehab24-6") return DatasetId::REHAB24_6;
  if (l == "generic") return DatasetId::GENERIC;
  throw SchemaError("unknown dataset_id '" + std::string(s) + "'");
}

Units units_from_string(std::string_view s) {
  const auto l = lower(s);
  if (l == "meters") return Units::Meters;
  if (l == "millimeters") return Units::Millimeters;
  if (l == "normalized") return Units::Normalized;
  throw SchemaError("unknown units '" + std::string(s) + "'");
}

Label label_from_string(std::string_view s) {
  const auto l = lower(s);
  if (l == "correct") return Label::Correct;
  if (l == "incorrect") return Label::Incorrect;
  throw SchemaError("unknown label '" + std::string(s) + "'");
}

Side side_from_string(std::string_view s) {
  const auto l = lower(s);
  if (l == "left") return Side::Left;
  if (l == "right") return Side::Right;
  if (l == "unknown" || l.empty()) return Side::Unknown;
  throw SchemaError("unknown side '" + std::string(s) + "'");
}

SkeletonSpec SkeletonSpec::make(DatasetId dataset, std::vector<std::string> joint_names, Vec3 up_axis,
                                Units units) {
  if (joint_names.empty()) throw SchemaError("skeleton has no joints");
  if (std::abs(norm(up_axis) - 1.0) > 1e-9) throw SchemaError("up_axis must be a unit vector");
  if (dataset == DatasetId::UIPRMD && joint_names.size() != 22) {
    throw SchemaError("UIPRMD skeleton must have 22 joints");
  }
  if (dataset == DatasetId::REHAB24_6 && joint_names.size() != 26) {
    throw SchemaError("REHAB24_6 skeleton must have 26 joints");
  }
  SkeletonSpec spec;
  spec.dataset_ = dataset;
  spec.up_ = up_axis;
  spec.units_ = units;
  for (std::size_t i = 0; i < joint_names.size(); ++i) {
    if (!spec.name_to_index_.emplace(joint_names[i], i).second) {
      throw SchemaError("duplicate joint name '" + joint_names[i] + "'");
    }
  }
  spec.joint_names_ = std::move(joint_names);
  return spec;
}

SkeletonSpec SkeletonSpec::uiprmd() {
  return make(DatasetId::UIPRMD, uiprmd_joint_names(), {0.0, 1.0, 0.0}, Units::Meters);
}

SkeletonSpec SkeletonSpec::rehab24_6() {
  return make(DatasetId::REHAB24_6, rehab24_joint_names(), {0.0, 0.0, 1.0}, Units::Meters);
}

SkeletonSpec SkeletonSpec::builtin(DatasetId dataset) {
  switch (dataset) {
    case DatasetId::UIPRMD: return uiprmd();
    case DatasetId::REHAB24_6: return rehab24_6();
    case DatasetId::GENERIC: break;
  }
  throw ConfigError("no builtin skeleton for GENERIC datasets");
}

SkeletonSpec SkeletonSpec::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path), nullptr, true, /*ignore_comments=*/true);
    const auto& up = j.at("up_axis");
    return make(dataset_from_string(j.at("dataset_id").get<std::string>()),
                j.at("joint_names").get<std::vector<std::string>>(),
                {up.at(0).get<double>(), up.at(1).get<double>(), up.at(2).get<double>()},
                units_from_string(j.at("units").get<std::string>()));
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::optional<std::size_t> SkeletonSpec::index_of(std::string_view name) const {
  const auto it = name_to_index_.find(name);
  if (it == name_to_index_.end()) return std::nullopt;
  return it->second;
}

std::string RepetitionSample::identity() const {
  return exercise_id + "/" + subject_id + "/" + std::to_string(repetition_index);
}

Matrix read_numeric_table(const fs::path& path, std::size_t expected_columns) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != expected_columns) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(expected_columns) + " values, found " +
                        std::to_string(fields.size()));
    }
    for (const auto& f : fields) {
      double v;
      if (!parse_double(f, v)) throw ParseError(path.string(), line_no, "malformed number '" + f + "'");
      data.push_back(v);
    }
    ++rows;
  }
  return Matrix(rows, expected_columns, std::move(data));
}

std::size_t repair_gaps(Matrix& frames, std::size_t max_gap) {
  std::size_t repaired = 0;
  const std::size_t n = frames.rows();
  for (std::size_t c = 0; c < frames.cols(); ++c) {
    std::size_t r = 0;
    while (r < n) {
      if (std::isfinite(frames(r, c))) {
        ++r;
        continue;
      }
      std::size_t end = r;
      while (end < n && !std::isfinite(frames(end, c))) ++end;
      const std::size_t gap = end - r;
      if (gap > max_gap || gap == n) {
        throw RangeError("gap of " + std::to_string(gap) + " non-finite frames in column " +
                         std::to_string(c) + " starting at frame " + std::to_string(r));
      }
      const bool has_before = r > 0;
      const bool has_after = end < n;
      for (std::size_t i = r; i < end; ++i) {
        if (has_before && has_after) {
          const double a = frames(r - 1, c);
          const double b = frames(end, c);
          const double t = static_cast<double>(i - r + 1) / static_cast<double>(gap + 1);
          frames(i, c) = a + (b - a) * t;
        } else {
          frames(i, c) = has_before ? frames(r - 1, c) : frames(end, c);
        }
      }
      repaired += gap;
      r = end;
    }
  }
  return repaired;
}

namespace {

// Repairs gaps in place; returns false (with a warning) when the sample has
// to be rejected.
bool finalize_sample(RepetitionSample& s, const std::string& origin, std::vector<std::string>& warnings) {
  if (s.frames.rows() < 2) {
    warnings.push_back(origin + ": fewer than two frames, sample rejected");
    return false;
  }
  try {
    const auto repaired = repair_gaps(s.frames);
    if (repaired > 0) {
      warnings.push_back(origin + ": interpolated " + std::to_string(repaired) + " non-finite values");
    }
  } catch (const RangeError& e) {
    warnings.push_back(origin + ": " + e.what() + ", sample rejected");
    return false;
  }
  return true;
}

std::optional<fs::path> first_existing(const fs::path& root, std::initializer_list<const char*> candidates) {
  for (const char* c : candidates) {
    const fs::path p = root / c;
    if (fs::is_directory(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

LoadResult load_uiprmd(const fs::path& root, std::string_view exercise_id, const SkeletonSpec& spec) {
  if (!fs::is_directory(root)) throw NotFound("UI-PRMD root not found: " + root.string());
  const auto correct_dir =
      first_existing(root, {"Segmented Movements/Kinect/Positions", "Kinect/Positions", "correct"});
  const auto incorrect_dir = first_existing(
      root, {"Incorrect Segmented Movements/Kinect/Positions", "Kinect/Incorrect Positions", "incorrect"});
  if (!correct_dir && !incorrect_dir) {
    throw NotFound("no correct or incorrect movement folders under " + root.string());
  }

  LoadResult result;
  const std::string prefix = lower(exercise_id) + "_";
  auto scan = [&](const fs::path& dir, Label label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const auto name = lower(entry.path().filename().string());
      if (name.rfind(prefix, 0) == 0 && name.find("positions") != std::string::npos) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::size_t ordinal = 0;
    for (const auto& file : files) {
      const auto parts = split_on(file.stem().string(), '_');
      RepetitionSample s;
      s.exercise_id = std::string(exercise_id);
      const auto subject = tagged_number(parts, 's');
      s.subject_id = subject ? (subject.value() < 10 ? "s0" : "s") + std::to_string(*subject) : "s00";
      const auto episode = tagged_number(parts, 'e');
      s.repetition_index = episode && *episode > 0 ? *episode - 1 : ordinal;
      ++ordinal;
      s.label = label;
      s.frame_rate_hz = 30.0;
      s.dominant_side = Side::Unknown;
      s.frames = read_numeric_table(file, spec.column_count());
      if (finalize_sample(s, file.string(), result.warnings)) result.samples.push_back(std::move(s));
    }
  };
  if (correct_dir) scan(*correct_dir, Label::Correct);
  if (incorrect_dir) scan(*incorrect_dir, Label::Incorrect);
  return result;
}

std::vector<RepetitionAnnotation> read_rehab24_annotations(const fs::path& csv, std::string_view exercise_id) {
  std::ifstream in(csv);
  if (!in) throw NotFound("cannot open " + csv.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<RepetitionAnnotation> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    auto cells = split_on(line, ',');
    for (auto& c : cells) c = trim(c);
    if (header.empty()) {
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) {
      throw ParseError(csv.string(), line_no, "expected " + std::to_string(header.size()) + " cells");
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    auto need = [&](const char* key) -> const std::string& {
      const auto it = row.find(key);
      if (it == row.end()) throw SchemaError(csv.string() + ": missing column '" + key + "'");
      return it->second;
    };
    if (lower(need("exercise_id")) != lower(exercise_id)) continue;
    RepetitionAnnotation a;
    a.recording_id = need("recording_id");
    a.subject_id = need("subject_id");
    try {
      a.start_frame = std::stoul(need("start_frame"));
      a.end_frame = std::stoul(need("end_frame"));
      a.correctness = label_from_string(need("correctness"));
    } catch (const std::logic_error&) {
      throw ParseError(csv.string(), line_no, "malformed annotation row");
    }
    if (const auto it = row.find("dominant_side"); it != row.end()) a.dominant_side = side_from_string(it->second);
    out.push_back(std::move(a));
  }
  return out;
}

LoadResult load_rehab24(const fs::path& root, std::string_view exercise_id, const SkeletonSpec& spec,
                        const std::vector<RepetitionAnnotation>& annotations, double frame_rate_hz) {
  if (!fs::is_directory(root)) throw NotFound("REHAB24-6 root not found: " + root.string());
  LoadResult result;
  std::map<std::string, Matrix> recordings;
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> seen_ranges;
  std::map<std::string, std::size_t> per_subject;

  auto recording = [&](const std::string& id) -> const Matrix& {
    auto it = recordings.find(id);
    if (it != recordings.end()) return it->second;
    for (const char* ext : {".txt", ".csv"}) {
      const fs::path p = root / (id + ext);
      if (fs::is_regular_file(p)) return recordings.emplace(id, read_numeric_table(p, spec.column_count())).first->second;
    }
    throw NotFound("recording '" + id + "' not found under " + root.string());
  };

  for (const auto& a : annotations) {
    const Matrix& rec = recording(a.recording_id);
    if (a.end_frame <= a.start_frame || a.end_frame > rec.rows()) {
      throw RangeError("annotation [" + std::to_string(a.start_frame) + ", " + std::to_string(a.end_frame) +
                       ") outside recording '" + a.recording_id + "' of " + std::to_string(rec.rows()) +
                       " frames");
    }
    auto& ranges = seen_ranges[a.recording_id];
    for (const auto& [s, e] : ranges) {
      if (a.start_frame < e && s < a.end_frame) {
        result.warnings.push_back("recording '" + a.recording_id + "': annotation [" +
                                  std::to_string(a.start_frame) + ", " + std::to_string(a.end_frame) +
                                  ") overlaps an earlier repetition");
        break;
      }
    }
    ranges.emplace_back(a.start_frame, a.end_frame);

    RepetitionSample s;
    s.exercise_id = std::string(exercise_id);
    s.subject_id = a.subject_id;
    s.repetition_index = per_subject[a.subject_id]++;
    s.label = a.correctness;
    s.frame_rate_hz = frame_rate_hz;
    s.dominant_side = a.dominant_side;
    const std::size_t n = a.end_frame - a.start_frame;
    std::vector<double> data(rec.data().begin() + static_cast<std::ptrdiff_t>(a.start_frame * rec.cols()),
                             rec.data().begin() + static_cast<std::ptrdiff_t>(a.end_frame * rec.cols()));
    s.frames = Matrix(n, rec.cols(), std::move(data));
    const std::string origin = a.recording_id + "[" + std::to_string(a.start_frame) + ":" +
                               std::to_string(a.end_frame) + "]";
    if (finalize_sample(s, origin, result.warnings)) result.samples.push_back(std::move(s));
  }
  return result;
}

void save_generic(const fs::path& path, const GenericDataset& dataset) {
  const auto& sk = dataset.skeleton;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFound("cannot write " + path.string());
  json header = {{"schema_version", kGenericSchemaVersion},
                 {"dataset_id", to_string(sk.dataset_id())},
                 {"exercise_id", dataset.exercise_id},
                 {"joint_names", sk.joint_names()},
                 {"frame_rate_hz", dataset.frame_rate_hz},
                 {"units", to_string(sk.units())}};
  out << header.dump() << '\n';
  for (const auto& s : dataset.samples) {
    if (s.exercise_id != dataset.exercise_id) {
      throw SchemaError("sample " + s.identity() + " does not belong to exercise " + dataset.exercise_id);
    }
    if (s.frame_rate_hz != dataset.frame_rate_hz) {
      throw SchemaError("sample " + s.identity() + " has a different frame rate");
    }
    if (s.frames.cols() != sk.column_count()) {
      throw SchemaError("sample " + s.identity() + " column count does not match the skeleton");
    }
    check_finite(s, s.identity());
    json frames = json::array();
    for (std::size_t r = 0; r < s.frames.rows(); ++r) {
      const auto row = s.frames.row(r);
      frames.push_back(std::vector<double>(row.begin(), row.end()));
    }
    json rec = {{"subject_id", s.subject_id},
                {"repetition_index", s.repetition_index},
                {"label", to_string(s.label)},
                {"dominant_side", to_string(s.dominant_side)},
                {"frames", std::move(frames)}};
    out << rec.dump() << '\n';
  }
}

GenericDataset load_generic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  GenericDataset ds;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    try {
      if (!have_header) {
        if (j.at("schema_version").get<int>() != kGenericSchemaVersion) {
          throw SchemaError(path.string() + ": unsupported schema_version " + j.at("schema_version").dump());
        }
        const DatasetId id = dataset_from_string(j.at("dataset_id").get<std::string>());
        const Vec3 up = id == DatasetId::GENERIC ? Vec3{0.0, 1.0, 0.0} : SkeletonSpec::builtin(id).up_axis();
        ds.skeleton = SkeletonSpec::make(id, j.at("joint_names").get<std::vector<std::string>>(), up,
                                         units_from_string(j.at("units").get<std::string>()));
        ds.exercise_id = j.at("exercise_id").get<std::string>();
        ds.frame_rate_hz = j.at("frame_rate_hz").get<double>();
        have_header = true;
        continue;
      }
      RepetitionSample s;
      s.exercise_id = ds.exercise_id;
      s.frame_rate_hz = ds.frame_rate_hz;
      s.subject_id = j.at("subject_id").get<std::string>();
      s.repetition_index = j.at("repetition_index").get<std::size_t>();
      s.label = label_from_string(j.at("label").get<std::string>());
      s.dominant_side = side_from_string(j.at("dominant_side").get<std::string>());
      const auto& frames = j.at("frames");
      const std::size_t cols = ds.skeleton.column_count();
      std::vector<double> data;
      data.reserve(frames.size() * cols);
      for (const auto& row : frames) {
        if (row.size() != cols) {
          throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": frame has " +
                            std::to_string(row.size()) + " values, expected " + std::to_string(cols));
        }
        for (const auto& v : row) data.push_back(v.get<double>());
      }
      s.frames = Matrix(frames.size(), cols, std::move(data));
      if (s.frames.rows() < 2) throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": fewer than two frames");
      ds.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw SchemaError(path.string() + ": missing header");
  return ds;
}

SplitPolicy split_policy_from_string(std::string_view s) {
  const auto l = lower(s);
  if (l == "subjectdisjoint" || l == "subject_disjoint") return SplitPolicy::SubjectDisjoint;
  if (l == "any") return SplitPolicy::Any;
  throw ConfigError("unknown split policy '" + std::string(s) + "'");
}

std::string_view to_string(SplitPolicy p) { return p == SplitPolicy::Any ? "Any" : "SubjectDisjoint"; }

SupportTestSplit split_support_and_test(const std::vector<RepetitionSample>& samples, std::size_t k,
                                        std::uint64_t seed, SplitPolicy policy) {
  SupportTestSplit out;
  if (k == 0) {
    out.test = samples;
    return out;
  }
  Rng rng(seed);

  auto take_k = [&](const std::vector<std::size_t>& candidates, Label label) {
    std::vector<std::size_t> idx;
    for (auto i : candidates) {
      if (samples[i].label == label) idx.push_back(i);
    }
    if (idx.size() < k) {
      throw CapacityError("need " + std::to_string(k) + " " + std::string(to_string(label)) +
                          " samples for support, found " + std::to_string(idx.size()));
    }
    rng.shuffle(idx);
    idx.resize(k);
    std::sort(idx.begin(), idx.end(),
              [&](auto a, auto b) { return samples[a].identity() < samples[b].identity(); });
    return idx;
  };

  std::vector<std::size_t> pool;
  std::set<std::string> pool_subjects;
  if (policy == SplitPolicy::Any) {
    pool.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) pool[i] = i;
  } else {
    std::vector<std::string> subjects;
    for (const auto& s : samples) subjects.push_back(s.subject_id);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    rng.shuffle(subjects);
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
    for (const auto& subj : subjects) {
      if (n_correct >= k && n_incorrect >= k) break;
      pool_subjects.insert(subj);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].subject_id != subj) continue;
        pool.push_back(i);
        (samples[i].label == Label::Correct ? n_correct : n_incorrect) += 1;
      }
    }
    if (n_correct < k || n_incorrect < k) {
      throw CapacityError("not enough samples per class for a " + std::to_string(k) + "-shot support set");
    }
    if (pool_subjects.size() == subjects.size()) {
      throw CapacityError("subject-disjoint split leaves no subject for testing");
    }
    std::sort(pool.begin(), pool.end());
  }

  const auto correct = take_k(pool, Label::Correct);
  const auto incorrect = take_k(pool, Label::Incorrect);
  std::vector<bool> used(samples.size(), false);
  for (auto i : correct) {
    out.support.push_back(samples[i]);
    used[i] = true;
  }
  for (auto i : incorrect) {
    out.support.push_back(samples[i]);
    used[i] = true;
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (used[i]) continue;
    if (policy == SplitPolicy::SubjectDisjoint && pool_subjects.count(samples[i].subject_id)) continue;
    out.test.push_back(samples[i]);
  }
  return out;
}

}  // namespace rehab
