#include "rehabllm/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "rehabllm/errors.hpp"

namespace rehab {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Strips whitespace, then matching outer quotes, repeatedly.
std::string_view unwrap(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2) {
    const char a = s.front();
    const char b = s.back();
    if ((a == '"' || a == '\'' || a == '`') && a == b) {
      s = trim(s.substr(1, s.size() - 2));
    } else {
      break;
    }
  }
  return s;
}

double to_double(const std::string& s) {
  double v = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  if (!s.empty() && s[0] == '.') {
    const std::string padded = "0" + s;
    std::from_chars(padded.data(), padded.data() + padded.size(), v);
  }
  return v;
}

// Cursor over the unwrapped reply used by the strict pass.
class Scanner {
 public:
  explicit Scanner(std::string_view s) : s_(s) {}

  bool done() const { return pos_ == s_.size(); }
  std::string_view rest() const { return s_.substr(pos_); }

  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool accept_any(std::string_view chars) {
    if (pos_ < s_.size() && chars.find(s_[pos_]) != std::string_view::npos) {
      ++pos_;
      return true;
    }
    return false;
  }

  // ["'`]? (correct|incorrect) ["'`]?, case-insensitive, not followed by a letter.
  std::optional<Label> label() {
    const std::size_t save = pos_;
    const char quote = pos_ < s_.size() ? s_[pos_] : '\0';
    const bool quoted = quote == '"' || quote == '\'' || quote == '`';
    if (quoted) ++pos_;
    for (auto [word, label] : {std::pair{std::string_view("incorrect"), Label::Incorrect},
                               std::pair{std::string_view("correct"), Label::Correct}}) {
      if (lower(s_.substr(pos_, word.size())) == word &&
          (pos_ + word.size() == s_.size() || !is_alpha(s_[pos_ + word.size()]))) {
        pos_ += word.size();
        if (quoted) accept(quote);
        return label;
      }
    }
    pos_ = save;
    return std::nullopt;
  }

  // 0(.d+)? | 1(.0+)? | .d+
  std::optional<double> unit_number() {
    const std::size_t begin = pos_;
    auto digits = [&](bool zeros_only) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && is_digit(s_[pos_]) && (!zeros_only || s_[pos_] == '0')) ++pos_;
      return pos_ > start;
    };
    bool ok = false;
    if (accept('0')) {
      ok = true;
      if (accept('.') && !digits(false)) ok = false;
    } else if (accept('1')) {
      ok = true;
      if (accept('.') && !digits(true)) ok = false;
    } else if (accept('.')) {
      ok = digits(false);
    }
    if (!ok || (pos_ < s_.size() && (is_digit(s_[pos_]) || s_[pos_] == '.'))) {
      pos_ = begin;
      return std::nullopt;
    }
    return to_double(std::string(s_.substr(begin, pos_ - begin)));
  }

  // Separator between fields: optional space, one of , : ; -, optional space.
  bool separator(std::string_view chars) {
    const std::size_t save = pos_;
    skip_space();
    if (!accept_any(chars)) {
      pos_ = save;
      return false;
    }
    skip_space();
    return true;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

std::optional<AssessmentOutcome> strict(std::string_view text, OutputFormat format) {
  const std::string_view body = unwrap(text);
  Scanner sc(body);
  AssessmentOutcome out;
  switch (format) {
    case OutputFormat::Label:
      out.predicted_label = sc.label();
      if (!out.predicted_label) return std::nullopt;
      sc.accept('.');
      if (!sc.done()) return std::nullopt;
      break;
    case OutputFormat::LabelReasoning:
      out.predicted_label = sc.label();
      if (!out.predicted_label || !sc.separator(",:;-") || sc.done()) return std::nullopt;
      out.reasoning_text = std::string(sc.rest());
      break;
    case OutputFormat::ProbabilityOnly:
      out.probability_correct = sc.unit_number();
      if (!out.probability_correct || !sc.done()) return std::nullopt;
      break;
    case OutputFormat::LabelCertainty:
      out.predicted_label = sc.label();
      if (!out.predicted_label || !sc.separator(",")) return std::nullopt;
      out.certainty = sc.unit_number();
      if (!out.certainty || !sc.done()) return std::nullopt;
      break;
    case OutputFormat::LabelCertaintyReasoning:
      out.predicted_label = sc.label();
      if (!out.predicted_label || !sc.separator(",")) return std::nullopt;
      out.certainty = sc.unit_number();
      if (!out.certainty || !sc.separator(",:;-") || sc.done()) return std::nullopt;
      out.reasoning_text = std::string(sc.rest());
      break;
    case OutputFormat::FreeText:
      if (body.empty()) return std::nullopt;
      out.feedback_text = std::string(trim(text));
      break;
  }
  out.parse_status = ParseStatus::Parsed;
  return out;
}

// Position of the first standalone occurrence of `word` in lowercase text.
std::optional<std::size_t> find_word(const std::string& hay, std::string_view word) {
  for (auto pos = hay.find(word); pos != std::string::npos; pos = hay.find(word, pos + 1)) {
    const bool left_ok = pos == 0 || !is_alpha(hay[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= hay.size() || !is_alpha(hay[end]);
    if (left_ok && right_ok) return pos;
  }
  return std::nullopt;
}

struct LabelHit {
  Label label;
  std::size_t end;  // index just past the label word
};

std::optional<LabelHit> recover_label(const std::string& low) {
  if (const auto pos = find_word(low, "incorrect")) return LabelHit{Label::Incorrect, *pos + 9};
  // "incorrectly" and friends make a bare "correct" elsewhere ambiguous.
  if (low.find("incorrect") != std::string::npos) return std::nullopt;
  if (const auto pos = find_word(low, "correct")) return LabelHit{Label::Correct, *pos + 7};
  return std::nullopt;
}

// First number in [0, 1]; "85%" reads as 0.85. Digits glued to letters
// ("m01", "3rd") are skipped.
std::optional<double> recover_unit_number(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const bool starts = is_digit(text[i]) || (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
    if (!starts) {
      ++i;
      continue;
    }
    const std::size_t begin = i;
    bool seen_dot = false;
    while (i < text.size() && (is_digit(text[i]) || (text[i] == '.' && !seen_dot && i + 1 < text.size() &&
                                                     is_digit(text[i + 1])))) {
      if (text[i] == '.') seen_dot = true;
      ++i;
    }
    const bool glued_left = begin > 0 && (is_alpha(text[begin - 1]) || text[begin - 1] == '-' ||
                                          text[begin - 1] == '.' || is_digit(text[begin - 1]));
    const bool glued_right = i < text.size() && is_alpha(text[i]);
    if (glued_left || glued_right) continue;
    double v = to_double(std::string(text.substr(begin, i - begin)));
    if (i < text.size() && text[i] == '%') v /= 100.0;
    if (v >= 0.0 && v <= 1.0) return v;
  }
  return std::nullopt;
}

std::optional<AssessmentOutcome> recover(std::string_view text, OutputFormat format) {
  if (format == OutputFormat::FreeText) return std::nullopt;
  const std::string low = lower(text);
  AssessmentOutcome out;
  const auto hit = recover_label(low);
  if (hit) out.predicted_label = hit->label;

  switch (format) {
    case OutputFormat::ProbabilityOnly:
      out.probability_correct = recover_unit_number(text);
      if (!out.probability_correct) return std::nullopt;
      out.predicted_label.reset();
      break;
    case OutputFormat::LabelCertainty:
    case OutputFormat::LabelCertaintyReasoning:
      if (!hit) return std::nullopt;
      out.certainty = recover_unit_number(text.substr(hit->end));
      if (!out.certainty) out.certainty = recover_unit_number(text);
      if (format == OutputFormat::LabelCertaintyReasoning) {
        const auto rest = trim(text.substr(hit->end));
        if (!rest.empty()) out.reasoning_text = std::string(rest);
      }
      break;
    case OutputFormat::LabelReasoning: {
      if (!hit) return std::nullopt;
      auto rest = trim(text.substr(hit->end));
      while (!rest.empty() && (rest.front() == ',' || rest.front() == ':' || rest.front() == '-' ||
                               rest.front() == '.' || rest.front() == '"' || rest.front() == '\'')) {
        rest = trim(rest.substr(1));
      }
      if (!rest.empty()) out.reasoning_text = std::string(rest);
      break;
    }
    case OutputFormat::Label:
      if (!hit) return std::nullopt;
      break;
    case OutputFormat::FreeText:
      return std::nullopt;
  }
  out.parse_status = ParseStatus::Recovered;
  return out;
}

}  // namespace

std::string_view to_string(OutputFormat f) {
  switch (f) {
    case OutputFormat::Label: return "Label";
    case OutputFormat::LabelReasoning: return "LabelReasoning";
    case OutputFormat::ProbabilityOnly: return "ProbabilityOnly";
    case OutputFormat::LabelCertainty: return "LabelCertainty";
    case OutputFormat::LabelCertaintyReasoning: return "LabelCertaintyReasoning";
    case OutputFormat::FreeText: return "FreeText";
  }
  return "Label";
}

OutputFormat output_format_from_string(std::string_view s) {
  for (auto f : {OutputFormat::Label, OutputFormat::LabelReasoning, OutputFormat::ProbabilityOnly,
                 OutputFormat::LabelCertainty, OutputFormat::LabelCertaintyReasoning, OutputFormat::FreeText}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown output format '" + std::string(s) + "'");
}

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Parsed: return "Parsed";
    case ParseStatus::Recovered: return "Recovered";
    case ParseStatus::Failed: return "Failed";
  }
  return "Failed";
}

AssessmentOutcome parse(std::string_view response_text, OutputFormat expected, double threshold) {
  AssessmentOutcome out;
  try {
    if (auto s = strict(response_text, expected)) {
      out = std::move(*s);
    } else if (auto r = recover(response_text, expected)) {
      out = std::move(*r);
    }
  } catch (const std::exception&) {
    out = AssessmentOutcome{};
  }
  if (out.probability_correct && out.parse_status != ParseStatus::Failed) {
    out.predicted_label = *out.probability_correct >= threshold ? Label::Correct : Label::Incorrect;
  }
  out.raw_text = std::string(response_text);
  return out;
}

}  // namespace rehab
