#include "rehabllm/gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rehabllm/errors.hpp"

namespace rehab {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ModelEndpointConfig::validate() const {
  if (base_url.empty()) throw ConfigError("endpoint base_url must be set");
  if (model_name.empty()) throw ConfigError("endpoint model_name must be set");
  if (temperature < 0.0) throw ConfigError("temperature must be non-negative");
  if (max_output_tokens <= 0) throw ConfigError("max_output_tokens must be positive");
  if (request_timeout_s <= 0.0) throw ConfigError("request_timeout_s must be positive");
  if (max_retries < 0 || max_retries > 10) throw ConfigError("max_retries must be in [0, 10]");
  if (backoff_initial_ms < 0) throw ConfigError("backoff_initial_ms must be non-negative");
  if (max_in_flight <= 0) throw ConfigError("max_in_flight must be positive");
}

std::string_view to_string(TransportStatus s) {
  switch (s) {
    case TransportStatus::Ok: return "Ok";
    case TransportStatus::Retried: return "Retried";
    case TransportStatus::Failed: return "Failed";
  }
  return "Failed";
}

TransportStatus transport_status_from_string(std::string_view s) {
  if (s == "Ok") return TransportStatus::Ok;
  if (s == "Retried") return TransportStatus::Retried;
  if (s == "Failed") return TransportStatus::Failed;
  throw SchemaError("unknown transport status '" + std::string(s) + "'");
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string prompt_hash(std::string_view rendered_text, std::string_view model_name, double temperature) {
  // json objects keep keys sorted, so dump() is canonical.
  const json canonical = {{"model", model_name}, {"prompt", rendered_text}, {"temperature", temperature}};
  return sha256_hex(canonical.dump());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Cache

namespace {

json record_to_json(const CompletionRecord& r) {
  return {{"prompt_hash", r.prompt_hash},
          {"response_text", r.response_text},
          {"latency_ms", r.latency_ms},
          {"timestamp", r.timestamp},
          {"transport_status", to_string(r.transport_status)}};
}

CompletionRecord record_from_json(const json& j) {
  CompletionRecord r;
  r.prompt_hash = j.at("prompt_hash").get<std::string>();
  r.response_text = j.at("response_text").get<std::string>();
  r.latency_ms = j.at("latency_ms").get<double>();
  r.timestamp = j.at("timestamp").get<std::string>();
  r.transport_status = transport_status_from_string(j.at("transport_status").get<std::string>());
  return r;
}

}  // namespace

CompletionCache::CompletionCache(const fs::path& dir) {
  fs::create_directories(dir);
  file_ = dir / "completions.jsonl";
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto r = record_from_json(json::parse(line));
      records_.emplace(r.prompt_hash, std::move(r));
    } catch (const std::exception&) {
      ++skipped_;
    }
  }
  // A torn final write has no newline; start the next record on its own line.
  std::ifstream tail(*file_, std::ios::binary | std::ios::ate);
  if (tail && tail.tellg() > 0) {
    tail.seekg(-1, std::ios::end);
    if (tail.get() != '\n') std::ofstream(*file_, std::ios::app | std::ios::binary) << '\n';
  }
}

std::optional<CompletionRecord> CompletionCache::find(const std::string& hash) const {
  std::lock_guard lock(mu_);
  const auto it = records_.find(hash);
  if (it == records_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void CompletionCache::put(const CompletionRecord& record) {
  std::lock_guard lock(mu_);
  if (!records_.emplace(record.prompt_hash, record).second) return;
  if (file_) {
    std::ofstream out(*file_, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to cache file " + file_->string());
    out << record_to_json(record).dump() << '\n';
    out.flush();
  }
}

std::size_t CompletionCache::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

// ---------------------------------------------------------------------------
// Chat-completion backend

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string host = path_start == std::string::npos ? base_url : base_url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {host, path};
}

std::string chat_request_body(const ModelEndpointConfig& config, std::string_view prompt) {
  const json body = {{"model", config.model_name},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", config.temperature},
                     {"max_tokens", config.max_output_tokens}};
  return body.dump();
}

std::string chat_response_content(int status, const std::string& body) {
  try {
    const json j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw EndpointError(status, "malformed chat-completion body: " + body.substr(0, 200));
  }
}

namespace {

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

}  // namespace

ChatCompletionBackend::ChatCompletionBackend(ModelEndpointConfig config, std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  path_prefix_ = split_base_url(config_.base_url).second;
  if (const char* key = std::getenv(config_.api_key_env_var.c_str())) api_key_ = key;
  sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatCompletionBackend::complete(const PromptBundle& bundle, TransportStatus& status) {
  const std::string body = chat_request_body(config_, bundle.rendered_text);
  std::map<std::string, std::string> headers;
  if (!api_key_.empty()) headers["Authorization"] = "Bearer " + api_key_;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) sleep_(std::chrono::milliseconds(static_cast<long>(config_.backoff_initial_ms) << (attempt - 1)));
    try {
      ++requests_;
      const HttpResponse resp = transport_->post_json(path_prefix_ + "/chat/completions", body, headers);
      if (resp.status >= 200 && resp.status < 300) {
        status = attempt == 0 ? TransportStatus::Ok : TransportStatus::Retried;
        return chat_response_content(resp.status, resp.body);
      }
      if (!retryable_status(resp.status)) throw EndpointError(resp.status, resp.body.substr(0, 200));
      last_error = "HTTP " + std::to_string(resp.status);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError("giving up after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Mock oracle

namespace {

std::vector<std::string> split_delimited(std::string_view line, std::string_view delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + delim.size();
  }
  return out;
}

bool parse_number(std::string_view tok, double& out) {
  while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.remove_suffix(1);
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size() && !tok.empty();
}

struct ParsedBlock {
  std::vector<std::string> names;
  std::vector<double> means;
};

ParsedBlock parse_final_block(const std::string& text, const std::string& delim) {
  auto pos = text.rfind("<Data ");
  if (pos == std::string::npos) throw OracleError("prompt has no data block");
  const auto eol = text.find('\n', pos);
  if (eol == std::string::npos) throw OracleError("final data block is empty");
  const std::string tag = text.substr(pos, eol - pos);
  if (tag.back() != '>' || tag.find(',') != std::string::npos || tag.find("Label") != std::string::npos) {
    throw OracleError("final data block '" + tag + "' is not an unlabeled test block");
  }
  std::vector<std::string> lines;
  std::size_t start = eol + 1;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    if (!line.empty()) lines.push_back(std::move(line));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  ParsedBlock block;
  std::vector<double> sums;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = split_delimited(lines[i], delim);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t c = 0; c < fields.size(); ++c) numeric = numeric && parse_number(fields[c], row[c]);
    if (!numeric) {
      if (i == 0) {
        block.names = fields;
        continue;
      }
      throw OracleError("malformed data row: '" + lines[i] + "'");
    }
    if (sums.empty()) sums.assign(row.size(), 0.0);
    if (row.size() != sums.size() || (!block.names.empty() && row.size() != block.names.size())) {
      throw OracleError("ragged data block");
    }
    for (std::size_t c = 0; c < row.size(); ++c) sums[c] += row[c];
    ++rows;
  }
  if (rows == 0) throw OracleError("final data block has no rows");
  block.means.resize(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) block.means[c] = sums[c] / static_cast<double>(rows);
  return block;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v == 0.0 ? 0.0 : v);
  return buf;
}

}  // namespace

OracleDecision oracle_decide(const std::vector<double>& means, const std::vector<std::string>& names,
                             const OracleConfig& config) {
  OracleDecision d;
  d.first_feature = names.empty() ? "the first feature" : names.front();
  bool any = false;
  double margin = INFINITY;
  for (const auto& rule : config.rules) {
    std::optional<std::size_t> col;
    if (!rule.feature.empty()) {
      const auto it = std::find(names.begin(), names.end(), rule.feature);
      if (it != names.end()) col = static_cast<std::size_t>(it - names.begin());
    }
    if (!col && names.empty() && rule.column && *rule.column < means.size()) col = rule.column;
    if (!col) continue;
    any = true;
    const double mean = means[*col];
    const double signed_gap = (mean - rule.threshold) * (rule.correct_if_above ? 1.0 : -1.0);
    margin = std::min(margin, signed_gap / std::max(std::abs(rule.threshold), 1.0));
    const std::string feature = *col < names.size() ? names[*col] : "column " + std::to_string(*col + 1);
    d.evidence.push_back("the mean " + feature + " is " + fixed(mean, 2) + ", " +
                         (mean > rule.threshold ? "above" : mean < rule.threshold ? "below" : "equal to") +
                         " the reference value " + fixed(rule.threshold, 2));
  }
  if (!any) throw OracleError("no oracle rule matches the data block columns");
  d.margin = margin;
  d.label = margin > 0.0 ? Label::Correct : Label::Incorrect;
  const int confident =
      std::clamp(static_cast<int>(std::lround(50.0 + 49.0 * std::tanh(std::abs(margin)))), 51, 99);
  d.probability_hundredths = d.label == Label::Correct ? confident : 100 - confident;
  return d;
}

OracleDecision direct_oracle_decision(const FeatureSequence& seq, const SerializationPolicy& policy,
                                      const OracleConfig& config) {
  const Matrix values = serialized_values(seq, policy);
  std::vector<double> means(values.cols(), 0.0);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) means[c] += values(r, c);
  }
  for (auto& m : means) m /= static_cast<double>(values.rows());
  return oracle_decide(means, policy.include_header ? seq.feature_names : std::vector<std::string>{}, config);
}

std::string mock_oracle_response(const PromptBundle& bundle, const OracleConfig& config) {
  const ParsedBlock block = parse_final_block(bundle.rendered_text, config.delimiter);
  const OracleDecision d = oracle_decide(block.means, block.names, config);
  const std::string label(to_string(d.label));
  std::string reasoning;
  for (std::size_t i = 0; i < d.evidence.size(); ++i) reasoning += (i ? "; " : "") + d.evidence[i];
  reasoning += ".";
  if (!reasoning.empty()) reasoning[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(reasoning[0])));
  const std::string certainty = fixed(config.certainty, 2);
  switch (bundle.expected_output_format) {
    case OutputFormat::Label: return label;
    case OutputFormat::LabelReasoning: return label + ", " + reasoning;
    case OutputFormat::ProbabilityOnly: return fixed(d.probability_hundredths / 100.0, 2);
    case OutputFormat::LabelCertainty: return label + ", " + certainty;
    case OutputFormat::LabelCertaintyReasoning: return label + ", " + certainty + ", " + reasoning;
    case OutputFormat::FreeText:
      return "Your repetition was assessed as " + label + ". Focus on " + d.first_feature +
             ": move through the full range smoothly and keep your trunk and pelvis steady.";
  }
  throw OracleError("unknown output format");
}

CompletionRecord mock_oracle_complete(const PromptBundle& bundle, const OracleConfig& config) {
  CompletionRecord r;
  r.prompt_hash = prompt_hash(bundle.rendered_text, MockOracleBackend(config).model_name(), 0.0);
  r.response_text = mock_oracle_response(bundle, config);
  r.timestamp = utc_timestamp();
  r.transport_status = TransportStatus::Ok;
  return r;
}

MockOracleBackend::MockOracleBackend(OracleConfig config) : config_(std::move(config)) {
  json rules = json::array();
  for (const auto& r : config_.rules) {
    rules.push_back({r.feature, r.column ? json(*r.column) : json(nullptr), r.threshold, r.correct_if_above});
  }
  const json fingerprint = {{"rules", rules}, {"delimiter", config_.delimiter}, {"certainty", config_.certainty}};
  name_ = "mock-oracle@" + sha256_hex(fingerprint.dump()).substr(0, 12);
}

std::string MockOracleBackend::complete(const PromptBundle& bundle, TransportStatus& status) {
  status = TransportStatus::Ok;
  return mock_oracle_response(bundle, config_);
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<CompletionBackend> backend, std::shared_ptr<CompletionCache> cache, int max_in_flight)
    : backend_(std::move(backend)), cache_(std::move(cache)), max_in_flight_(std::max(1, max_in_flight)) {
  if (!cache_) cache_ = std::make_shared<CompletionCache>();
}

std::string Gateway::hash_of(const PromptBundle& bundle) const {
  return prompt_hash(bundle.rendered_text, backend_->model_name(), backend_->temperature());
}

CompletionRecord Gateway::complete(const PromptBundle& bundle) {
  const std::string hash = hash_of(bundle);
  std::promise<CompletionRecord> promise;
  {
    std::unique_lock lock(inflight_mu_);
    if (const auto it = inflight_.find(hash); it != inflight_.end()) {
      auto fut = it->second;
      lock.unlock();
      CompletionRecord r = fut.get();
      r.from_cache = true;
      return r;
    }
    if (auto cached = cache_->find(hash)) {
      cached->from_cache = true;
      return *cached;
    }
    inflight_.emplace(hash, promise.get_future().share());
  }

  auto finish = [&] {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(hash);
  };
  try {
    ++backend_calls_;
    CompletionRecord r;
    r.prompt_hash = hash;
    const auto t0 = std::chrono::steady_clock::now();
    r.response_text = backend_->complete(bundle, r.transport_status);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    r.timestamp = utc_timestamp();
    cache_->put(r);
    promise.set_value(r);
    finish();
    return r;
  } catch (...) {
    promise.set_exception(std::current_exception());
    finish();
    throw;
  }
}

std::vector<CompletionRecord> Gateway::complete_all(const std::vector<PromptBundle>& bundles) {
  std::vector<CompletionRecord> out(bundles.size());
  std::vector<std::exception_ptr> errors(bundles.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < bundles.size(); i = next++) {
      try {
        out[i] = complete(bundles[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(max_in_flight_), bundles.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace rehab
