#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rehabllm/prompt.hpp"

namespace rehab {

struct ModelEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-4o";
  std::string api_key_env_var = "LLM_API_KEY";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  double request_timeout_s = 60.0;
  int max_retries = 3;
  int backoff_initial_ms = 500;
  int max_in_flight = 4;

  void validate() const;
};

enum class TransportStatus { Ok, Retried, Failed };
std::string_view to_string(TransportStatus s);
TransportStatus transport_status_from_string(std::string_view s);

struct CompletionRecord {
  std::string prompt_hash;
  std::string response_text;
  double latency_ms = 0.0;
  std::string timestamp;  // UTC, ISO 8601
  TransportStatus transport_status = TransportStatus::Ok;
  bool from_cache = false;  // not persisted
};

std::string sha256_hex(std::string_view data);

/// Content hash over the canonical JSON of (model, prompt, temperature).
std::string prompt_hash(std::string_view rendered_text, std::string_view model_name, double temperature);

std::string utc_timestamp();

// Append-only record store, one JSON record per line in
// <dir>/completions.jsonl. Without a directory it only lives in memory.
// Safe for concurrent use.
class CompletionCache {
 public:
  CompletionCache() = default;
  explicit CompletionCache(const std::filesystem::path& dir);

  std::optional<CompletionRecord> find(const std::string& hash) const;
  void put(const CompletionRecord& record);

  std::size_t size() const;
  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }
  /// Lines that could not be read back (e.g. a torn final write).
  std::size_t skipped_lines() const noexcept { return skipped_; }

 private:
  mutable std::mutex mu_;
  std::map<std::string, CompletionRecord> records_;
  std::optional<std::filesystem::path> file_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
  std::size_t skipped_ = 0;
};

/// Something that turns a rendered prompt into a reply. Implementations are
/// called without the cache in front of them.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string model_name() const = 0;
  virtual double temperature() const = 0;
  /// Returns the reply text and sets `status` (Ok or Retried).
  virtual std::string complete(const PromptBundle& bundle, TransportStatus& status) = 0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// POSTs a JSON body to `path` under the configured base URL. Throws
  /// TransportError when no HTTP response was received.
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib client bound to the scheme/host/port of a base URL.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, double timeout_s);

/// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

std::string chat_request_body(const ModelEndpointConfig& config, std::string_view prompt);
/// choices[0].message.content; throws EndpointError on a malformed body.
std::string chat_response_content(int status, const std::string& body);

class ChatCompletionBackend : public CompletionBackend {
 public:
  /// Reads the API key from the configured environment variable.
  ChatCompletionBackend(ModelEndpointConfig config, std::unique_ptr<HttpTransport> transport);

  std::string model_name() const override { return config_.model_name; }
  double temperature() const override { return config_.temperature; }
  std::string complete(const PromptBundle& bundle, TransportStatus& status) override;

  std::size_t requests_sent() const noexcept { return requests_.load(); }
  void set_sleep(std::function<void(std::chrono::milliseconds)> sleep) { sleep_ = std::move(sleep); }

 private:
  ModelEndpointConfig config_;
  std::unique_ptr<HttpTransport> transport_;
  std::string path_prefix_;
  std::string api_key_;
  std::atomic<std::size_t> requests_{0};
  std::function<void(std::chrono::milliseconds)> sleep_;
};

// Deterministic stand-in for a language model: reads the final data block
// back out of the prompt, averages each column, and applies threshold rules.
struct OracleRule {
  std::string feature;                // matched against the header row
  std::optional<std::size_t> column;  // used when there is no header
  double threshold = 0.0;
  bool correct_if_above = true;
};

struct OracleConfig {
  std::vector<OracleRule> rules;
  std::string delimiter = ",";
  double certainty = 0.85;
};

struct OracleDecision {
  Label label = Label::Incorrect;
  double margin = 0.0;                 // > 0 exactly when every rule holds
  int probability_hundredths = 50;     // probability of Correct, in 1/100
  std::vector<std::string> evidence;   // one clause per applied rule
  std::string first_feature;
};

/// Threshold rule applied to per-column means.
OracleDecision oracle_decide(const std::vector<double>& means, const std::vector<std::string>& names,
                             const OracleConfig& config);

/// Same decision computed straight from a feature sequence: resampled and
/// rounded numerically, never printed or parsed.
OracleDecision direct_oracle_decision(const FeatureSequence& seq, const SerializationPolicy& policy,
                                      const OracleConfig& config);

/// Reply text in the bundle's expected format. Throws OracleError when the
/// final data block cannot be read.
std::string mock_oracle_response(const PromptBundle& bundle, const OracleConfig& config);

CompletionRecord mock_oracle_complete(const PromptBundle& bundle, const OracleConfig& config);

class MockOracleBackend : public CompletionBackend {
 public:
  explicit MockOracleBackend(OracleConfig config);
  /// "mock-oracle@<digest of the rules>", so cached replies never outlive a
  /// change of rules.
  std::string model_name() const override { return name_; }
  double temperature() const override { return 0.0; }
  std::string complete(const PromptBundle& bundle, TransportStatus& status) override;

 private:
  OracleConfig config_;
  std::string name_;
};

// Cache in front of a backend. At most one backend call per distinct
// prompt hash, including under concurrency.
class Gateway {
 public:
  Gateway(std::shared_ptr<CompletionBackend> backend, std::shared_ptr<CompletionCache> cache, int max_in_flight = 4);

  CompletionRecord complete(const PromptBundle& bundle);
  /// Completes every bundle, keeping at most max_in_flight backend calls
  /// running. Results are in input order; the first failure is rethrown
  /// after all calls finish.
  std::vector<CompletionRecord> complete_all(const std::vector<PromptBundle>& bundles);

  std::string hash_of(const PromptBundle& bundle) const;
  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }
  const CompletionCache& cache() const { return *cache_; }
  const CompletionBackend& backend() const { return *backend_; }

 private:
  std::shared_ptr<CompletionBackend> backend_;
  std::shared_ptr<CompletionCache> cache_;
  int max_in_flight_;
  std::mutex inflight_mu_;
  std::map<std::string, std::shared_future<CompletionRecord>> inflight_;
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace rehab
