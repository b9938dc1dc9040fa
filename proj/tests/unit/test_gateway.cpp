#include <doctest.h>

#include <httplib.h>

#include <cstdlib>
#include <deque>
#include <thread>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "rehabllm/errors.hpp"
#include "rehabllm/gateway.hpp"
#include "tmpdir.hpp"

using namespace rehab;
using namespace rehab::testing;
using json = nlohmann::json;

namespace {

PromptBundle bundle_for(const std::string& text, OutputFormat fmt = OutputFormat::Label) {
  PromptBundle b;
  b.rendered_text = text;
  b.expected_output_format = fmt;
  b.test_id = "m01/s01/0";
  return b;
}

CompletionRecord record(const std::string& hash, const std::string& reply) {
  CompletionRecord r;
  r.prompt_hash = hash;
  r.response_text = reply;
  r.latency_ms = 12.5;
  r.timestamp = "2024-01-01T00:00:00Z";
  r.transport_status = TransportStatus::Retried;
  return r;
}

class CountingBackend : public CompletionBackend {
 public:
  explicit CountingBackend(std::chrono::milliseconds delay = {}, std::size_t fail_after = SIZE_MAX)
      : delay_(delay), fail_after_(fail_after) {}

  std::string model_name() const override { return "counting"; }
  double temperature() const override { return 0.0; }
  std::string complete(const PromptBundle& bundle, TransportStatus& status) override {
    const std::size_t n = calls++;
    if (n >= fail_after_) throw TransportError("backend down");
    const int now = ++running;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(delay_);
    --running;
    status = TransportStatus::Ok;
    return "reply to " + bundle.rendered_text;
  }

  std::atomic<std::size_t> calls{0};
  std::atomic<int> running{0};
  std::atomic<int> peak{0};

 private:
  std::chrono::milliseconds delay_;
  std::size_t fail_after_;
};

struct ScriptedTransport : HttpTransport {
  struct Step {
    int status = 200;
    std::string body;
    bool drop = false;
  };
  std::deque<Step> steps;
  std::vector<std::map<std::string, std::string>> seen_headers;
  std::vector<std::string> seen_paths;
  std::vector<std::string> seen_bodies;

  HttpResponse post_json(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers) override {
    seen_paths.push_back(path);
    seen_bodies.push_back(body);
    seen_headers.push_back(headers);
    if (steps.empty()) throw TransportError("script exhausted");
    const Step s = steps.front();
    steps.pop_front();
    if (s.drop) throw TransportError("connection reset");
    return {s.status, s.body};
  }
};

std::string chat_body(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

struct ScriptedBackend {
  ScriptedTransport* transport = nullptr;
  std::shared_ptr<std::vector<long>> sleeps = std::make_shared<std::vector<long>>();
  std::unique_ptr<ChatCompletionBackend> backend;
};

ScriptedBackend scripted(std::vector<ScriptedTransport::Step> steps, int max_retries = 3,
                         const std::string& key_env = "REHAB_TEST_NO_SUCH_KEY") {
  ModelEndpointConfig c;
  c.base_url = "https://example.invalid/v1/";
  c.model_name = "test-model";
  c.api_key_env_var = key_env;
  c.max_retries = max_retries;
  c.backoff_initial_ms = 100;
  auto t = std::make_unique<ScriptedTransport>();
  t->steps.assign(steps.begin(), steps.end());
  ScriptedBackend out;
  out.transport = t.get();
  out.backend = std::make_unique<ChatCompletionBackend>(c, std::move(t));
  out.backend->set_sleep([v = out.sleeps](std::chrono::milliseconds d) { v->push_back(d.count()); });
  return out;
}

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("prompt hash covers model, prompt and temperature") {
  const std::string h = prompt_hash("p", "m", 0.0);
  CHECK(h.size() == 64);
  CHECK(h == prompt_hash("p", "m", 0.0));
  CHECK(h != prompt_hash("p", "m2", 0.0));
  CHECK(h != prompt_hash("p2", "m", 0.0));
  CHECK(h != prompt_hash("p", "m", 0.7));
}

TEST_CASE("endpoint config validation") {
  ModelEndpointConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_retries = 11;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.temperature = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_in_flight = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.model_name.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("cache persists records across reopen") {
  TempDir dir;
  {
    CompletionCache cache(dir.path());
    cache.put(record("h1", "correct"));
    cache.put(record("h2", "incorrect, 0.85"));
    cache.put(record("h1", "ignored duplicate"));
    CHECK(cache.size() == 2);
  }
  CompletionCache again(dir.path());
  CHECK(again.size() == 2);
  const auto r = again.find("h1");
  REQUIRE(r);
  CHECK(r->response_text == "correct");
  CHECK(r->latency_ms == 12.5);
  CHECK(r->timestamp == "2024-01-01T00:00:00Z");
  CHECK(r->transport_status == TransportStatus::Retried);
  CHECK_FALSE(again.find("h3"));
  CHECK(again.hits() == 1);
  CHECK(again.misses() == 1);
}

TEST_CASE("cache survives a torn final line") {
  TempDir dir;
  {
    CompletionCache cache(dir.path());
    cache.put(record("h1", "correct"));
  }
  std::ofstream(dir.path() / "completions.jsonl", std::ios::app) << R"({"prompt_hash": "h2", "respon)";
  {
    CompletionCache cache(dir.path());
    CHECK(cache.size() == 1);
    CHECK(cache.skipped_lines() == 1);
    cache.put(record("h3", "incorrect"));
  }
  CompletionCache cache(dir.path());
  CHECK(cache.size() == 2);
  CHECK(cache.find("h3"));
  CHECK(cache.skipped_lines() == 1);
}

TEST_CASE("gateway: one backend call per prompt, even under concurrency") {
  auto backend = std::make_shared<CountingBackend>(std::chrono::milliseconds(30));
  Gateway gw(backend, std::make_shared<CompletionCache>(), 4);
  std::vector<std::thread> threads;
  std::atomic<int> cached{0};
  for (int i = 0; i < 16; ++i) {
    threads.emplace_back([&] {
      if (gw.complete(bundle_for("same prompt")).from_cache) ++cached;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(backend->calls == 1);
  CHECK(gw.backend_calls() == 1);
  CHECK(cached == 15);
  const auto again = gw.complete(bundle_for("same prompt"));
  CHECK(again.from_cache);
  CHECK(again.response_text == "reply to same prompt");
  CHECK(backend->calls == 1);
}

TEST_CASE("gateway: complete_all keeps order and the in-flight bound") {
  auto backend = std::make_shared<CountingBackend>(std::chrono::milliseconds(5));
  Gateway gw(backend, std::make_shared<CompletionCache>(), 3);
  std::vector<PromptBundle> bundles;
  for (int i = 0; i < 24; ++i) bundles.push_back(bundle_for("p" + std::to_string(i % 20)));
  const auto out = gw.complete_all(bundles);
  REQUIRE(out.size() == 24);
  for (int i = 0; i < 24; ++i) CHECK(out[i].response_text == "reply to p" + std::to_string(i % 20));
  CHECK(backend->calls == 20);
  CHECK(backend->peak <= 3);
  CHECK(backend->peak >= 1);
}

TEST_CASE("gateway: a failure surfaces after finished calls are cached") {
  auto cache = std::make_shared<CompletionCache>();
  auto failing = std::make_shared<CountingBackend>(std::chrono::milliseconds(0), 5);
  std::vector<PromptBundle> bundles;
  for (int i = 0; i < 10; ++i) bundles.push_back(bundle_for("p" + std::to_string(i)));
  {
    Gateway gw(failing, cache, 1);
    CHECK_THROWS_AS(gw.complete_all(bundles), TransportError);
  }
  CHECK(cache->size() == 5);
  auto healthy = std::make_shared<CountingBackend>();
  // same model name, so the cached replies count
  Gateway gw(healthy, cache, 2);
  const auto out = gw.complete_all(bundles);
  CHECK(healthy->calls == 5);
  std::size_t from_cache = 0;
  for (const auto& r : out) from_cache += r.from_cache;
  CHECK(from_cache == 5);
}

TEST_CASE("chat backend: retries with doubling backoff") {
  auto s = scripted({{503, "busy"}, {0, "", true}, {429, "slow down"}, {200, chat_body("correct")}});
  TransportStatus status = TransportStatus::Failed;
  CHECK(s.backend->complete(bundle_for("hello"), status) == "correct");
  CHECK(status == TransportStatus::Retried);
  CHECK(*s.sleeps == std::vector<long>{100, 200, 400});
  CHECK(s.backend->requests_sent() == 4);
  CHECK(s.transport->seen_paths.front() == "/v1/chat/completions");
  const json body = json::parse(s.transport->seen_bodies.front());
  CHECK(body.at("model") == "test-model");
  CHECK(body.at("messages").at(0).at("content") == "hello");
  CHECK(body.at("messages").at(0).at("role") == "user");
  CHECK(body.at("temperature") == 0.0);
  CHECK(s.transport->seen_headers.front().count("Authorization") == 0);
}

TEST_CASE("chat backend: first success is Ok") {
  auto s = scripted({{200, chat_body("incorrect, 0.9")}});
  TransportStatus status = TransportStatus::Failed;
  CHECK(s.backend->complete(bundle_for("x"), status) == "incorrect, 0.9");
  CHECK(status == TransportStatus::Ok);
  CHECK(s.sleeps->empty());
}

TEST_CASE("chat backend: client errors are not retried") {
  auto s = scripted({{401, std::string(500, 'x')}, {200, chat_body("correct")}});
  TransportStatus status = TransportStatus::Ok;
  try {
    s.backend->complete(bundle_for("x"), status);
    FAIL("expected EndpointError");
  } catch (const EndpointError& e) {
    CHECK(e.status() == 401);
    CHECK(e.body_excerpt().size() == 200);
  }
  CHECK(s.backend->requests_sent() == 1);
}

TEST_CASE("chat backend: exhausted retries are a transport failure") {
  auto s = scripted({{500, ""}, {502, ""}, {0, "", true}}, 2);
  TransportStatus status = TransportStatus::Ok;
  CHECK_THROWS_AS(s.backend->complete(bundle_for("x"), status), TransportError);
  CHECK(s.backend->requests_sent() == 3);
  CHECK(*s.sleeps == std::vector<long>{100, 200});
}

TEST_CASE("chat backend: malformed body and api key header") {
  auto s = scripted({{200, "{\"choices\": []}"}});
  TransportStatus status;
  CHECK_THROWS_AS(s.backend->complete(bundle_for("x"), status), EndpointError);

  ::setenv("REHAB_TEST_KEY", "sk-test", 1);
  auto k = scripted({{200, chat_body("correct")}}, 0, "REHAB_TEST_KEY");
  k.backend->complete(bundle_for("x"), status);
  CHECK(k.transport->seen_headers.front().at("Authorization") == "Bearer sk-test");
  ::unsetenv("REHAB_TEST_KEY");
}

TEST_CASE("base url split") {
  CHECK(split_base_url("https://api.example.com/v1") == std::pair<std::string, std::string>{"https://api.example.com", "/v1"});
  CHECK(split_base_url("http://127.0.0.1:8080") == std::pair<std::string, std::string>{"http://127.0.0.1:8080", ""});
  CHECK(split_base_url("http://h:1/a/b/") == std::pair<std::string, std::string>{"http://h:1", "/a/b"});
  CHECK_THROWS_AS(split_base_url("api.example.com"), ConfigError);
}

TEST_CASE("http transport against a loopback server") {
  httplib::Server server;
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    const json in = json::parse(req.body);
    res.set_content(chat_body("echo: " + in.at("messages").at(0).at("content").get<std::string>()),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ModelEndpointConfig c;
  c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  c.api_key_env_var = "REHAB_TEST_NO_SUCH_KEY";
  c.request_timeout_s = 5;
  ChatCompletionBackend backend(c, make_http_transport(c.base_url, c.request_timeout_s));
  TransportStatus status = TransportStatus::Failed;
  CHECK(backend.complete(bundle_for("ping"), status) == "echo: ping");
  CHECK(status == TransportStatus::Ok);
  CHECK(auth.empty());
  server.stop();
  th.join();
}

TEST_CASE("http transport reports unreachable hosts") {
  auto t = make_http_transport("http://127.0.0.1:1", 1.0);
  CHECK_THROWS_AS(t->post_json("/chat/completions", "{}", {}), TransportError);
}

TEST_CASE("mock oracle reads the final block") {
  OracleConfig oracle;
  oracle.rules = {{"Knee Flexion A.", std::nullopt, 38.0, true}};
  const FeatureSequence deep = fixture_sequence(1, Label::Correct);
  const FeatureSequence shallow = fixture_sequence(2, Label::Incorrect);
  const auto b = render_prompt({TechniqueKind::Certainty, 1, std::nullopt}, fixture_support(1), deep, "squat",
                               "Kinect data", SerializationPolicy{});
  CHECK(mock_oracle_response(b, oracle) == "correct, 0.85");
  const auto c = render_prompt({TechniqueKind::Classification, 1, std::nullopt}, fixture_support(1), shallow,
                               "squat", "Kinect data", SerializationPolicy{});
  CHECK(mock_oracle_response(c, oracle) == "incorrect");

  const auto d = render_prompt({TechniqueKind::ChainOfThought, 0, std::nullopt}, {}, deep, "squat", "Kinect data",
                               SerializationPolicy{});
  const std::string reply = mock_oracle_response(d, oracle);
  CHECK(reply.rfind("correct, ", 0) == 0);
  CHECK(reply.find("Knee Flexion A.") != std::string::npos);

  AssessmentOutcome prior;
  prior.predicted_label = Label::Incorrect;
  prior.parse_status = ParseStatus::Parsed;
  const auto fb = render_feedback_prompt("physiotherapist", prior, shallow, "squat", "Kinect data",
                                         SerializationPolicy{});
  CHECK(mock_oracle_response(fb, oracle).find("Knee Flexion A.") != std::string::npos);

  CHECK_THROWS_AS(mock_oracle_response(bundle_for("no data here"), oracle), OracleError);
  OracleConfig missing;
  missing.rules = {{"Hip A.", std::nullopt, 1.0, true}};
  CHECK_THROWS_AS(mock_oracle_response(c, missing), OracleError);
}

TEST_CASE("mock oracle probability scale") {
  OracleConfig oracle;
  oracle.rules = {{"", 0, 10.0, true}};
  const auto above = oracle_decide({30.0}, {}, oracle);
  CHECK(above.label == Label::Correct);
  CHECK(above.margin == doctest::Approx(2.0));
  CHECK(above.probability_hundredths > 50);
  const auto below = oracle_decide({-10.0}, {}, oracle);
  CHECK(below.label == Label::Incorrect);
  CHECK(below.probability_hundredths < 50);
  CHECK(below.probability_hundredths >= 1);
  const auto edge = oracle_decide({10.0}, {}, oracle);
  CHECK(edge.label == Label::Incorrect);
}

TEST_CASE("mock backend name tracks the rules") {
  OracleConfig a;
  a.rules = {{"Knee Flexion A.", std::nullopt, 38.0, true}};
  OracleConfig b = a;
  b.rules[0].threshold = 40.0;
  CHECK(MockOracleBackend(a).model_name() == MockOracleBackend(a).model_name());
  CHECK(MockOracleBackend(a).model_name() != MockOracleBackend(b).model_name());
  CHECK(MockOracleBackend(a).model_name().rfind("mock-oracle@", 0) == 0);
}

TEST_CASE("transport status names") {
  for (auto s : {TransportStatus::Ok, TransportStatus::Retried, TransportStatus::Failed}) {
    CHECK(transport_status_from_string(to_string(s)) == s);
  }
}
