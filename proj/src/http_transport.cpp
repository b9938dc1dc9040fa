#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "rehabllm/errors.hpp"
#include "rehabllm/gateway.hpp"

namespace rehab {

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string host, double timeout_s) : host_(std::move(host)) {
    secs_ = static_cast<time_t>(timeout_s);
    usecs_ = static_cast<time_t>((timeout_s - static_cast<double>(secs_)) * 1e6);
  }

  HttpResponse post_json(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers) override {
    httplib::Headers h(headers.begin(), headers.end());
    // One client per request so concurrent calls share no connection state.
    httplib::Client client(host_);
    client.set_connection_timeout(secs_, usecs_);
    client.set_read_timeout(secs_, usecs_);
    client.set_write_timeout(secs_, usecs_);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) throw TransportError("request to " + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::string host_;
  time_t secs_ = 0;
  time_t usecs_ = 0;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, double timeout_s) {
  return std::make_unique<HttplibTransport>(split_base_url(base_url).first, timeout_s);
}

}  // namespace rehab
