#include "muse/error.hpp"
#include "muse/providers.hpp"

#include "io_util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <fstream>
#include <semaphore>
#include <thread>

namespace muse {

using nlohmann::json;

/// Shared POST-with-retry plumbing for the live adapters.
class HttpTransport {
 public:
  explicit HttpTransport(HttpConfig config) : config_(std::move(config)), in_flight_(kMaxSlots) {
    if (config_.max_in_flight == 0 || config_.max_in_flight > kMaxSlots)
      fail(ErrorCode::InvalidArgument, "max_in_flight must be in [1, 64]");
    if (config_.batch_limit == 0) fail(ErrorCode::InvalidArgument, "batch_limit must be >= 1");
    // Park the slots above the configured bound so the semaphore enforces it.
    for (std::size_t i = config_.max_in_flight; i < kMaxSlots; ++i) in_flight_.acquire();
    split_endpoint();
  }

  const HttpConfig& config() const { return config_; }
  std::size_t requests_sent() const { return requests_.load(); }

  json post(const json& body) const {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<kMaxSlots>& s;
      ~Release() { s.release(); }
    } release{in_flight_};

    const std::string payload = body.dump();
    std::string last_error;
    auto backoff = config_.initial_backoff;
    for (int attempt = 0; attempt < config_.attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, config_.max_backoff);
      }
      httplib::Client client(base_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      httplib::Headers headers;
      if (config_.api_key) headers.emplace("Authorization", "Bearer " + *config_.api_key);
      ++requests_;
      auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403)
        fail(ErrorCode::AuthFailure, config_.endpoint + " returned " + std::to_string(res->status));
      if (res->status >= 500 || res->status == 429) {
        last_error = "status " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300)
        fail(ErrorCode::ProviderUnavailable, config_.endpoint + " rejected request: status " + std::to_string(res->status));
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        fail(ErrorCode::ProviderMalformedResponse, config_.endpoint + ": " + e.what());
      }
    }
    fail(ErrorCode::ProviderUnavailable,
         config_.endpoint + " failed after " + std::to_string(config_.attempts) + " attempts (" + last_error + ")");
  }

 private:
  static constexpr std::ptrdiff_t kMaxSlots = 64;

  void split_endpoint() {
    const auto scheme = config_.endpoint.find("://");
    if (scheme == std::string::npos) fail(ErrorCode::InvalidArgument, "endpoint needs a scheme: " + config_.endpoint);
    const auto slash = config_.endpoint.find('/', scheme + 3);
    base_ = config_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
  }

  HttpConfig config_;
  std::string base_;
  std::string path_;
  mutable std::counting_semaphore<kMaxSlots> in_flight_;
  mutable std::atomic<std::size_t> requests_{0};
};

namespace {

template <typename T, typename Fn>
void for_each_batch(std::span<const T> items, std::size_t limit, Fn&& fn) {
  for (std::size_t start = 0; start < items.size(); start += limit)
    fn(items.subspan(start, std::min(limit, items.size() - start)));
}

std::vector<double> read_unit_interval(const json& reply, const char* key, std::size_t expected,
                                       const std::string& endpoint) {
  auto it = reply.find(key);
  if (it == reply.end() || !it->is_array() || it->size() != expected)
    fail(ErrorCode::ProviderMalformedResponse, endpoint + ": expected '" + key + "' with " +
                                                   std::to_string(expected) + " entries");
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& s : *it) {
    if (!s.is_number()) fail(ErrorCode::ProviderMalformedResponse, endpoint + ": non-numeric score");
    const double v = s.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::ProviderMalformedResponse, endpoint + ": score outside [0,1]");
    out.push_back(v);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpConfig config, std::size_t dim)
    : transport_(std::make_unique<HttpTransport>(std::move(config))), dim_(dim) {
  if (dim < 2) fail(ErrorCode::InvalidArgument, "embedding dim must be >= 2");
}
HttpEmbeddingProvider::~HttpEmbeddingProvider() = default;
std::size_t HttpEmbeddingProvider::requests_sent() const { return transport_->requests_sent(); }

std::vector<Vector> HttpEmbeddingProvider::embed(std::span<const std::string> texts) const {
  for (const auto& t : texts)
    if (t.empty()) fail(ErrorCode::EmptyText, "cannot embed empty text");
  const auto& endpoint = transport_->config().endpoint;
  std::vector<Vector> out;
  out.reserve(texts.size());
  for_each_batch(texts, transport_->config().batch_limit, [&](std::span<const std::string> batch) {
    const json reply = transport_->post({{"texts", std::vector<std::string>(batch.begin(), batch.end())}});
    auto it = reply.find("vectors");
    if (it == reply.end() || !it->is_array() || it->size() != batch.size())
      fail(ErrorCode::ProviderMalformedResponse, endpoint + ": expected " + std::to_string(batch.size()) + " vectors");
    for (const auto& v : *it) {
      if (!v.is_array() || v.size() != dim_)
        fail(ErrorCode::ProviderMalformedResponse,
             endpoint + ": vector length " + std::to_string(v.is_array() ? v.size() : 0) + ", expected " +
                 std::to_string(dim_));
      std::vector<double> comps;
      comps.reserve(dim_);
      for (const auto& c : v) {
        if (!c.is_number()) fail(ErrorCode::ProviderMalformedResponse, endpoint + ": non-numeric component");
        comps.push_back(c.get<double>());
      }
      try {
        out.push_back(Vector::normalize(std::move(comps)));
      } catch (const Error&) {
        fail(ErrorCode::ProviderMalformedResponse, endpoint + ": zero or non-finite vector");
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

HttpEntailmentProvider::HttpEntailmentProvider(HttpConfig config)
    : transport_(std::make_unique<HttpTransport>(std::move(config))) {}
HttpEntailmentProvider::~HttpEntailmentProvider() = default;
std::size_t HttpEntailmentProvider::requests_sent() const { return transport_->requests_sent(); }

std::vector<double> HttpEntailmentProvider::score_batch(std::span<const EntailmentPair> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for_each_batch(pairs, transport_->config().batch_limit, [&](std::span<const EntailmentPair> batch) {
    json body = json::array();
    for (const auto& p : batch) body.push_back({{"premise", p.premise}, {"hypothesis", p.hypothesis}});
    const json reply = transport_->post({{"pairs", std::move(body)}});
    auto scores = read_unit_interval(reply, "scores", batch.size(), transport_->config().endpoint);
    out.insert(out.end(), scores.begin(), scores.end());
  });
  return out;
}

// ---------------------------------------------------------------------------

HttpCompletionProvider::HttpCompletionProvider(HttpConfig config, std::optional<std::filesystem::path> audit_path)
    : transport_(std::make_unique<HttpTransport>(std::move(config))), audit_path_(std::move(audit_path)) {}
HttpCompletionProvider::~HttpCompletionProvider() = default;
std::size_t HttpCompletionProvider::requests_sent() const { return transport_->requests_sent(); }

std::string HttpCompletionProvider::complete(const CompletionRequest& request) const {
  const json reply = transport_->post(
      {{"prompt", request.prompt}, {"max_tokens", request.max_tokens}, {"temperature", request.temperature}});
  auto it = reply.find("text");
  if (it == reply.end() || !it->is_string())
    fail(ErrorCode::ProviderMalformedResponse, transport_->config().endpoint + ": missing 'text'");
  std::string text = it->get<std::string>();
  std::lock_guard lock(audit_mutex_);
  audit_.push_back({request.prompt, text});
  if (audit_path_) {
    std::ofstream out(*audit_path_, std::ios::app);
    out << json{{"prompt", request.prompt}, {"response", text}}.dump() << '\n';
  }
  return text;
}

std::vector<AuditRecord> HttpCompletionProvider::audit_log() const {
  std::lock_guard lock(audit_mutex_);
  return audit_;
}

// ---------------------------------------------------------------------------

HttpMechanismClassifier::HttpMechanismClassifier(HttpConfig config)
    : transport_(std::make_unique<HttpTransport>(std::move(config))) {}
HttpMechanismClassifier::~HttpMechanismClassifier() = default;
std::size_t HttpMechanismClassifier::requests_sent() const { return transport_->requests_sent(); }

std::vector<double> HttpMechanismClassifier::score_batch(std::span<const std::string> titles) const {
  std::vector<double> out;
  out.reserve(titles.size());
  for_each_batch(titles, transport_->config().batch_limit, [&](std::span<const std::string> batch) {
    const json reply = transport_->post({{"titles", std::vector<std::string>(batch.begin(), batch.end())}});
    auto scores = read_unit_interval(reply, "scores", batch.size(), transport_->config().endpoint);
    out.insert(out.end(), scores.begin(), scores.end());
  });
  return out;
}

}  // namespace muse
