#include "muse/service.hpp"

#include "muse/error.hpp"
#include "muse/log.hpp"
#include "muse/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

namespace muse {

using nlohmann::json;

std::optional<Relation> parse_relation(std::string_view s) {
  if (s == "parents") return Relation::Parents;
  if (s == "children") return Relation::Children;
  if (s == "solutions") return Relation::Solutions;
  return std::nullopt;
}

std::vector<std::string> navigate(const Fcg& graph, const std::string& id, Relation relation) {
  graph.node(id);
  std::set<std::string> out;
  if (relation == Relation::Children) {
    for (const auto& key : graph.in_edges(id))
      if (is_abstraction(key.kind)) out.insert(key.src);
  } else {
    for (const auto& key : graph.out_edges(id))
      if (is_abstraction(key.kind) == (relation == Relation::Parents)) out.insert(key.dst);
  }
  return {out.begin(), out.end()};
}

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

HttpError to_http(const Error& e) {
  switch (e.code()) {
    case ErrorCode::UnknownNode: return {404, "unknown_node", e.what()};
    case ErrorCode::EmptyText: return {400, "empty_text", e.what()};
    case ErrorCode::InvalidArgument: return {400, "bad_request", e.what()};
    case ErrorCode::NoAnchor: return {422, "no_anchor", e.what()};
    case ErrorCode::AuthFailure: return {502, "provider_auth_failure", e.what()};
    case ErrorCode::ProviderMalformedResponse: return {502, "provider_malformed_response", e.what()};
    case ErrorCode::ProviderUnavailable: return {503, "provider_unavailable", e.what()};
    case ErrorCode::EmptyCompletion:
    case ErrorCode::UnparseableCompletion: return {502, "provider_bad_completion", e.what()};
    default: return {500, "internal", e.what()};
  }
}

json node_summary(const FcgNode& n) { return {{"id", n.id}, {"kind", to_string(n.kind)}, {"label", n.label}}; }

json node_detail(const FcgNode& n) {
  json j = node_summary(n);
  j["members"] = n.members;
  j["loose_cluster_id"] = n.loose_cluster_id ? json(*n.loose_cluster_id) : json(nullptr);
  return j;
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  ProviderSet providers;
  mutable std::mutex snapshot_mutex;
  std::shared_ptr<const Snapshot> current;
  httplib::Server server;
  std::thread worker;
  std::atomic<std::uint64_t> request_counter{0};
  std::uint64_t instance_salt = 0;
  int port = -1;

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snapshot_mutex);
    return current;
  }

  void check(const Snapshot& s) const {
    if (s.index.dim() != providers.embedder->dim())
      fail(ErrorCode::SnapshotCorrupt, "index dimension " + std::to_string(s.index.dim()) +
                                           " does not match the embedder (" +
                                           std::to_string(providers.embedder->dim()) + ")");
  }

  std::string request_id(const httplib::Request& req) {
    if (req.has_header("X-Request-Id")) {
      std::string id = req.get_header_value("X-Request-Id");
      if (!id.empty() && id.size() <= 128) return id;
    }
    const std::uint64_t n = ++request_counter;
    return "req-" + text::hex64(text::fnv1a64(std::to_string(n), instance_salt));
  }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
  }

  static void send_error(httplib::Response& res, const HttpError& e, const std::string& rid) {
    send_json(res, e.status, {{"error", {{"code", e.code}, {"message", e.message}, {"request_id", rid}}}});
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      const std::string rid = request_id(req);
      res.set_header("X-Request-Id", rid);
      try {
        fn(req, res, rid);
      } catch (const Error& e) {
        const auto h = to_http(e);
        if (h.status >= 500) log_warning("request " + rid + " failed: " + e.what());
        send_error(res, h, rid);
      } catch (const json::exception& e) {
        send_error(res, {400, "bad_request", e.what()}, rid);
      } catch (const std::exception& e) {
        log_warning("request " + rid + " failed: " + e.what());
        send_error(res, {500, "internal", e.what()}, rid);
      }
    };
  }

  void routes() {
    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res, const std::string&) {
      const auto s = snapshot();
      send_json(res, 200, {{"status", "ok"}, {"nodes", s->graph.nodes().size()}, {"edges", s->graph.edges().size()}});
    }));

    server.Get(R"(/nodes/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res, const std::string&) {
                 const auto s = snapshot();
                 send_json(res, 200, node_detail(s->graph.node(req.matches[1])));
               }));

    server.Get(R"(/nodes/([^/]+)/(parents|children|solutions))",
               guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& rid) {
                 const auto s = snapshot();
                 const std::string id = req.matches[1];
                 const auto relation = *parse_relation(std::string(req.matches[2]));
                 std::size_t offset = 0;
                 if (req.has_param("offset")) {
                   const std::string v = req.get_param_value("offset");
                   if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos || v.size() > 9)
                     return send_error(res, {400, "bad_request", "offset must be a non-negative integer"}, rid);
                   offset = std::stoul(v);
                 }
                 const auto all = navigate(s->graph, id, relation);
                 json items = json::array();
                 for (std::size_t i = offset; i < all.size() && i < offset + kPageSize; ++i)
                   items.push_back(node_summary(s->graph.node(all[i])));
                 send_json(res, 200,
                           {{"node", id},
                            {"relation", std::string(req.matches[2])},
                            {"offset", offset},
                            {"total", all.size()},
                            {"items", std::move(items)}});
               }));

    server.Get("/search", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& rid) {
      const auto s = snapshot();
      if (!req.has_param("q")) return send_error(res, {400, "bad_request", "missing q"}, rid);
      const std::string q = req.get_param_value("q");
      std::size_t k = 10;
      if (req.has_param("k")) {
        const std::string v = req.get_param_value("k");
        if (v.empty() || v.size() > 3 || v.find_first_not_of("0123456789") != std::string::npos || std::stoul(v) == 0 ||
            std::stoul(v) > 100)
          return send_error(res, {400, "bad_request", "k must be an integer in [1, 100]"}, rid);
        k = std::stoul(v);
      }
      if (text::trim(q).empty()) fail(ErrorCode::EmptyText, "q is empty");
      json results = json::array();
      for (const auto& n : s->index.nearest(providers.embedder->embed_one(q), k))
        results.push_back({{"id", n.id}, {"label", s->graph.node(n.id).label}, {"score", n.score}});
      send_json(res, 200, {{"query", q}, {"results", std::move(results)}});
    }));

    server.Post("/inspire", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& rid) {
      const auto s = snapshot();
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception&) {
        return send_error(res, {400, "bad_request", "body is not valid JSON"}, rid);
      }
      if (!body.is_object()) return send_error(res, {400, "bad_request", "body must be an object"}, rid);
      if (!body.contains("problem") || !body["problem"].is_string())
        return send_error(res, {400, "bad_request", "problem must be a string"}, rid);
      SampleConfig cfg;
      cfg.threads = config.render_threads;
      const auto condition =
          body.contains("condition") && body["condition"].is_string()
              ? parse_condition(body["condition"].get<std::string>())
              : std::nullopt;
      if (!condition)
        return send_error(res,
                          {400, "bad_condition", "condition must be purpose, purpose-mech or purpose-mech-sentence"},
                          rid);
      cfg.condition = *condition;
      if (body.contains("lambda")) {
        if (!body["lambda"].is_number() || body["lambda"].get<double>() < 0.0 || body["lambda"].get<double>() > 1.0)
          return send_error(res, {400, "bad_request", "lambda must be a number in [0, 1]"}, rid);
        cfg.lambda = body["lambda"].get<double>();
      }
      if (body.contains("per_bucket")) {
        if (!body["per_bucket"].is_number_integer() || body["per_bucket"].get<long long>() < 1 ||
            body["per_bucket"].get<long long>() > static_cast<long long>(kDefaultPerBucket))
          return send_error(res, {400, "bad_request", "per_bucket must be an integer in [1, 5]"}, rid);
        cfg.per_bucket = body["per_bucket"].get<std::size_t>();
      }
      const auto result = sample_inspirations(s->graph, s->index, *providers.embedder, body["problem"].get<std::string>(),
                                              cfg, providers.completion.get());
      res.status = 200;
      res.set_content(inspirations_to_json(result, cfg), "application/json");
    }));

    // httplib defaults to SO_REUSEPORT, which would let two services share a port silently.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });

    server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      const std::string rid = res.has_header("X-Request-Id") ? res.get_header_value("X-Request-Id") : request_id(req);
      res.set_header("X-Request-Id", rid);
      const int status = res.status;
      send_error(res, {status, status == 404 ? "not_found" : "bad_request", "no route for " + req.method + " " + req.path},
                 rid);
    });
  }
};

Service::Service(std::shared_ptr<const Snapshot> snapshot, ProviderSet providers, ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
  if (!snapshot) fail(ErrorCode::SnapshotCorrupt, "no snapshot");
  impl_->config = std::move(config);
  impl_->providers = std::move(providers);
  impl_->check(*snapshot);
  impl_->current = std::move(snapshot);
  impl_->instance_salt = static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->port >= 0) return impl_->port;
  const auto& cfg = impl_->config;
  int port = -1;
  if (cfg.port == 0) {
    port = impl_->server.bind_to_any_port(cfg.host);
  } else if (impl_->server.bind_to_port(cfg.host, cfg.port)) {
    port = cfg.port;
  }
  if (port < 0) fail(ErrorCode::BindFailure, cfg.host + ":" + std::to_string(cfg.port));
  impl_->port = port;
  return port;
}

void Service::run() {
  bind();
  impl_->server.listen_after_bind();
}

int Service::start() {
  const int port = bind();
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

void Service::swap(std::shared_ptr<const Snapshot> snapshot) {
  if (!snapshot) fail(ErrorCode::SnapshotCorrupt, "no snapshot");
  impl_->check(*snapshot);
  std::lock_guard lock(impl_->snapshot_mutex);
  impl_->current = std::move(snapshot);
}

void Service::reload(const std::filesystem::path& dir) {
  swap(std::make_shared<const Snapshot>(load_snapshot(dir)));
  log_info("snapshot reloaded from " + dir.string());
}

std::shared_ptr<const Snapshot> Service::snapshot() const { return impl_->snapshot(); }

}  // namespace muse
