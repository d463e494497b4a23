#include "muse/providers.hpp"

#include "expect_error.hpp"
#include "stubs.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <atomic>

using namespace muse;
using nlohmann::json;

namespace {

HttpConfig fast_config(const std::string& url) {
  HttpConfig c;
  c.endpoint = url;
  c.initial_backoff = std::chrono::milliseconds(1);
  c.max_backoff = std::chrono::milliseconds(4);
  c.timeout = std::chrono::seconds(5);
  return c;
}

json unit_vectors(const json& texts, std::size_t dim) {
  json out = json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::vector<double> v(dim, 0.0);
    v[i % dim] = 2.0;
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(HttpEmbedding, TwoTransientFailuresThenSuccessTakesThreeAttempts) {
  stub::Server server;
  std::atomic<int> hits{0};
  server.http().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits <= 2) {
      res.status = 503;
      return;
    }
    const auto body = json::parse(req.body);
    res.set_content(json{{"vectors", unit_vectors(body.at("texts"), 4)}}.dump(), "application/json");
  });
  server.start();
  HttpEmbeddingProvider p(fast_config(server.url("/embed")), 4);
  const auto v = p.embed_one("cool a room");
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(p.requests_sent(), 3u);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
}

TEST(HttpEmbedding, PersistentFailureExhaustsAttempts) {
  stub::Server server;
  std::atomic<int> hits{0};
  server.http().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  server.start();
  HttpEmbeddingProvider p(fast_config(server.url("/embed")), 4);
  EXPECT_MUSE_ERROR(p.embed_one("x"), ErrorCode::ProviderUnavailable);
  EXPECT_EQ(hits.load(), 3);
}

TEST(HttpEmbedding, WrongVectorLengthIsMalformed) {
  stub::Server server;
  server.http().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    res.set_content(json{{"vectors", unit_vectors(body.at("texts"), 3)}}.dump(), "application/json");
  });
  server.start();
  HttpEmbeddingProvider p(fast_config(server.url("/embed")), 4);
  EXPECT_MUSE_ERROR(p.embed_one("x"), ErrorCode::ProviderMalformedResponse);
}

TEST(HttpEmbedding, WrongVectorCountAndGarbageAreMalformed) {
  stub::Server server;
  server.http().Post("/count", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors": []})", "application/json");
  });
  server.http().Post("/garbage", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  server.http().Post("/zero", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors": [[0, 0]]})", "application/json");
  });
  server.start();
  EXPECT_MUSE_ERROR(HttpEmbeddingProvider(fast_config(server.url("/count")), 2).embed_one("x"),
                    ErrorCode::ProviderMalformedResponse);
  EXPECT_MUSE_ERROR(HttpEmbeddingProvider(fast_config(server.url("/garbage")), 2).embed_one("x"),
                    ErrorCode::ProviderMalformedResponse);
  EXPECT_MUSE_ERROR(HttpEmbeddingProvider(fast_config(server.url("/zero")), 2).embed_one("x"),
                    ErrorCode::ProviderMalformedResponse);
}

TEST(HttpEmbedding, UnauthorizedIsNotRetried) {
  stub::Server server;
  std::atomic<int> hits{0};
  std::string auth;
  server.http().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    auth = req.get_header_value("Authorization");
    res.status = 401;
  });
  server.start();
  auto cfg = fast_config(server.url("/embed"));
  cfg.api_key = "secret";
  HttpEmbeddingProvider p(cfg, 4);
  EXPECT_MUSE_ERROR(p.embed_one("x"), ErrorCode::AuthFailure);
  EXPECT_EQ(hits.load(), 1);
  EXPECT_EQ(auth, "Bearer secret");
}

TEST(HttpEmbedding, ClientErrorIsNotRetried) {
  stub::Server server;
  std::atomic<int> hits{0};
  server.http().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
  });
  server.start();
  HttpEmbeddingProvider p(fast_config(server.url("/embed")), 4);
  EXPECT_MUSE_ERROR(p.embed_one("x"), ErrorCode::ProviderUnavailable);
  EXPECT_EQ(hits.load(), 1);
}

TEST(HttpEmbedding, UnreachableHostIsUnavailable) {
  int port;
  {
    stub::Server server;
    port = server.start();
  }
  auto cfg = fast_config("http://127.0.0.1:" + std::to_string(port) + "/embed");
  cfg.timeout = std::chrono::seconds(1);
  HttpEmbeddingProvider p(cfg, 4);
  EXPECT_MUSE_ERROR(p.embed_one("x"), ErrorCode::ProviderUnavailable);
  EXPECT_EQ(p.requests_sent(), 3u);
}

TEST(HttpEmbedding, BatchesRespectLimit) {
  stub::Server server;
  std::atomic<int> hits{0};
  std::atomic<std::size_t> largest{0};
  server.http().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto body = json::parse(req.body);
    largest = std::max<std::size_t>(largest.load(), body.at("texts").size());
    res.set_content(json{{"vectors", unit_vectors(body.at("texts"), 4)}}.dump(), "application/json");
  });
  server.start();
  auto cfg = fast_config(server.url("/embed"));
  cfg.batch_limit = 3;
  HttpEmbeddingProvider p(cfg, 4);
  const std::vector<std::string> texts = {"a", "b", "c", "d", "e", "f", "g"};
  const auto out = p.embed(texts);
  EXPECT_EQ(out.size(), 7u);
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(largest.load(), 3u);
}

TEST(HttpEmbedding, InvalidConfigRejected) {
  auto cfg = fast_config("http://127.0.0.1:1/embed");
  cfg.max_in_flight = 0;
  EXPECT_MUSE_ERROR(HttpEmbeddingProvider(cfg, 4), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(HttpEmbeddingProvider(fast_config("127.0.0.1/embed"), 4), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(HttpEmbeddingProvider(fast_config("http://127.0.0.1:1/embed"), 1), ErrorCode::InvalidArgument);
}

TEST(HttpEntailment, ParsesScoresAndRejectsOutOfRange) {
  stub::Server server;
  server.http().Post("/nli", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json scores = json::array();
    for (const auto& p : body.at("pairs"))
      scores.push_back(p.at("premise") == p.at("hypothesis") ? 1.0 : 0.25);
    res.set_content(json{{"scores", scores}}.dump(), "application/json");
  });
  server.http().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"scores": [1.5]})", "application/json");
  });
  server.start();
  HttpEntailmentProvider p(fast_config(server.url("/nli")));
  EXPECT_DOUBLE_EQ(p.score("a", "a"), 1.0);
  EXPECT_DOUBLE_EQ(p.score("a", "b"), 0.25);
  HttpEntailmentProvider bad(fast_config(server.url("/bad")));
  EXPECT_MUSE_ERROR(bad.score("a", "b"), ErrorCode::ProviderMalformedResponse);
}

TEST(HttpCompletion, RecordsAuditAndRequiresText) {
  stub::Server server;
  server.http().Post("/llm", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    res.set_content(json{{"text", "echo " + body.at("prompt").get<std::string>()}}.dump(), "application/json");
  });
  server.http().Post("/empty", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{}", "application/json");
  });
  server.start();
  const auto audit = std::filesystem::temp_directory_path() / "muse_http_audit.jsonl";
  std::filesystem::remove(audit);
  HttpCompletionProvider p(fast_config(server.url("/llm")), audit);
  CompletionRequest r;
  r.prompt = "hello";
  EXPECT_EQ(p.complete(r), "echo hello");
  ASSERT_EQ(p.audit_log().size(), 1u);
  EXPECT_EQ(p.audit_log()[0].response, "echo hello");
  EXPECT_TRUE(std::filesystem::exists(audit));

  HttpCompletionProvider empty(fast_config(server.url("/empty")));
  EXPECT_MUSE_ERROR(empty.complete(r), ErrorCode::ProviderMalformedResponse);
}

TEST(HttpClassifier, ScoresTitles) {
  stub::Server server;
  server.http().Post("/cls", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json scores = json::array();
    for (const auto& t : body.at("titles")) scores.push_back(t.get<std::string>().size() > 5 ? 1.0 : 0.0);
    res.set_content(json{{"scores", scores}}.dump(), "application/json");
  });
  server.start();
  HttpMechanismClassifier c(fast_config(server.url("/cls")));
  EXPECT_DOUBLE_EQ(c.score("Air-humidification"), 1.0);
  EXPECT_DOUBLE_EQ(c.score("abc"), 0.0);
}
