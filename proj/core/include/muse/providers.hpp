#pragma once

#include "muse/vectors.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace muse {

// ---------------------------------------------------------------------------
// Contracts. All implementations must be callable concurrently.
// ---------------------------------------------------------------------------

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  /// One unit vector of length dim() per text. Throws EmptyText on "".
  virtual std::vector<Vector> embed(std::span<const std::string> texts) const = 0;

  Vector embed_one(const std::string& text) const;
};

struct EntailmentPair {
  std::string premise;
  std::string hypothesis;
};

class EntailmentProvider {
 public:
  virtual ~EntailmentProvider() = default;
  /// Scores in [0, 1], one per pair.
  virtual std::vector<double> score_batch(std::span<const EntailmentPair> pairs) const = 0;

  double score(const std::string& premise, const std::string& hypothesis) const;
};

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 128;
  double temperature = 0.0;
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const CompletionRequest& request) const = 0;
};

class MechanismClassifier {
 public:
  virtual ~MechanismClassifier() = default;
  /// Mechanism-relatedness in [0, 1] for each title span.
  virtual std::vector<double> score_batch(std::span<const std::string> titles) const = 0;

  double score(const std::string& title) const;
};

// ---------------------------------------------------------------------------
// Deterministic fakes
// ---------------------------------------------------------------------------

/// Signed feature hashing of stemmed content tokens into `dim` buckets.
/// Texts made only of stop words fall back to hashing all their tokens, and
/// texts with no letters at all hash the whole string.
class FakeEmbeddingProvider final : public EmbeddingProvider {
 public:
  FakeEmbeddingProvider(std::size_t dim, std::uint64_t seed);
  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Token-overlap entailment: |content(h) & content(p)| / |content(h)|.
class FakeEntailmentProvider final : public EntailmentProvider {
 public:
  std::vector<double> score_batch(std::span<const EntailmentPair> pairs) const override;
};

/// Echoes the first line of the prompt's final blank-line separated block,
/// prefixed with "ABSTRACT: ".
class FakeCompletionProvider final : public CompletionProvider {
 public:
  std::string complete(const CompletionRequest& request) const override;
};

/// 1.0 when the title contains one of the mechanism keywords, else 0.0.
class KeywordMechanismClassifier final : public MechanismClassifier {
 public:
  static std::span<const std::string_view> keywords();
  std::vector<double> score_batch(std::span<const std::string> titles) const override;
};

/// Looks spans up in a table of hand labels (lowercased span -> score) and
/// defers to the keyword classifier for unlabeled spans.
class LabeledMechanismClassifier final : public MechanismClassifier {
 public:
  explicit LabeledMechanismClassifier(std::map<std::string, double> labels);
  /// TSV rows "span<TAB>score".
  static LabeledMechanismClassifier load(const std::filesystem::path& path);
  std::vector<double> score_batch(std::span<const std::string> titles) const override;

 private:
  std::map<std::string, double> labels_;
  KeywordMechanismClassifier fallback_;
};

/// Memoizes embeddings by exact text; optionally persisted to a JSON file.
class CachingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit CachingEmbeddingProvider(std::shared_ptr<const EmbeddingProvider> inner);
  std::size_t dim() const override { return inner_->dim(); }
  std::vector<Vector> embed(std::span<const std::string> texts) const override;

  std::size_t cached() const;
  void load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, Vector> cache_;
};

// ---------------------------------------------------------------------------
// Live HTTP adapters
// ---------------------------------------------------------------------------

struct HttpConfig {
  std::string endpoint;  // http(s)://host[:port]/path
  std::optional<std::string> api_key;
  std::size_t batch_limit = 32;
  std::size_t max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds max_backoff{2000};
  std::chrono::seconds timeout{60};
};

class HttpTransport;

struct AuditRecord {
  std::string prompt;
  std::string response;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(HttpConfig config, std::size_t dim);
  ~HttpEmbeddingProvider() override;
  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed(std::span<const std::string> texts) const override;
  /// HTTP requests issued so far, retries included.
  std::size_t requests_sent() const;

 private:
  std::unique_ptr<HttpTransport> transport_;
  std::size_t dim_;
};

class HttpEntailmentProvider final : public EntailmentProvider {
 public:
  explicit HttpEntailmentProvider(HttpConfig config);
  ~HttpEntailmentProvider() override;
  std::vector<double> score_batch(std::span<const EntailmentPair> pairs) const override;
  std::size_t requests_sent() const;

 private:
  std::unique_ptr<HttpTransport> transport_;
};

class HttpCompletionProvider final : public CompletionProvider {
 public:
  /// When audit_path is set every prompt/response pair is appended there as JSONL.
  explicit HttpCompletionProvider(HttpConfig config, std::optional<std::filesystem::path> audit_path = {});
  ~HttpCompletionProvider() override;
  std::string complete(const CompletionRequest& request) const override;
  std::size_t requests_sent() const;
  std::vector<AuditRecord> audit_log() const;

 private:
  std::unique_ptr<HttpTransport> transport_;
  std::optional<std::filesystem::path> audit_path_;
  mutable std::mutex audit_mutex_;
  mutable std::vector<AuditRecord> audit_;
};

class HttpMechanismClassifier final : public MechanismClassifier {
 public:
  explicit HttpMechanismClassifier(HttpConfig config);
  ~HttpMechanismClassifier() override;
  std::vector<double> score_batch(std::span<const std::string> titles) const override;
  std::size_t requests_sent() const;

 private:
  std::unique_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Wiring
// ---------------------------------------------------------------------------

enum class ProviderMode { Fake, Live };

ProviderMode parse_provider_mode(std::string_view s);

struct ProviderOptions {
  ProviderMode mode = ProviderMode::Fake;
  std::size_t fake_dim = 256;
  std::uint64_t fake_seed = 1;
  std::optional<std::filesystem::path> classifier_labels;
  // Live settings; normally filled from MUSE_* environment variables.
  std::string embed_endpoint, nli_endpoint, llm_endpoint, cls_endpoint;
  std::optional<std::string> api_key;
  std::size_t embed_dim = 384;
  std::optional<std::filesystem::path> audit_path;
};

/// Reads MUSE_PROVIDER_MODE, MUSE_EMBED_ENDPOINT, MUSE_NLI_ENDPOINT,
/// MUSE_LLM_ENDPOINT, MUSE_CLS_ENDPOINT, MUSE_API_KEY and MUSE_EMBED_DIM.
ProviderOptions provider_options_from_env();

struct ProviderSet {
  std::shared_ptr<CachingEmbeddingProvider> embedder;
  std::shared_ptr<const EntailmentProvider> entailment;
  std::shared_ptr<const CompletionProvider> completion;
  std::shared_ptr<const MechanismClassifier> classifier;
};

ProviderSet make_providers(const ProviderOptions& options);

}  // namespace muse
