#include "muse/providers.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <sstream>

namespace muse {

using nlohmann::json;

Vector EmbeddingProvider::embed_one(const std::string& text) const {
  auto v = embed(std::span<const std::string>(&text, 1));
  return std::move(v.front());
}

double EntailmentProvider::score(const std::string& premise, const std::string& hypothesis) const {
  const EntailmentPair pair{premise, hypothesis};
  return score_batch(std::span<const EntailmentPair>(&pair, 1)).front();
}

double MechanismClassifier::score(const std::string& title) const {
  return score_batch(std::span<const std::string>(&title, 1)).front();
}

// ---------------------------------------------------------------------------

FakeEmbeddingProvider::FakeEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 2) fail(ErrorCode::InvalidArgument, "embedding dim must be >= 2");
}

std::vector<Vector> FakeEmbeddingProvider::embed(std::span<const std::string> texts) const {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const std::string trimmed = text::trim(t);
    if (trimmed.empty()) fail(ErrorCode::EmptyText, "cannot embed empty text");
    auto tokens = text::content_tokens(trimmed);
    if (tokens.empty()) tokens = text::alpha_tokens(trimmed);
    if (tokens.empty()) tokens.push_back(text::to_lower(trimmed));
    std::vector<double> acc(dim_, 0.0);
    for (const auto& tok : tokens) {
      const std::uint64_t h = text::fnv1a64(text::light_stem(tok), seed_);
      acc[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    bool zero = true;
    for (double a : acc) zero = zero && a == 0.0;
    if (zero) acc[text::fnv1a64(trimmed, seed_) % dim_] = 1.0;
    out.push_back(Vector::normalize(std::move(acc)));
  }
  return out;
}

std::vector<double> FakeEntailmentProvider::score_batch(std::span<const EntailmentPair> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (text::trim(p.premise).empty() || text::trim(p.hypothesis).empty())
      fail(ErrorCode::EmptyText, "entailment needs non-empty premise and hypothesis");
    auto hyp = text::content_tokens(p.hypothesis);
    auto prem = text::content_tokens(p.premise);
    std::sort(hyp.begin(), hyp.end());
    hyp.erase(std::unique(hyp.begin(), hyp.end()), hyp.end());
    std::sort(prem.begin(), prem.end());
    prem.erase(std::unique(prem.begin(), prem.end()), prem.end());
    if (hyp.empty()) {
      out.push_back(1.0);  // nothing left to entail
      continue;
    }
    std::vector<std::string> common;
    std::set_intersection(hyp.begin(), hyp.end(), prem.begin(), prem.end(), std::back_inserter(common));
    out.push_back(static_cast<double>(common.size()) / static_cast<double>(hyp.size()));
  }
  return out;
}

std::string FakeCompletionProvider::complete(const CompletionRequest& request) const {
  if (text::trim(request.prompt).empty()) fail(ErrorCode::EmptyText, "empty prompt");
  std::istringstream in(request.prompt);
  std::string line;
  std::string first_of_block;
  bool in_block = false;
  while (std::getline(in, line)) {
    const std::string t = text::trim(line);
    if (t.empty()) {
      in_block = false;
    } else if (!in_block) {
      in_block = true;
      first_of_block = t;
    }
  }
  return "ABSTRACT: " + first_of_block;
}

namespace {
constexpr std::array<std::string_view, 5> kMechanismKeywords = {"apparatus", "device", "mechanism", "system",
                                                                "means"};
}

std::span<const std::string_view> KeywordMechanismClassifier::keywords() { return kMechanismKeywords; }

std::vector<double> KeywordMechanismClassifier::score_batch(std::span<const std::string> titles) const {
  std::vector<double> out;
  out.reserve(titles.size());
  for (const auto& t : titles) {
    const std::string lower = text::to_lower(t);
    bool hit = false;
    for (auto k : kMechanismKeywords) hit = hit || lower.find(k) != std::string::npos;
    out.push_back(hit ? 1.0 : 0.0);
  }
  return out;
}

LabeledMechanismClassifier::LabeledMechanismClassifier(std::map<std::string, double> labels)
    : labels_(std::move(labels)) {}

LabeledMechanismClassifier LabeledMechanismClassifier::load(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::map<std::string, double> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no));
    const std::string value = text::trim(line.substr(tab + 1));
    double score = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), score);
    if (ec != std::errc{} || score < 0.0 || score > 1.0)
      fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": bad score");
    labels[text::to_lower(text::trim(line.substr(0, tab)))] = score;
  }
  return LabeledMechanismClassifier(std::move(labels));
}

std::vector<double> LabeledMechanismClassifier::score_batch(std::span<const std::string> titles) const {
  std::vector<double> out;
  out.reserve(titles.size());
  for (const auto& t : titles) {
    auto it = labels_.find(text::to_lower(text::trim(t)));
    out.push_back(it != labels_.end() ? it->second : fallback_.score(t));
  }
  return out;
}

// ---------------------------------------------------------------------------

CachingEmbeddingProvider::CachingEmbeddingProvider(std::shared_ptr<const EmbeddingProvider> inner)
    : inner_(std::move(inner)) {}

std::vector<Vector> CachingEmbeddingProvider::embed(std::span<const std::string> texts) const {
  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    for (const auto& t : texts)
      if (!cache_.contains(t)) missing.push_back(t);
  }
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  if (!missing.empty()) {
    auto fresh = inner_->embed(missing);
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(fresh[i]));
  }
  std::lock_guard lock(mutex_);
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(cache_.at(t));
  return out;
}

std::size_t CachingEmbeddingProvider::cached() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

void CachingEmbeddingProvider::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  json j;
  try {
    j = json::parse(detail::read_file(path));
    if (j.at("dim").get<std::size_t>() != inner_->dim())
      fail(ErrorCode::DimMismatch, "embedding cache " + path.string());
    std::lock_guard lock(mutex_);
    for (const auto& [text, vec] : j.at("vectors").items())
      cache_.insert_or_assign(text, Vector::from_unit(vec.get<std::vector<double>>()));
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

void CachingEmbeddingProvider::save(const std::filesystem::path& path) const {
  json vectors = json::object();
  {
    std::lock_guard lock(mutex_);
    for (const auto& [text, v] : cache_)
      vectors[text] = std::vector<double>(v.components().begin(), v.components().end());
  }
  json j = {{"dim", inner_->dim()}, {"vectors", std::move(vectors)}};
  detail::write_file(path, j.dump() + "\n");
}

// ---------------------------------------------------------------------------

ProviderMode parse_provider_mode(std::string_view s) {
  if (s == "fake") return ProviderMode::Fake;
  if (s == "live") return ProviderMode::Live;
  fail(ErrorCode::InvalidArgument, "provider mode must be live or fake, got '" + std::string(s) + "'");
}

ProviderOptions provider_options_from_env() {
  ProviderOptions o;
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  if (auto mode = env("MUSE_PROVIDER_MODE"); !mode.empty()) o.mode = parse_provider_mode(mode);
  o.embed_endpoint = env("MUSE_EMBED_ENDPOINT");
  o.nli_endpoint = env("MUSE_NLI_ENDPOINT");
  o.llm_endpoint = env("MUSE_LLM_ENDPOINT");
  o.cls_endpoint = env("MUSE_CLS_ENDPOINT");
  if (auto key = env("MUSE_API_KEY"); !key.empty()) o.api_key = key;
  if (auto dim = env("MUSE_EMBED_DIM"); !dim.empty()) o.embed_dim = std::stoul(dim);
  return o;
}

ProviderSet make_providers(const ProviderOptions& options) {
  ProviderSet set;
  if (options.mode == ProviderMode::Fake) {
    set.embedder = std::make_shared<CachingEmbeddingProvider>(
        std::make_shared<FakeEmbeddingProvider>(options.fake_dim, options.fake_seed));
    set.entailment = std::make_shared<FakeEntailmentProvider>();
    set.completion = std::make_shared<FakeCompletionProvider>();
  } else {
    auto config = [&](const std::string& endpoint, const char* var) {
      if (endpoint.empty()) fail(ErrorCode::InvalidArgument, std::string(var) + " is not set");
      HttpConfig c;
      c.endpoint = endpoint;
      c.api_key = options.api_key;
      return c;
    };
    set.embedder = std::make_shared<CachingEmbeddingProvider>(std::make_shared<HttpEmbeddingProvider>(
        config(options.embed_endpoint, "MUSE_EMBED_ENDPOINT"), options.embed_dim));
    set.entailment = std::make_shared<HttpEntailmentProvider>(config(options.nli_endpoint, "MUSE_NLI_ENDPOINT"));
    set.completion =
        std::make_shared<HttpCompletionProvider>(config(options.llm_endpoint, "MUSE_LLM_ENDPOINT"), options.audit_path);
  }
  if (options.classifier_labels) {
    set.classifier =
        std::make_shared<LabeledMechanismClassifier>(LabeledMechanismClassifier::load(*options.classifier_labels));
  } else if (options.mode == ProviderMode::Live && !options.cls_endpoint.empty()) {
    HttpConfig c;
    c.endpoint = options.cls_endpoint;
    c.api_key = options.api_key;
    set.classifier = std::make_shared<HttpMechanismClassifier>(c);
  } else {
    set.classifier = std::make_shared<KeywordMechanismClassifier>();
  }
  return set;
}

}  // namespace muse
