#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace muse {

struct Document {
  std::string id;
  std::string title;
  std::string abstract;
  std::vector<std::string> cpc_ids;

  bool operator==(const Document&) const = default;
};

/// One row of the classification taxonomy.
struct CpcEntry {
  std::string id;
  std::string title;
  unsigned level = 0;
  char section = 'A';

  bool operator==(const CpcEntry&) const = default;
};

struct CorpusConfig {
  std::set<char> allowed_sections{'A', 'B', 'F'};
  std::optional<std::size_t> sample_size;  // unbounded when empty
  std::uint64_t seed = 0;
};

bool is_cpc_section(char c) noexcept;

/// Parses the JSONL corpus, keeps documents with at least one CPC id in an
/// allowed section (input order), then samples down to sample_size with a
/// seeded Fisher-Yates shuffle. Sampled documents keep their input order.
std::vector<Document> load_corpus(const std::filesystem::path& path, const CorpusConfig& config);
std::vector<Document> filter_and_sample(std::vector<Document> docs, const CorpusConfig& config);

void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs);

/// Tab-separated "id<TAB>level<TAB>title" rows.
std::vector<CpcEntry> load_cpc_taxonomy(const std::filesystem::path& path);
std::vector<CpcEntry> parse_cpc_taxonomy(const std::string& contents);
void save_cpc_taxonomy(const std::filesystem::path& path, const std::vector<CpcEntry>& entries);

/// Removes the entries sitting at the deepest level present.
std::vector<CpcEntry> drop_leaf_level(const std::vector<CpcEntry>& entries);

}  // namespace muse
