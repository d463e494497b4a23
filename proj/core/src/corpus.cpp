#include "muse/corpus.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"
#include "muse/rng.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <sstream>
#include <unordered_set>

namespace muse {

using nlohmann::json;

bool is_cpc_section(char c) noexcept { return (c >= 'A' && c <= 'H') || c == 'Y'; }

namespace {

std::string line_ref(std::size_t line_no) { return "line " + std::to_string(line_no); }

Document parse_document(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": not an object");
  auto need_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": field '" + key + "' missing or not a string");
    return it->get<std::string>();
  };
  Document d;
  d.id = need_string("id");
  d.title = need_string("title");
  d.abstract = need_string("abstract");
  if (d.id.empty()) fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": empty id");
  if (text::trim(d.title).empty()) fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": empty title");
  auto cpc = j.find("cpc_ids");
  if (cpc == j.end() || !cpc->is_array())
    fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": field 'cpc_ids' missing or not an array");
  for (const auto& c : *cpc) {
    if (!c.is_string()) fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": non-string cpc id");
    d.cpc_ids.push_back(c.get<std::string>());
  }
  return d;
}

bool in_sections(const Document& d, const std::set<char>& allowed) {
  return std::any_of(d.cpc_ids.begin(), d.cpc_ids.end(),
                     [&](const std::string& id) { return !id.empty() && allowed.contains(id.front()); });
}

}  // namespace

std::vector<Document> filter_and_sample(std::vector<Document> docs, const CorpusConfig& config) {
  if (config.sample_size && *config.sample_size == 0)
    fail(ErrorCode::InvalidArgument, "sample_size must be >= 1");
  std::unordered_set<std::string> seen;
  for (const auto& d : docs)
    if (!seen.insert(d.id).second) fail(ErrorCode::DuplicateId, d.id);

  std::erase_if(docs, [&](const Document& d) { return !in_sections(d, config.allowed_sections); });
  if (!config.sample_size || *config.sample_size >= docs.size()) return docs;

  // Partial Fisher-Yates over positions; the chosen prefix is re-sorted so the
  // sample keeps input order.
  std::vector<std::size_t> pos(docs.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  Rng rng(config.seed);
  const std::size_t k = *config.sample_size;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(pos.size() - i);
    std::swap(pos[i], pos[j]);
  }
  pos.resize(k);
  std::sort(pos.begin(), pos.end());
  std::vector<Document> out;
  out.reserve(k);
  for (auto p : pos) out.push_back(std::move(docs[p]));
  return out;
}

std::vector<Document> load_corpus(const std::filesystem::path& path, const CorpusConfig& config) {
  const std::string contents = detail::read_file(path);
  std::istringstream in(contents);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    docs.push_back(parse_document(line, line_no));
  }
  return filter_and_sample(std::move(docs), config);
}

void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    json j = {{"id", d.id}, {"title", d.title}, {"abstract", d.abstract}, {"cpc_ids", d.cpc_ids}};
    out += j.dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

std::vector<CpcEntry> parse_cpc_taxonomy(const std::string& contents) {
  std::vector<CpcEntry> entries;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto first = line.find('\t');
    const auto second = first == std::string::npos ? std::string::npos : line.find('\t', first + 1);
    if (second == std::string::npos) fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": expected 3 columns");
    CpcEntry e;
    e.id = line.substr(0, first);
    const std::string level = line.substr(first + 1, second - first - 1);
    e.title = line.substr(second + 1);
    if (e.id.empty() || !is_cpc_section(e.id.front()))
      fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": bad section in id '" + e.id + "'");
    auto [ptr, ec] = std::from_chars(level.data(), level.data() + level.size(), e.level);
    if (ec != std::errc{} || ptr != level.data() + level.size())
      fail(ErrorCode::MalformedRecord, line_ref(line_no) + ": bad level '" + level + "'");
    e.section = e.id.front();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<CpcEntry> load_cpc_taxonomy(const std::filesystem::path& path) {
  return parse_cpc_taxonomy(detail::read_file(path));
}

void save_cpc_taxonomy(const std::filesystem::path& path, const std::vector<CpcEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += e.id + '\t' + std::to_string(e.level) + '\t' + e.title + '\n';
  detail::write_file(path, out);
}

std::vector<CpcEntry> drop_leaf_level(const std::vector<CpcEntry>& entries) {
  if (entries.empty()) return {};
  unsigned max_level = 0;
  for (const auto& e : entries) max_level = std::max(max_level, e.level);
  std::vector<CpcEntry> out;
  for (const auto& e : entries)
    if (e.level < max_level) out.push_back(e);
  return out;
}

}  // namespace muse
