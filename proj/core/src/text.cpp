#include "muse/text.hpp"
#include "muse/error.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace muse {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::UnparseableCompletion: return "UnparseableCompletion";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::ProviderMalformedResponse: return "ProviderMalformedResponse";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::UniverseMismatch: return "UniverseMismatch";
    case ErrorCode::CyclicInput: return "CyclicInput";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::NoAnchor: return "NoAnchor";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::SnapshotCorrupt: return "SnapshotCorrupt";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace text {
namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }
bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// Sorted, so is_stop_word can binary-search. "want" is here because every
// entailment premise and hypothesis carries the "I want" prefix.
constexpr std::array<std::string_view, 50> kStopWords = {
    "a",    "about", "after", "all",   "an",   "and",   "any",  "are",   "as",    "at",
    "be",   "been",  "but",   "by",    "can",  "for",   "from", "has",   "have",  "i",
    "in",   "into",  "is",    "it",    "its",  "may",   "more", "my",    "not",   "of",
    "on",   "or",    "other", "our",   "so",   "such",  "than", "that",  "the",   "their",
    "them", "these", "they",  "this",  "to",   "via",   "want", "we",    "which", "with",
};

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (lower(s[i]) != lower(prefix[i])) return false;
  return true;
}

std::vector<std::string> alpha_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_alpha(c)) {
      cur.push_back(lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::span<const std::string_view> stop_words() { return kStopWords; }

bool is_stop_word(std::string_view token) {
  return std::binary_search(kStopWords.begin(), kStopWords.end(), token);
}

std::vector<std::string> content_tokens(std::string_view s) {
  auto tokens = alpha_tokens(s);
  std::erase_if(tokens, [](const std::string& t) { return is_stop_word(t); });
  return tokens;
}

std::string light_stem(std::string_view token) {
  std::string t(token);
  auto undouble = [](std::string& w) {
    const std::size_t n = w.size();
    if (n >= 3 && w[n - 1] == w[n - 2] && !is_vowel(w[n - 1]) && w[n - 1] != 'l' && w[n - 1] != 's')
      w.pop_back();
  };
  if (t.size() > 5 && t.ends_with("ing")) {
    t.resize(t.size() - 3);
    undouble(t);
  } else if (t.size() > 4 && t.ends_with("ied")) {
    t.resize(t.size() - 3);
    t.push_back('y');
  } else if (t.size() > 4 && t.ends_with("ed")) {
    t.resize(t.size() - 2);
    undouble(t);
  } else if (t.size() > 4 && t.ends_with("ies")) {
    t.resize(t.size() - 3);
    t.push_back('y');
  } else if (t.size() > 3 && t.ends_with('s') && !t.ends_with("ss") && !t.ends_with("us")) {
    t.pop_back();
  }
  return t;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // Final avalanche so nearby seeds give unrelated buckets.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) cur.push_back(s[j++]);
      if (j >= s.size() || is_space(s[j])) {
        auto t = trim(cur);
        if (!t.empty()) out.push_back(std::move(t));
        cur.clear();
      }
      i = j - 1;
    }
  }
  auto t = trim(cur);
  if (!t.empty()) out.push_back(std::move(t));
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view strip_response_label(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && ((s[i] >= 'A' && s[i] <= 'Z') || s[i] == '_' || s[i] == ' ')) ++i;
  if (i >= 2 && i < s.size() && s[i] == ':' && s[0] != ' ') s.remove_prefix(i + 1);
  return s;
}

}  // namespace text
}  // namespace muse

// ---------------------------------------------------------------------------

#include "muse/log.hpp"

#include <iostream>
#include <mutex>

namespace muse {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink() {
  static LogSink s = [](LogLevel level, std::string_view msg) {
    std::cerr << (level == LogLevel::Warning ? "warning: " : "") << msg << '\n';
  };
  return s;
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(sink_mutex());
  auto old = std::move(sink());
  sink() = std::move(s);
  return old;
}

void log(LogLevel level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(level, message);
}

}  // namespace muse
