#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Text utilities shared by the fakes, annotation and verb extraction. Every
// function here is locale-independent so outputs are identical across hosts.
namespace muse::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Lowercased maximal runs of ASCII letters.
std::vector<std::string> alpha_tokens(std::string_view s);

/// The fixed 50-word stop list.
std::span<const std::string_view> stop_words();
bool is_stop_word(std::string_view token);

/// alpha_tokens minus stop words, in order of appearance (duplicates kept).
std::vector<std::string> content_tokens(std::string_view s);

/// Crude suffix stripping ("cooling" -> "cool", "plants" -> "plant").
std::string light_stem(std::string_view token);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0);
std::string hex64(std::uint64_t v);

/// Splits on '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Drops an all-caps "LABEL:" that some models (and the fake) prefix answers with.
std::string_view strip_response_label(std::string_view s);

}  // namespace muse::text
