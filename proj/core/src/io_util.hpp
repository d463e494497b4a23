#pragma once

#include "muse/error.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace muse::detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << contents;
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace muse::detail
