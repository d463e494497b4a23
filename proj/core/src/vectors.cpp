#include "muse/vectors.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace muse {

using nlohmann::json;

namespace {
constexpr int kIndexVersion = 1;
}

Vector Vector::normalize(std::vector<double> components) {
  double sq = 0.0;
  for (double c : components) sq += c * c;
  const double n = std::sqrt(sq);
  if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite vector");
  for (double& c : components) c /= n;
  return Vector(std::move(components));
}

Vector Vector::from_unit(std::vector<double> components) {
  Vector v(std::move(components));
  if (v.dim() == 0 || std::abs(v.norm() - 1.0) > kUnitNormTolerance)
    fail(ErrorCode::InvalidArgument, "vector is not unit norm");
  return v;
}

double Vector::norm() const noexcept { return std::sqrt(dot(components_, components_)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim())
    fail(ErrorCode::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  return std::clamp(dot(a.components(), b.components()), -1.0, 1.0);
}

NnIndex NnIndex::build(std::vector<std::pair<std::string, Vector>> items) {
  if (items.empty()) fail(ErrorCode::InvalidArgument, "cannot build an empty index");
  NnIndex index;
  index.dim_ = items.front().second.dim();
  index.ids_.reserve(items.size());
  index.data_.reserve(items.size() * index.dim_);
  for (auto& [id, v] : items) {
    if (v.dim() != index.dim_) fail(ErrorCode::DimMismatch, "item '" + id + "'");
    index.ids_.push_back(id);
    index.data_.insert(index.data_.end(), v.components().begin(), v.components().end());
  }
  index.by_id_.resize(index.ids_.size());
  for (std::size_t i = 0; i < index.by_id_.size(); ++i) index.by_id_[i] = i;
  std::sort(index.by_id_.begin(), index.by_id_.end(),
            [&](std::size_t a, std::size_t b) { return index.ids_[a] < index.ids_[b]; });
  for (std::size_t i = 1; i < index.by_id_.size(); ++i)
    if (index.ids_[index.by_id_[i]] == index.ids_[index.by_id_[i - 1]])
      fail(ErrorCode::DuplicateId, index.ids_[index.by_id_[i]]);
  return index;
}

std::vector<Neighbor> NnIndex::nearest(const Vector& query, std::size_t k) const {
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  if (query.dim() != dim_) fail(ErrorCode::DimMismatch, std::to_string(query.dim()) + " vs " + std::to_string(dim_));
  const std::size_t n = ids_.size();
  std::vector<std::pair<double, std::size_t>> scored(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(data_.data() + i * dim_, dim_);
    scored[i] = {std::clamp(dot(query.components(), row), -1.0, 1.0), i};
  }
  auto better = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return ids_[a.second] < ids_[b.second];
  };
  const std::size_t take = std::min(k, n);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({ids_[scored[i].second], scored[i].first});
  return out;
}

Vector NnIndex::vector_at(std::size_t row) const {
  return Vector::from_unit(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(row * dim_),
                                               data_.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim_)));
}

std::size_t NnIndex::find(const std::string& id) const {
  auto it = std::lower_bound(by_id_.begin(), by_id_.end(), id,
                             [&](std::size_t row, const std::string& key) { return ids_[row] < key; });
  if (it == by_id_.end() || ids_[*it] != id) return npos;
  return *it;
}

void NnIndex::save(const std::filesystem::path& path) const {
  json entries = json::array();
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    std::vector<double> row(data_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                            data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_));
    entries.push_back({{"id", ids_[i]}, {"vector", std::move(row)}});
  }
  json j = {{"version", kIndexVersion}, {"dim", dim_}, {"entries", std::move(entries)}};
  detail::write_file(path, j.dump() + "\n");
}

NnIndex NnIndex::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  try {
    if (j.at("version").get<int>() != kIndexVersion)
      fail(ErrorCode::VersionMismatch, "index version " + j.at("version").dump());
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<std::pair<std::string, Vector>> items;
    for (const auto& e : j.at("entries")) {
      auto v = e.at("vector").get<std::vector<double>>();
      if (v.size() != dim) fail(ErrorCode::CorruptFile, "vector length mismatch");
      items.emplace_back(e.at("id").get<std::string>(), Vector::from_unit(std::move(v)));
    }
    return build(std::move(items));
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

}  // namespace muse
