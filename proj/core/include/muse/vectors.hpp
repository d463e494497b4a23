#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace muse {

/// A unit-norm embedding. Construction normalizes, so cosine similarity
/// between two Vectors is a plain inner product.
class Vector {
 public:
  Vector() = default;

  /// Throws InvalidArgument on a zero or non-finite vector.
  static Vector normalize(std::vector<double> components);

  /// Accepts components already of unit norm (within 1e-9) without touching
  /// them, so stored vectors round-trip bit-for-bit.
  static Vector from_unit(std::vector<double> components);

  std::size_t dim() const noexcept { return components_.size(); }
  std::span<const double> components() const noexcept { return components_; }
  double operator[](std::size_t i) const noexcept { return components_[i]; }
  double norm() const noexcept;

  bool operator==(const Vector&) const = default;

 private:
  explicit Vector(std::vector<double> c) : components_(std::move(c)) {}
  std::vector<double> components_;
};

inline constexpr double kUnitNormTolerance = 1e-9;

double dot(std::span<const double> a, std::span<const double> b);

/// Inner product of two unit vectors clamped to [-1, 1]. Throws DimMismatch.
double cosine(const Vector& a, const Vector& b);

struct Neighbor {
  std::string id;
  double score = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Exact maximum-inner-product index over unit vectors. Immutable once built.
class NnIndex {
 public:
  NnIndex() = default;

  /// Throws InvalidArgument on empty input, DimMismatch, DuplicateId.
  static NnIndex build(std::vector<std::pair<std::string, Vector>> items);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return ids_.empty(); }

  /// Top-k by cosine, descending, ties by ascending id. k larger than the
  /// index returns everything.
  std::vector<Neighbor> nearest(const Vector& query, std::size_t k) const;

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  Vector vector_at(std::size_t row) const;
  /// Row of `id`, or npos.
  std::size_t find(const std::string& id) const;

  void save(const std::filesystem::path& path) const;
  static NnIndex load(const std::filesystem::path& path);

  bool operator==(const NnIndex& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> data_;  // row-major, ids_.size() x dim_
  std::vector<std::size_t> by_id_;  // row order sorted by id, for find()
};

}  // namespace muse
