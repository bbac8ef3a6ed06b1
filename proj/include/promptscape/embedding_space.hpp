#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptscape/core_model.hpp"

namespace promptscape {

// 1 - cos(u, v), clamped to [0, 2]. Throws ValidationError on a length
// mismatch or a zero vector.
double cosine_distance(std::span<const double> u, std::span<const double> v);

// Symmetric matrix of cosine distances with a zero diagonal, stored
// row-major. Row i corresponds to ids()[i].
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::vector<std::string> ids, std::vector<double> values);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  double at(std::size_t i, std::size_t j) const noexcept { return values_[i * ids_.size() + j]; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * ids_.size(), ids_.size()};
  }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const DistanceMatrix&) const = default;

 private:
  std::vector<std::string> ids_;
  std::vector<double> values_;
};

DistanceMatrix pairwise_distances(const LandscapeDataset& dataset);
DistanceMatrix pairwise_distances(std::span<const EmbeddingEntry> entries);

// Binary cache: little-endian u64 row count, then n*n little-endian f64
// row-major; ids go to "<path>.ids.jsonl", one {"id": ...} per line.
void write_distance_cache(const std::filesystem::path& path, const DistanceMatrix& m);
DistanceMatrix read_distance_cache(const std::filesystem::path& path);

struct Neighbor {
  std::string id;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

// The min(k, |pool|) closest pool members, ascending by distance, ties by id.
std::vector<Neighbor> k_nearest(std::span<const double> query, std::span<const EmbeddingEntry> pool,
                                std::size_t k);

// Deterministic stand-in for a sentence embedder. Each text maps to a unit
// vector built from a text-hash noise direction (weight 0.7) and a
// bag-of-tokens direction (weight 0.3), so texts sharing tokens land closer
// together than unrelated texts. Integer hashing only; no global state.
std::vector<double> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

inline constexpr double kMockNoiseWeight = 0.7;
inline constexpr double kMockTokenWeight = 0.3;

// Lower-cased alphanumeric tokens, in order.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace promptscape
