#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptscape/core_model.hpp"

namespace promptscape {

// NK landscape over N-bit strings. Locus i reads its own bit plus the bits
// of neighbors[i] (K distinct loci other than i); the lookup index puts the
// own bit at position 0 and neighbor r at position r + 1.
struct NKLandscape {
  int n = 0;
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> neighbors;     // n rows of k indices
  std::vector<std::vector<double>> components;  // n rows of 2^(k+1) values in [0, 1]

  std::size_t table_index(int locus, std::uint32_t bits) const noexcept;
};

inline constexpr int kMaxNkLoci = 24;
inline constexpr int kMaxNkDatasetLoci = 16;

NKLandscape nk_generate(int n, int k, std::uint64_t seed);

// Mean over loci of the component lookups. `bits[i]` is locus i (0 or 1).
double nk_fitness(const NKLandscape& landscape, std::span<const std::uint8_t> bits);
// Same, with locus i stored in bit i of `packed`.
double nk_fitness(const NKLandscape& landscape, std::uint32_t packed);

// One prompt per bitstring with ±1/sqrt(N) embeddings, so cosine distance is
// exactly 2h/N for Hamming distance h. Ids are "nk-<index>" zero-padded.
LandscapeDataset nk_to_dataset(const NKLandscape& landscape);

enum class PlantedKind { kSmooth, kRugged };

inline constexpr std::size_t kRuggedDirections = 64;

struct PlantedLandscape {
  PlantedKind kind = PlantedKind::kSmooth;
  std::size_t dim = 0;
  std::vector<double> target;                   // smooth: unit vector
  std::vector<std::vector<double>> directions;  // rugged: m unit vectors
  std::vector<double> phases;                   // rugged: m phases
  double omega = 1.0;
  std::uint64_t seed = 0;
};

PlantedLandscape make_smooth_landscape(std::size_t dim, std::uint64_t seed);
PlantedLandscape make_rugged_landscape(std::size_t dim, double omega, std::uint64_t seed,
                                       std::size_t directions = kRuggedDirections);

// smooth: 1 - cosine_distance(x, target) / 2.
// rugged: logistic(sum_i sin(omega * (w_i . x) + phi_i) / sqrt(m)).
double planted_fitness(const PlantedLandscape& landscape, std::span<const double> x);

// Dataset plus the text -> embedding map the mock chat backend needs to
// recover each prompt's planted fitness from its text.
struct PlantedDataset {
  LandscapeDataset dataset;
  std::unordered_map<std::string, std::vector<double>> embedding_by_text;

  std::vector<double> embed(std::string_view text) const;  // throws if unknown
};

// n_points seeded random unit embeddings scored by planted_fitness.
// Ids "pl-0000", texts "planted prompt 0000".
PlantedDataset planted_dataset(const PlantedLandscape& landscape, std::size_t n_points,
                               std::size_t dim, std::uint64_t seed);

struct TrapConfig {
  std::size_t n_points = 1000;
  std::size_t trap_points = 100;
  std::size_t dim = 32;
  double trap_radius = 0.05;      // max cosine distance from the trap centre
  double isolation = 0.4;         // min distance from trap members to the rest
  double trap_fitness_max = 0.1;  // trap fitness lies in [0, trap_fitness_max]
  double omega = 6.0;
  std::uint64_t seed = 0;
};

// Rugged planted landscape with a planted low-fitness cluster: trap members
// sit within trap_radius of a centre, score at most trap_fitness_max, and
// every other point is at least `isolation` away from every trap member.
// Mirrors a population whose worst prompts are semantically cut off.
LandscapeDataset planted_trap_dataset(const TrapConfig& config);

// Seeded random unit vector of length dim.
std::vector<double> random_unit_vector(std::size_t dim, std::uint64_t seed);

// Offline test cases: per_category cases for each of the ten categories with
// distinct correct/erroneous statements. Ids "tc-<category>-<nn>".
std::vector<TestCase> synthetic_test_cases(std::size_t per_category);

}  // namespace promptscape
