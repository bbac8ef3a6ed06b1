#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptscape/core_model.hpp"
#include "promptscape/embedding_space.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

inline constexpr double kDefaultMinThreshold = 0.002;
inline constexpr double kDefaultMaxThreshold = 1.225;

// `count` equally spaced values from lo to hi inclusive.
std::vector<double> linspace_thresholds(std::size_t count, double lo = kDefaultMinThreshold,
                                        double hi = kDefaultMaxThreshold);

struct WalkConfig {
  std::size_t n_starts = 50;
  std::size_t walks_per_start = 100;
  std::size_t max_steps = 50;
  std::size_t patience = 10;
  std::vector<double> thresholds = linspace_thresholds(50);
  std::uint64_t master_seed = 0;
};

void validate(const WalkConfig& config);

enum class Termination { kStepLimit, kPatience, kIsolated };

std::string_view termination_name(Termination t);

struct WalkResult {
  std::string start_id;
  double threshold = 0.0;
  double max_fitness = 0.0;
  std::size_t steps_taken = 0;
  Termination termination = Termination::kStepLimit;
  std::vector<std::string> path_ids;  // start first
};

struct DifficultyPoint {
  double threshold = 0.0;
  double mean_max_fitness = 0.0;
  double std_max_fitness = 0.0;  // population standard deviation
  std::size_t n_runs = 0;

  bool operator==(const DifficultyPoint&) const = default;
};

struct DifficultyCurve {
  std::vector<DifficultyPoint> points;
};

// Per-row neighbor lists sorted by (distance, index), self excluded, so the
// neighborhood at any threshold is a prefix.
class WalkGraph {
 public:
  explicit WalkGraph(const DistanceMatrix& distances);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t index_of(std::string_view id) const;

  // Number of other prompts within `threshold` of `node`.
  std::size_t neighbor_count(std::size_t node, double threshold) const;
  // The r-th closest other prompt to `node`.
  std::size_t neighbor(std::size_t node, std::size_t rank) const {
    return order_[node * (ids_.size() - 1) + rank];
  }

 private:
  std::vector<std::string> ids_;
  std::vector<double> sorted_distances_;  // n rows of n-1
  std::vector<std::uint32_t> order_;
};

// The k lowest-fitness ids, ties by id ascending.
std::vector<std::string> worst_k(const LandscapeDataset& dataset, std::size_t k);
std::vector<std::size_t> worst_k(std::span<const std::string> ids, std::span<const double> fitness,
                                 std::size_t k);

// One distance-constrained random walk. Each step moves to a uniformly
// chosen prompt within `threshold` of the current one regardless of
// fitness; patience counts consecutive steps without a strict increase of
// the running maximum.
WalkResult random_walk(const WalkGraph& graph, std::size_t start, std::span<const double> fitness,
                       double threshold, std::size_t max_steps, std::size_t patience, Rng& rng);
WalkResult random_walk(std::string_view start_id, const DistanceMatrix& distances,
                       std::span<const double> fitness, double threshold, std::size_t max_steps,
                       std::size_t patience, Rng& rng);

// Seed for walk w from start s at threshold index t.
std::uint64_t walk_seed(std::uint64_t master_seed, std::size_t start, std::size_t walk,
                        std::size_t threshold_index);

// n_starts worst prompts x walks_per_start walks at every threshold. When
// `dump` is non-null every WalkResult is appended to it (threshold-major).
DifficultyCurve difficulty_curve(const DistanceMatrix& distances, std::span<const double> fitness,
                                 const WalkConfig& config, std::vector<WalkResult>* dump = nullptr);
DifficultyCurve difficulty_curve(const LandscapeDataset& dataset, const WalkConfig& config,
                                 std::vector<WalkResult>* dump = nullptr);

void write_difficulty_csv(const std::filesystem::path& path, const DifficultyCurve& curve);
void write_walk_dump(const std::filesystem::path& path, const std::vector<WalkResult>& walks);

}  // namespace promptscape
