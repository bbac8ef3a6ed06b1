#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptscape/core_model.hpp"
#include "promptscape/embedding_space.hpp"

namespace promptscape {

// Overall accuracy, or the accuracy for one category.
struct FitnessSelector {
  std::optional<Category> category;

  static FitnessSelector overall() { return {}; }
  static FitnessSelector of(Category c) { return {c}; }
};

std::vector<double> select_fitness(const LandscapeDataset& dataset, const FitnessSelector& selector);

struct AutocorrConfig {
  std::size_t n_bins = 25;
  std::size_t min_pairs_per_bin = 30;
  std::optional<std::pair<double, double>> range;  // default: observed min/max distance
};

struct AutocorrPoint {
  double bin_center = 0.0;
  double rho = 0.0;
  std::size_t pair_count = 0;

  bool operator==(const AutocorrPoint&) const = default;
};

struct AutocorrCurve {
  std::vector<AutocorrPoint> points;
  std::size_t dropped_bins = 0;
  std::size_t dropped_pairs = 0;       // pairs that fell into dropped bins
  std::size_t out_of_range_pairs = 0;  // only with an explicit range

  bool operator==(const AutocorrCurve&) const = default;
};

// Distance-binned autocorrelation: for every unordered pair (i, j) the
// distance picks an equal-width bin; each bin's rho is the Pearson
// correlation over the symmetrized pairs {(f_i, f_j), (f_j, f_i)}. Bins with
// fewer than min_pairs_per_bin pairs or constant fitness are dropped.
AutocorrCurve autocorrelation(const DistanceMatrix& distances, std::span<const double> fitness,
                              const AutocorrConfig& config = {});
AutocorrCurve autocorrelation(const LandscapeDataset& dataset, const FitnessSelector& selector,
                              const AutocorrConfig& config = {});

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct Histogram {
  std::vector<HistogramBin> bins;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

// Equal-width bins over [lo, hi]; a value equal to hi goes in the last bin.
Histogram fitness_histogram(std::span<const double> values, std::size_t n_bins,
                            std::pair<double, double> range = {0.0, 1.0});
Histogram fitness_histogram(const LandscapeDataset& dataset, std::size_t n_bins,
                            std::pair<double, double> range = {0.0, 1.0});

struct PcaResult {
  std::vector<std::string> ids;
  std::vector<double> mean;
  std::vector<std::vector<double>> components;   // unit vectors, descending variance
  std::vector<double> explained_variance;        // eigenvalues of the covariance
  std::vector<double> explained_fraction;        // eigenvalue / total variance
  std::vector<std::vector<double>> coordinates;  // per point, one value per component
  bool rank_deficient = false;                   // fewer components than requested
  bool converged = true;
};

inline constexpr double kPcaTolerance = 1e-10;
inline constexpr int kPcaMaxIterations = 10000;

// Principal components by power iteration with deflation. Each component's
// largest-magnitude entry is positive.
PcaResult pca_project(std::span<const EmbeddingEntry> embeddings, std::size_t n_components = 2);

struct DistanceRange {
  double min_nonzero = 0.0;
  double max = 0.0;
};

// Distances at or below this count as zero.
inline constexpr double kZeroDistance = 1e-12;

DistanceRange distance_range(const DistanceMatrix& distances);
DistanceRange distance_range(const LandscapeDataset& dataset);

void write_autocorr_csv(const std::filesystem::path& path, const AutocorrCurve& curve);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& histogram);
// Missing components (rank-deficient input) are written as 0.
void write_pca_csv(const std::filesystem::path& path, const PcaResult& pca,
                   std::span<const double> accuracies);

}  // namespace promptscape
