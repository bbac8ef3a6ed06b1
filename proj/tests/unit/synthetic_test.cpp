#include "promptscape/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "promptscape/embedding_space.hpp"
#include "promptscape/error.hpp"
#include "promptscape/landscape.hpp"

namespace promptscape {
namespace {

// Naive evaluator: per locus, build the lookup index bit by bit from the
// unpacked string.
double naive_nk(const NKLandscape& l, const std::vector<std::uint8_t>& bits) {
  double total = 0.0;
  for (int i = 0; i < l.n; ++i) {
    std::size_t index = bits[static_cast<std::size_t>(i)];
    std::size_t weight = 2;
    for (int nb : l.neighbors[static_cast<std::size_t>(i)]) {
      index += weight * bits[static_cast<std::size_t>(nb)];
      weight *= 2;
    }
    total += l.components[static_cast<std::size_t>(i)][index];
  }
  return total / l.n;
}

std::vector<std::uint8_t> unpack(std::uint32_t packed, int n) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) bits[static_cast<std::size_t>(i)] = (packed >> i) & 1u;
  return bits;
}

double first_bin_rho(const LandscapeDataset& ds, double lo, double hi) {
  AutocorrConfig cfg;
  cfg.n_bins = 10;
  cfg.min_pairs_per_bin = 1;
  cfg.range = {lo, hi};
  return autocorrelation(ds, FitnessSelector::overall(), cfg).points.front().rho;
}

TEST(NkGenerate, TableShapes) {
  const auto l = nk_generate(10, 0, 1);
  ASSERT_EQ(l.components.size(), 10u);
  for (const auto& t : l.components) EXPECT_EQ(t.size(), 2u);
  for (const auto& nb : l.neighbors) EXPECT_TRUE(nb.empty());

  const auto full = nk_generate(10, 9, 1);
  for (int i = 0; i < 10; ++i) {
    const auto& nb = full.neighbors[static_cast<std::size_t>(i)];
    std::set<int> distinct(nb.begin(), nb.end());
    EXPECT_EQ(distinct.size(), 9u);
    EXPECT_FALSE(distinct.count(i));
    EXPECT_EQ(full.components[static_cast<std::size_t>(i)].size(), 1024u);
  }
}

TEST(NkGenerate, NeighborsDistinctAndComponentsInUnitInterval) {
  for (int k = 0; k < 8; ++k) {
    const auto l = nk_generate(8, k, static_cast<std::uint64_t>(k) + 3);
    for (int i = 0; i < 8; ++i) {
      const auto& nb = l.neighbors[static_cast<std::size_t>(i)];
      EXPECT_EQ(nb.size(), static_cast<std::size_t>(k));
      std::set<int> distinct(nb.begin(), nb.end());
      EXPECT_EQ(distinct.size(), nb.size());
      EXPECT_FALSE(distinct.count(i));
      for (double c : l.components[static_cast<std::size_t>(i)]) {
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
      }
    }
  }
}

TEST(NkGenerate, DeterministicPerSeed) {
  const auto a = nk_generate(12, 4, 99);
  const auto b = nk_generate(12, 4, 99);
  EXPECT_EQ(a.neighbors, b.neighbors);
  EXPECT_EQ(a.components, b.components);
  EXPECT_NE(a.components, nk_generate(12, 4, 100).components);
}

TEST(NkGenerate, RejectsOutOfRangeParameters) {
  EXPECT_THROW(nk_generate(0, 0, 1), ValidationError);
  EXPECT_THROW(nk_generate(5, 5, 1), ValidationError);
  EXPECT_THROW(nk_generate(5, -1, 1), ValidationError);
  EXPECT_THROW(nk_generate(kMaxNkLoci + 1, 0, 1), ValidationError);
}

TEST(NkFitness, AdditiveTablesCountOnes) {
  auto l = nk_generate(6, 0, 1);
  for (auto& t : l.components) t = {0.0, 1.0};
  for (std::uint32_t s = 0; s < 64; ++s) {
    EXPECT_DOUBLE_EQ(nk_fitness(l, s), std::popcount(s) / 6.0);
  }
}

TEST(NkFitness, ConstantTables) {
  auto l = nk_generate(7, 3, 2);
  for (auto& t : l.components) std::fill(t.begin(), t.end(), 0.375);
  for (std::uint32_t s = 0; s < 128; ++s) EXPECT_DOUBLE_EQ(nk_fitness(l, s), 0.375);
}

TEST(NkFitness, MatchesNaiveEvaluator) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto l = nk_generate(8, 3, seed);
    for (std::uint32_t s = 0; s < 256; ++s) {
      const auto bits = unpack(s, 8);
      const double want = naive_nk(l, bits);
      EXPECT_NEAR(nk_fitness(l, s), want, 1e-15);
      EXPECT_EQ(nk_fitness(l, std::span<const std::uint8_t>(bits)), nk_fitness(l, s));
      EXPECT_GE(want, 0.0);
      EXPECT_LE(want, 1.0);
    }
  }
}

TEST(NkFitness, LengthMismatch) {
  const auto l = nk_generate(4, 1, 1);
  const std::vector<std::uint8_t> three{0, 1, 0};
  EXPECT_THROW(nk_fitness(l, three), ValidationError);
  const std::vector<std::uint8_t> bad{0, 1, 2, 0};
  EXPECT_THROW(nk_fitness(l, bad), ValidationError);
}

TEST(NkToDataset, HypercubeEmbedding) {
  const auto l = nk_generate(10, 2, 4);
  const auto ds = nk_to_dataset(l);
  ASSERT_EQ(ds.size(), 1024u);
  const auto m = pairwise_distances(ds);
  for (std::uint32_t a = 0; a < 1024; a += 37) {
    for (std::uint32_t b = 0; b < 1024; b += 41) {
      EXPECT_NEAR(m.at(a, b), 2.0 * std::popcount(a ^ b) / 10.0, 1e-12);
    }
    EXPECT_EQ(m.at(a, a), 0.0);
    EXPECT_NEAR(m.at(a, a ^ 1023u), 2.0, 1e-12);
    EXPECT_EQ(ds.accuracies()[a], nk_fitness(l, a));
  }
  EXPECT_EQ(ds.prompts()[5].text, "1010000000");
  EXPECT_THROW(nk_to_dataset(nk_generate(kMaxNkDatasetLoci + 1, 0, 1)), ValidationError);
}

TEST(NkToDataset, AdditiveLandscapeCorrelationIsExactlyLinearInHamming) {
  constexpr int kN = 10;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = nk_to_dataset(nk_generate(kN, 0, seed));
    AutocorrConfig cfg;
    cfg.n_bins = kN;
    cfg.min_pairs_per_bin = 1;
    cfg.range = {0.1, 2.1};
    const auto curve = autocorrelation(ds, FitnessSelector::overall(), cfg);
    for (std::size_t b = 0; b < curve.points.size(); ++b) {
      const double h = static_cast<double>(b + 1);
      EXPECT_NEAR(curve.points[b].rho, 1.0 - 2.0 * h / kN, 1e-9);
    }
  }
}

TEST(NkToDataset, NearestNeighbourCorrelationFallsWithEpistasis) {
  std::vector<double> means;
  for (int k : {0, 2, 5, 9}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      sum += first_bin_rho(nk_to_dataset(nk_generate(10, k, seed)), 0.1, 2.1);
    }
    means.push_back(sum / 20.0);
  }
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LT(means[i], means[i - 1]);
}

TEST(NkToDataset, GlobalOptimumIsUnique) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = nk_to_dataset(nk_generate(10, 3, seed)).accuracies();
    const double best = *std::max_element(f.begin(), f.end());
    EXPECT_EQ(std::count(f.begin(), f.end(), best), 1);
  }
}

TEST(PlantedFitness, SmoothExamples) {
  const auto l = make_smooth_landscape(16, 3);
  EXPECT_NEAR(planted_fitness(l, l.target), 1.0, 1e-15);
  std::vector<double> neg(l.target);
  for (auto& x : neg) x = -x;
  EXPECT_NEAR(planted_fitness(l, neg), 0.0, 1e-15);
  EXPECT_THROW(planted_fitness(l, std::vector<double>(15, 1.0)), ValidationError);
}

TEST(PlantedFitness, RuggedBoundedAndDegenerateAtZeroFrequency) {
  const auto l = make_rugged_landscape(8, 6.0, 1);
  EXPECT_EQ(l.directions.size(), kRuggedDirections);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const double f = planted_fitness(l, random_unit_vector(8, s));
    EXPECT_GT(f, 0.0);
    EXPECT_LT(f, 1.0);
  }
  const auto flat = make_rugged_landscape(8, 1e-12, 1);
  double s = 0.0;
  for (double phi : flat.phases) s += std::sin(phi);
  const double want = 1.0 / (1.0 + std::exp(-s / std::sqrt(static_cast<double>(flat.phases.size()))));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_NEAR(planted_fitness(flat, random_unit_vector(8, seed)), want, 1e-10);
  }
  EXPECT_THROW(make_rugged_landscape(8, 0.0, 1), ValidationError);
}

TEST(PlantedDataset, ShapeAndTextLookup) {
  const auto l = make_smooth_landscape(8, 2);
  const auto pd = planted_dataset(l, 2, 8, 3);
  EXPECT_EQ(pd.dataset.size(), 2u);
  EXPECT_EQ(pd.dataset.prompts()[1].id, "pl-0001");
  EXPECT_EQ(pd.dataset.prompts()[1].text, "planted prompt 0001");
  EXPECT_EQ(pd.embed("planted prompt 0001"), pd.dataset.embeddings()[1].vector);
  EXPECT_THROW(pd.embed("unknown"), ValidationError);
  EXPECT_THROW(autocorrelation(pd.dataset, FitnessSelector::overall()), ValidationError);
  EXPECT_THROW(planted_dataset(l, 1, 8, 3), ValidationError);
  EXPECT_THROW(planted_dataset(l, 5, 9, 3), ValidationError);
}

TEST(PlantedDataset, FitnessMatchesPlantedFunctionAndIsDeterministic) {
  const auto l = make_rugged_landscape(8, 4.0, 5);
  const auto a = planted_dataset(l, 50, 8, 6);
  const auto b = planted_dataset(l, 50, 8, 6);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.dataset.accuracies()[i], planted_fitness(l, a.dataset.embeddings()[i].vector));
    EXPECT_EQ(a.dataset.embeddings()[i].vector, b.dataset.embeddings()[i].vector);
  }
}

TEST(PlantedDataset, SmoothGlobalOptimumIsUniqueAndClosestToTarget) {
  const auto l = make_smooth_landscape(8, 7);
  const auto pd = planted_dataset(l, 400, 8, 8);
  const auto f = pd.dataset.accuracies();
  const auto best = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
  EXPECT_EQ(std::count(f.begin(), f.end(), f[best]), 1);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_LE(cosine_distance(pd.dataset.embeddings()[best].vector, l.target),
              cosine_distance(pd.dataset.embeddings()[i].vector, l.target));
  }
  EXPECT_LT(f[best], 1.0);
}

TEST(PlantedDataset, HigherFrequencyDecorrelatesFaster) {
  int faster = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto slow = planted_dataset(make_rugged_landscape(8, 2.0, seed), 400, 8, seed + 50);
    const auto fast = planted_dataset(make_rugged_landscape(8, 12.0, seed), 400, 8, seed + 50);
    faster += first_bin_rho(fast.dataset, 0.0, 2.0) < first_bin_rho(slow.dataset, 0.0, 2.0) ? 1 : 0;
  }
  EXPECT_EQ(faster, 5);
}

TEST(TrapDataset, TrapIsLowAndIsolated) {
  TrapConfig cfg;
  cfg.n_points = 300;
  cfg.trap_points = 30;
  cfg.seed = 4;
  const auto ds = planted_trap_dataset(cfg);
  ASSERT_EQ(ds.size(), 300u);
  const auto m = pairwise_distances(ds);
  const auto f = ds.accuracies();
  std::vector<std::size_t> trap;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] <= cfg.trap_fitness_max) trap.push_back(i);
  }
  ASSERT_GE(trap.size(), cfg.trap_points);
  std::set<std::size_t> in_trap;
  // Trap members are the points within the trap cluster of the first one.
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (m.at(trap.front(), i) <= 2 * cfg.trap_radius) in_trap.insert(i);
  }
  EXPECT_EQ(in_trap.size(), cfg.trap_points);
  for (std::size_t i : in_trap) {
    EXPECT_LE(f[i], cfg.trap_fitness_max);
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (!in_trap.count(j)) EXPECT_GE(m.at(i, j), cfg.isolation);
    }
  }
}

TEST(TrapDataset, RejectsBadConfig) {
  TrapConfig cfg;
  cfg.trap_points = cfg.n_points;
  EXPECT_THROW(planted_trap_dataset(cfg), ValidationError);
  cfg = {};
  cfg.trap_fitness_max = 1.0;
  EXPECT_THROW(planted_trap_dataset(cfg), ValidationError);
}

TEST(SyntheticTestCases, CoverEveryCategoryWithDistinctStatements) {
  const auto cases = synthetic_test_cases(3);
  ASSERT_EQ(cases.size(), 30u);
  std::set<std::string> ids;
  std::map<Category, int> per;
  for (const auto& c : cases) {
    EXPECT_NO_THROW(validate(c));
    EXPECT_NE(c.correct_statement, c.erroneous_statement);
    ids.insert(c.id);
    per[c.category]++;
  }
  EXPECT_EQ(ids.size(), 30u);
  EXPECT_EQ(per.size(), kNumCategories);
  for (const auto& [cat, n] : per) EXPECT_EQ(n, 3);
}

}  // namespace
}  // namespace promptscape
