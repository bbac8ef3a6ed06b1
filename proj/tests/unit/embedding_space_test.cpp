#include "promptscape/embedding_space.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "promptscape/error.hpp"
#include "test_support.hpp"

namespace promptscape {
namespace {

using testing::TempDir;

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<EmbeddingEntry> random_pool(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<EmbeddingEntry> pool;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = g(rng);
    pool.push_back({"p" + std::to_string(1000 + i), v, "t"});
  }
  return pool;
}

TEST(CosineDistance, ReferenceValues) {
  const std::vector<double> x{1, 0}, y{0, 1}, neg{-1, 0};
  EXPECT_DOUBLE_EQ(cosine_distance(x, x), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(x, y), 1.0);
  EXPECT_DOUBLE_EQ(cosine_distance(x, neg), 2.0);
}

TEST(CosineDistance, ScaleInvariantAndBounded) {
  const std::vector<double> a{3, 4, 0}, b{6, 8, 0}, c{-0.3, 0.1, 5};
  EXPECT_NEAR(cosine_distance(a, b), 0.0, 1e-15);
  EXPECT_GE(cosine_distance(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, c), cosine_distance(c, a));
}

TEST(CosineDistance, RejectsZeroAndMismatchedVectors) {
  const std::vector<double> a{1, 2}, z{0, 0}, longer{1, 2, 3};
  EXPECT_THROW(cosine_distance(a, z), ValidationError);
  EXPECT_THROW(cosine_distance(a, longer), ValidationError);
}

TEST(CosineDistance, MetricSanityOnRandomUnitVectors) {
  const auto pool = random_pool(60, 5, 3);
  for (const auto& u : pool) {
    for (const auto& v : pool) {
      const double d = cosine_distance(u.vector, v.vector);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 2.0);
      EXPECT_EQ(d, cosine_distance(v.vector, u.vector));
      if (u.prompt_id == v.prompt_id) {
        EXPECT_LT(d, 1e-12);
      } else {
        EXPECT_GT(d, 1e-12);
      }
    }
  }
}

TEST(PairwiseDistances, IdenticalEmbeddingsAreAtZero) {
  const std::vector<EmbeddingEntry> e{{"a", {0.5, 0.5}, "t"}, {"b", {0.5, 0.5}, "t"}};
  const auto m = pairwise_distances(e);
  EXPECT_EQ(m.at(0, 1), 0.0);
  EXPECT_EQ(m.at(1, 0), 0.0);
}

TEST(PairwiseDistances, OrthogonalBasisAtDistanceOne) {
  const std::vector<EmbeddingEntry> e{{"a", {1, 0, 0}, "t"}, {"b", {0, 1, 0}, "t"}, {"c", {0, 0, 1}, "t"}};
  const auto m = pairwise_distances(e);
  ASSERT_EQ(m.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(m.at(i, j), i == j ? 0.0 : 1.0);
  }
}

TEST(PairwiseDistances, FullSymmetricMatrixAtScale) {
  const auto pool = random_pool(1024, 4, 11);
  const auto m = pairwise_distances(pool);
  ASSERT_EQ(m.size(), 1024u);
  ASSERT_EQ(m.values().size(), 1024u * 1024u);
  std::size_t unordered = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m.at(i, i), 0.0);
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      ASSERT_EQ(m.at(i, j), m.at(j, i));
      ++unordered;
    }
  }
  EXPECT_EQ(unordered, 523776u);
  EXPECT_EQ(m.ids()[5], pool[5].prompt_id);
}

TEST(DistanceCache, RoundTripsExactly) {
  TempDir dir;
  const auto m = pairwise_distances(random_pool(17, 6, 2));
  write_distance_cache(dir / "d.bin", m);
  EXPECT_EQ(std::filesystem::file_size(dir / "d.bin"), 8u + 17u * 17u * 8u);
  EXPECT_EQ(read_distance_cache(dir / "d.bin"), m);
}

TEST(DistanceCache, TruncatedPayloadIsRejected) {
  TempDir dir;
  const auto m = pairwise_distances(random_pool(4, 3, 2));
  write_distance_cache(dir / "d.bin", m);
  std::filesystem::resize_file(dir / "d.bin", 8 + 4 * 4 * 8 - 3);
  EXPECT_THROW(read_distance_cache(dir / "d.bin"), ParseError);
}

TEST(KNearest, QueryEqualToMemberComesFirst) {
  const std::vector<EmbeddingEntry> pool{{"x", {1, 0, 0}, "t"}, {"y", {0, 1, 0}, "t"}, {"z", {0, 0, 1}, "t"}};
  const std::vector<double> q{0, 1, 0};
  const auto r = k_nearest(q, pool, 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, "y");
  EXPECT_EQ(r[0].distance, 0.0);
}

TEST(KNearest, LargeKReturnsWholePoolWithIdTieBreak) {
  const std::vector<EmbeddingEntry> pool{{"c", {0, 1}, "t"}, {"a", {0, 1}, "t"}, {"b", {1, 0}, "t"}};
  const std::vector<double> q{1, 0};
  const auto r = k_nearest(q, pool, 10);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].id, "b");
  EXPECT_EQ(r[1].id, "a");  // tie at distance 1, smaller id first
  EXPECT_EQ(r[2].id, "c");
}

TEST(KNearest, RejectsEmptyPoolAndZeroK) {
  const std::vector<double> q{1, 0};
  EXPECT_THROW(k_nearest(q, {}, 1), ValidationError);
  const std::vector<EmbeddingEntry> pool{{"a", {1, 0}, "t"}};
  EXPECT_THROW(k_nearest(q, pool, 0), ValidationError);
}

TEST(KNearest, MatchesExhaustiveSortOracle) {
  for (std::size_t n : {1u, 2u, 37u, 100u, 500u}) {
    const auto pool = random_pool(n, 8, n);
    const auto query = random_pool(1, 8, 99 + n)[0].vector;
    std::vector<Neighbor> oracle;
    for (const auto& e : pool) oracle.push_back({e.prompt_id, cosine_distance(query, e.vector)});
    std::sort(oracle.begin(), oracle.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    for (std::size_t k : {std::size_t{1}, std::size_t{10}, n / 2 + 1, n, n + 3}) {
      const auto got = k_nearest(query, pool, k);
      const std::vector<Neighbor> want(oracle.begin(), oracle.begin() + static_cast<std::ptrdiff_t>(std::min(k, n)));
      EXPECT_EQ(got, want) << "n=" << n << " k=" << k;
    }
  }
}

TEST(MockEmbed, DeterministicUnitVectors) {
  const auto a = mock_embed("check the statement", 64, 5);
  EXPECT_EQ(a, mock_embed("check the statement", 64, 5));
  EXPECT_NE(a, mock_embed("check the statement", 64, 6));
  EXPECT_NE(a, mock_embed("check the statements", 64, 5));
  for (const std::string text : {"", "a", "qqq zzz", "You are a helpful assistant"}) {
    for (std::size_t dim : {2u, 3u, 384u}) {
      const auto v = mock_embed(text, dim, 1);
      ASSERT_EQ(v.size(), dim);
      EXPECT_NEAR(norm(v), 1.0, 1e-9);
    }
  }
  EXPECT_THROW(mock_embed("x", 1, 0), ValidationError);
}

// The hash-noise term dominates the blend, so the ordering holds on average
// and for most seeds rather than for every seed; the majority grows with dim.
TEST(MockEmbed, SharedTokensBringTextsCloser) {
  constexpr std::size_t kDim = 384;
  int closer = 0;
  double sum_shared = 0.0, sum_disjoint = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = mock_embed("check statement A", kDim, seed);
    const auto b = mock_embed("check statement B", kDim, seed);
    const auto q = mock_embed("qqq zzz", kDim, seed);
    const double shared = cosine_distance(a, b);
    const double disjoint = cosine_distance(a, q);
    sum_shared += shared;
    sum_disjoint += disjoint;
    closer += shared < disjoint ? 1 : 0;
  }
  EXPECT_LT(sum_shared, sum_disjoint);
  EXPECT_GE(closer, 85);
}

TEST(Tokenize, LowercasedAlphanumericRuns) {
  EXPECT_EQ(tokenize("Check, the NEXT statement!  x2"),
            (std::vector<std::string>{"check", "the", "next", "statement", "x2"}));
  EXPECT_TRUE(tokenize("  ,.; ").empty());
}

}  // namespace
}  // namespace promptscape
