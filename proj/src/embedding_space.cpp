#include "promptscape/embedding_space.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "promptscape/error.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

double clamp_distance(double d) { return std::clamp(d, 0.0, 2.0); }

// Fills `out` (accumulating) with uniform [-1, 1) entries keyed by `key`.
void add_hashed_direction(std::vector<double>& out, std::uint64_t key) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += 2.0 * uniform01(mix64(key + kGolden * (i + 1))) - 1.0;
  }
}

void normalize(std::vector<double>& v) {
  const double n = norm(v);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine_distance: length mismatch (" + std::to_string(u.size()) +
                          " vs " + std::to_string(v.size()) + ")");
  }
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  if (uu == 0.0 || vv == 0.0) throw ValidationError("cosine_distance: zero vector");
  // sqrt(uu * vv) is exact for u == v, so identical vectors sit at exactly 0.
  return clamp_distance(1.0 - dot(u, v) / std::sqrt(uu * vv));
}

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, std::vector<double> values)
    : ids_(std::move(ids)), values_(std::move(values)) {
  if (values_.size() != ids_.size() * ids_.size()) {
    throw ValidationError("distance matrix: " + std::to_string(values_.size()) +
                          " values for " + std::to_string(ids_.size()) + " ids");
  }
}

DistanceMatrix pairwise_distances(const LandscapeDataset& dataset) {
  return pairwise_distances(std::span<const EmbeddingEntry>(dataset.embeddings()));
}

DistanceMatrix pairwise_distances(std::span<const EmbeddingEntry> entries) {
  const std::size_t n = entries.size();
  std::vector<std::string> ids;
  ids.reserve(n);
  std::vector<double> squared(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(entries[i].prompt_id);
    if (entries[i].vector.size() != entries[0].vector.size()) {
      throw ValidationError("pairwise_distances: vector length mismatch at '" +
                            entries[i].prompt_id + "'");
    }
    squared[i] = dot(entries[i].vector, entries[i].vector);
    if (squared[i] == 0.0) {
      throw ValidationError("pairwise_distances: zero vector for '" + entries[i].prompt_id + "'");
    }
  }
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Same arithmetic as cosine_distance so the two agree bit for bit.
      const double d = clamp_distance(1.0 - dot(entries[i].vector, entries[j].vector) /
                                                std::sqrt(squared[i] * squared[j]));
      values[i * n + j] = d;
      values[j * n + i] = d;
    }
  }
  return DistanceMatrix(std::move(ids), std::move(values));
}

void write_distance_cache(const std::filesystem::path& path, const DistanceMatrix& m) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    put_u64(out, m.size());
    for (double v : m.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw IoError("write failure on " + path.string());
  }
  std::ofstream ids(path.string() + ".ids.jsonl", std::ios::binary | std::ios::trunc);
  if (!ids) throw IoError("cannot open id sidecar for " + path.string());
  for (const auto& id : m.ids()) ids << nlohmann::ordered_json{{"id", id}}.dump() << '\n';
  if (!ids) throw IoError("write failure on id sidecar for " + path.string());
}

DistanceMatrix read_distance_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::uint64_t n = get_u64(in);
  if (!in) throw ParseError(path.string() + ": truncated header");
  std::vector<double> values;
  values.reserve(n * n);
  for (std::uint64_t i = 0; i < n * n; ++i) {
    const std::uint64_t bits = get_u64(in);
    if (!in) throw ParseError(path.string() + ": truncated payload");
    values.push_back(std::bit_cast<double>(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(path.string() + ": trailing bytes after payload");
  }

  const std::string sidecar = path.string() + ".ids.jsonl";
  std::ifstream id_in(sidecar);
  if (!id_in) throw IoError("cannot open " + sidecar);
  std::vector<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(id_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ids.push_back(nlohmann::json::parse(line).at("id").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(sidecar, lineno, e.what());
    }
  }
  if (ids.size() != n) {
    throw ValidationError(sidecar + ": " + std::to_string(ids.size()) + " ids for " +
                          std::to_string(n) + " rows");
  }
  return DistanceMatrix(std::move(ids), std::move(values));
}

std::vector<Neighbor> k_nearest(std::span<const double> query, std::span<const EmbeddingEntry> pool,
                                std::size_t k) {
  if (pool.empty()) throw ValidationError("k_nearest: empty pool");
  if (k == 0) throw ValidationError("k_nearest: k must be positive");
  std::vector<Neighbor> all;
  all.reserve(pool.size());
  for (const auto& e : pool) all.push_back({e.prompt_id, cosine_distance(query, e.vector)});
  const std::size_t take = std::min(k, all.size());
  const auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), less);
  all.resize(take);
  return all;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<double> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw ValidationError("mock_embed: dim must be at least 2");
  const std::uint64_t seed_key = mix64(seed ^ 0x5eedf00dULL);

  std::vector<double> noise(dim, 0.0);
  add_hashed_direction(noise, mix64(fnv1a(text) ^ seed_key));
  normalize(noise);

  std::vector<double> bag(dim, 0.0);
  for (const auto& token : tokenize(text)) {
    add_hashed_direction(bag, mix64(fnv1a(token) + seed_key));
  }
  normalize(bag);

  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = kMockNoiseWeight * noise[i] + kMockTokenWeight * bag[i];
  }
  normalize(v);
  return v;
}

}  // namespace promptscape
