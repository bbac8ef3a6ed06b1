#include "promptscape/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "promptscape/embedding_space.hpp"
#include "promptscape/error.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

namespace {

std::string padded(std::string_view prefix, std::size_t index, std::size_t width) {
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(prefix) + digits;
}

std::size_t id_width(std::size_t count) {
  return std::max<std::size_t>(4, std::to_string(count == 0 ? 0 : count - 1).size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
}

}  // namespace

std::size_t NKLandscape::table_index(int locus, std::uint32_t bits) const noexcept {
  std::size_t index = (bits >> locus) & 1u;
  const auto& nb = neighbors[static_cast<std::size_t>(locus)];
  for (std::size_t r = 0; r < nb.size(); ++r) {
    index |= static_cast<std::size_t>((bits >> nb[r]) & 1u) << (r + 1);
  }
  return index;
}

NKLandscape nk_generate(int n, int k, std::uint64_t seed) {
  if (n < 1 || n > kMaxNkLoci) {
    throw ValidationError("nk_generate: N must be in [1, " + std::to_string(kMaxNkLoci) + "]");
  }
  if (k < 0 || k > n - 1) throw ValidationError("nk_generate: K must be in [0, N-1]");

  NKLandscape land;
  land.n = n;
  land.k = k;
  land.seed = seed;
  Rng rng(derive_seed({seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k)}));

  land.neighbors.resize(static_cast<std::size_t>(n));
  for (int locus = 0; locus < n; ++locus) {
    std::vector<int> others;
    for (int j = 0; j < n; ++j) {
      if (j != locus) others.push_back(j);
    }
    // Partial Fisher-Yates: the first k entries are a uniform sample.
    for (int r = 0; r < k; ++r) {
      const auto pick = r + static_cast<int>(uniform_index(rng, others.size() - static_cast<std::size_t>(r)));
      std::swap(others[static_cast<std::size_t>(r)], others[static_cast<std::size_t>(pick)]);
    }
    others.resize(static_cast<std::size_t>(k));
    land.neighbors[static_cast<std::size_t>(locus)] = std::move(others);
  }

  const std::size_t table_size = std::size_t{1} << (k + 1);
  land.components.assign(static_cast<std::size_t>(n), std::vector<double>(table_size));
  for (auto& table : land.components) {
    for (double& v : table) v = uniform01(rng);
  }
  return land;
}

double nk_fitness(const NKLandscape& landscape, std::uint32_t packed) {
  double sum = 0.0;
  for (int locus = 0; locus < landscape.n; ++locus) {
    sum += landscape.components[static_cast<std::size_t>(locus)][landscape.table_index(locus, packed)];
  }
  return sum / landscape.n;
}

double nk_fitness(const NKLandscape& landscape, std::span<const std::uint8_t> bits) {
  if (bits.size() != static_cast<std::size_t>(landscape.n)) {
    throw ValidationError("nk_fitness: expected " + std::to_string(landscape.n) + " bits, got " +
                          std::to_string(bits.size()));
  }
  std::uint32_t packed = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw ValidationError("nk_fitness: bits must be 0 or 1");
    packed |= static_cast<std::uint32_t>(bits[i]) << i;
  }
  return nk_fitness(landscape, packed);
}

LandscapeDataset nk_to_dataset(const NKLandscape& landscape) {
  if (landscape.n > kMaxNkDatasetLoci) {
    throw ValidationError("nk_to_dataset: N must be at most " + std::to_string(kMaxNkDatasetLoci));
  }
  const std::size_t count = std::size_t{1} << landscape.n;
  const std::size_t width = id_width(count);
  const double unit = 1.0 / std::sqrt(static_cast<double>(landscape.n));
  const std::string tag = "nk-hypercube-" + std::to_string(landscape.n);

  std::vector<Prompt> prompts;
  std::vector<EmbeddingEntry> embeddings;
  std::vector<FitnessRecord> fitness;
  prompts.reserve(count);
  embeddings.reserve(count);
  fitness.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const auto packed = static_cast<std::uint32_t>(s);
    std::string id = padded("nk-", s, width);
    std::string text;
    std::vector<double> vec;
    for (int i = 0; i < landscape.n; ++i) {
      const bool one = (packed >> i) & 1u;
      text.push_back(one ? '1' : '0');
      vec.push_back(one ? unit : -unit);
    }
    prompts.push_back({id, std::move(text), Strategy::kExternal, std::nullopt});
    embeddings.push_back({id, std::move(vec), tag});
    fitness.push_back(scalar_fitness_record(id, nk_fitness(landscape, packed)));
  }
  return LandscapeDataset::make(std::move(prompts), std::move(embeddings), std::move(fitness));
}

std::vector<double> random_unit_vector(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ValidationError("random_unit_vector: dim must be positive");
  Rng rng(derive_seed({seed, 0x756e6974ULL}));
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    for (double& x : v) x = standard_normal(rng);
    n2 = dot(v, v);
  } while (n2 == 0.0);
  normalize(v);
  return v;
}

PlantedLandscape make_smooth_landscape(std::size_t dim, std::uint64_t seed) {
  PlantedLandscape land;
  land.kind = PlantedKind::kSmooth;
  land.dim = dim;
  land.seed = seed;
  land.target = random_unit_vector(dim, derive_seed({seed, 0x746172ULL}));
  return land;
}

PlantedLandscape make_rugged_landscape(std::size_t dim, double omega, std::uint64_t seed,
                                       std::size_t directions) {
  if (!(omega > 0.0)) throw ValidationError("rugged landscape: omega must be positive");
  if (directions == 0) throw ValidationError("rugged landscape: need at least one direction");
  PlantedLandscape land;
  land.kind = PlantedKind::kRugged;
  land.dim = dim;
  land.omega = omega;
  land.seed = seed;
  Rng rng(derive_seed({seed, 0x70686173ULL}));
  for (std::size_t i = 0; i < directions; ++i) {
    land.directions.push_back(random_unit_vector(dim, derive_seed({seed, 0x646972ULL, i})));
    land.phases.push_back(2.0 * std::numbers::pi * uniform01(rng));
  }
  return land;
}

double planted_fitness(const PlantedLandscape& landscape, std::span<const double> x) {
  if (x.size() != landscape.dim) {
    throw ValidationError("planted_fitness: expected length " + std::to_string(landscape.dim) +
                          ", got " + std::to_string(x.size()));
  }
  if (landscape.kind == PlantedKind::kSmooth) {
    return std::clamp(1.0 - cosine_distance(x, landscape.target) / 2.0, 0.0, 1.0);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < landscape.directions.size(); ++i) {
    s += std::sin(landscape.omega * dot(landscape.directions[i], x) + landscape.phases[i]);
  }
  s /= std::sqrt(static_cast<double>(landscape.directions.size()));
  return 1.0 / (1.0 + std::exp(-s));
}

std::vector<double> PlantedDataset::embed(std::string_view text) const {
  auto it = embedding_by_text.find(std::string(text));
  if (it == embedding_by_text.end()) {
    throw ValidationError("planted dataset has no prompt with text '" + std::string(text) + "'");
  }
  return it->second;
}

PlantedDataset planted_dataset(const PlantedLandscape& landscape, std::size_t n_points,
                               std::size_t dim, std::uint64_t seed) {
  if (n_points < 2) throw ValidationError("planted_dataset: need at least 2 points");
  if (dim != landscape.dim) {
    throw ValidationError("planted_dataset: dim " + std::to_string(dim) +
                          " does not match landscape dim " + std::to_string(landscape.dim));
  }
  const std::size_t width = id_width(n_points);
  const std::string tag = std::string(landscape.kind == PlantedKind::kSmooth ? "planted-smooth-"
                                                                             : "planted-rugged-") +
                          std::to_string(dim);
  PlantedDataset out;
  std::vector<Prompt> prompts;
  std::vector<EmbeddingEntry> embeddings;
  std::vector<FitnessRecord> fitness;
  for (std::size_t i = 0; i < n_points; ++i) {
    const std::string id = padded("pl-", i, width);
    std::string text = padded("planted prompt ", i, width);
    auto vec = random_unit_vector(dim, derive_seed({seed, 0x707473ULL, i}));
    fitness.push_back(scalar_fitness_record(id, planted_fitness(landscape, vec)));
    out.embedding_by_text.emplace(text, vec);
    prompts.push_back({id, std::move(text), Strategy::kExternal, std::nullopt});
    embeddings.push_back({id, std::move(vec), tag});
  }
  out.dataset = LandscapeDataset::make(std::move(prompts), std::move(embeddings), std::move(fitness));
  return out;
}

LandscapeDataset planted_trap_dataset(const TrapConfig& config) {
  if (config.trap_points == 0 || config.trap_points >= config.n_points) {
    throw ValidationError("trap dataset: trap_points must be in [1, n_points)");
  }
  if (!(config.trap_radius > 0.0 && config.trap_radius < 1.0) || !(config.isolation > 0.0)) {
    throw ValidationError("trap dataset: invalid radius or isolation");
  }
  if (!(config.trap_fitness_max > 0.0 && config.trap_fitness_max < 1.0)) {
    throw ValidationError("trap dataset: trap_fitness_max must be in (0, 1)");
  }
  const auto land = make_rugged_landscape(config.dim, config.omega, config.seed);
  const auto centre = random_unit_vector(config.dim, derive_seed({config.seed, 0x63656e74ULL}));
  const double max_angle = std::acos(1.0 - config.trap_radius);
  // Any point this far (in angle) from the centre is at least `isolation`
  // from every trap member.
  const double min_angle = std::acos(std::clamp(1.0 - config.isolation, -1.0, 1.0)) + max_angle;
  if (min_angle >= std::numbers::pi) throw ValidationError("trap dataset: isolation too large");

  Rng rng(derive_seed({config.seed, 0x74726170ULL}));
  std::vector<std::vector<double>> trap;
  for (std::size_t i = 0; i < config.trap_points; ++i) {
    auto g = random_unit_vector(config.dim, rng());
    const double along = dot(g, centre);
    for (std::size_t d = 0; d < config.dim; ++d) g[d] -= along * centre[d];
    normalize(g);
    const double angle = max_angle * uniform01(rng);
    std::vector<double> x(config.dim);
    for (std::size_t d = 0; d < config.dim; ++d) {
      x[d] = std::cos(angle) * centre[d] + std::sin(angle) * g[d];
    }
    normalize(x);
    trap.push_back(std::move(x));
  }

  std::vector<std::vector<double>> rest;
  while (rest.size() < config.n_points - config.trap_points) {
    auto x = random_unit_vector(config.dim, rng());
    if (std::acos(std::clamp(dot(x, centre), -1.0, 1.0)) < min_angle) continue;
    rest.push_back(std::move(x));
  }

  const std::size_t width = id_width(config.n_points);
  const std::string tag = "planted-trap-" + std::to_string(config.dim);
  std::vector<Prompt> prompts;
  std::vector<EmbeddingEntry> embeddings;
  std::vector<FitnessRecord> fitness;
  std::size_t index = 0;
  const auto add = [&](std::vector<double> x, double f) {
    const std::string id = padded("tr-", index, width);
    prompts.push_back({id, padded("trap prompt ", index, width), Strategy::kExternal, std::nullopt});
    fitness.push_back(scalar_fitness_record(id, f));
    embeddings.push_back({id, std::move(x), tag});
    ++index;
  };
  const double lift = config.trap_fitness_max;
  for (auto& x : trap) {
    const double f = config.trap_fitness_max * planted_fitness(land, x);
    add(std::move(x), f);
  }
  for (auto& x : rest) {
    const double f = lift + (1.0 - lift) * planted_fitness(land, x);
    add(std::move(x), f);
  }
  return LandscapeDataset::make(std::move(prompts), std::move(embeddings), std::move(fitness));
}

namespace {

struct CaseTemplate {
  Category category;
  const char* correct;
  const char* erroneous;
  const char* description;
};

// "{n}" is replaced by a case-specific number so every statement is unique.
constexpr CaseTemplate kTemplates[] = {
    {Category::kLexical, "Shipment {n} arrived early, so the warehouse staff were pleased.",
     "Shipment {n} arrived early, so the warehouse staff were bereaved.",
     "'bereaved' is the wrong word; the context calls for 'pleased'."},
    {Category::kGrammatical, "The {n} volunteers were planting trees along the river.",
     "The {n} volunteers was planting trees along the river.",
     "Subject-verb agreement: plural subject takes 'were', not 'was'."},
    {Category::kLogic, "Every one of the {n} boxes is red, so any box you pick is red.",
     "Every one of the {n} boxes is red, so any box you pick is blue.",
     "The conclusion contradicts the premise that all boxes are red."},
    {Category::kOrthographic, "Room {n} needs a separate entrance for deliveries.",
     "Room {n} needs a seperate entrance for deliveries.",
     "'seperate' is misspelled; the correct spelling is 'separate'."},
    {Category::kOmission, "To reach floor {n}, press the button and then wait for the lift.",
     "To reach floor {n}, press the and then wait for the lift.",
     "The object 'button' is missing after 'press the'."},
    {Category::kAddition, "Order {n} was delivered on Monday.",
     "Order {n} was delivered on Monday, and penguins cannot fly.",
     "The clause about penguins is irrelevant information added to the statement."},
    {Category::kMathematical, "Adding {n} and {n} gives {2n}.", "Adding {n} and {n} gives {2n+1}.",
     "The sum is off by one; {n} + {n} equals {2n}."},
    {Category::kProgramming, "In Python, len([0] * {n}) evaluates to {n}.",
     "In Python, len([0] * {n}) evaluates to {n+1}.",
     "Repeating a one-element list {n} times yields length {n}, not {n+1}."},
    {Category::kPhysics, "A stone dropped from {n} metres falls toward the ground.",
     "A stone dropped from {n} metres falls upward away from the ground.",
     "Gravity pulls a dropped stone down; it cannot fall upward."},
    {Category::kFactual, "Water boils at 100 degrees Celsius at sea level, as noted in report {n}.",
     "Water boils at 50 degrees Celsius at sea level, as noted in report {n}.",
     "At sea level water boils at 100 degrees Celsius, not 50."},
};

std::string fill(std::string_view text, long n) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, 3, "{n}") == 0) {
      out += std::to_string(n);
      i += 3;
    } else if (text.compare(i, 4, "{2n}") == 0) {
      out += std::to_string(2 * n);
      i += 4;
    } else if (text.compare(i, 6, "{2n+1}") == 0) {
      out += std::to_string(2 * n + 1);
      i += 6;
    } else if (text.compare(i, 5, "{n+1}") == 0) {
      out += std::to_string(n + 1);
      i += 5;
    } else {
      out += text[i++];
    }
  }
  return out;
}

}  // namespace

std::vector<TestCase> synthetic_test_cases(std::size_t per_category) {
  std::vector<TestCase> cases;
  for (const auto& t : kTemplates) {
    for (std::size_t j = 0; j < per_category; ++j) {
      const long n = 3 + 7 * static_cast<long>(j);
      std::string seq = std::to_string(j);
      if (seq.size() < 2) seq.insert(0, 2 - seq.size(), '0');
      cases.push_back({"tc-" + std::string(category_name(t.category)) + "-" + seq, t.category,
                       fill(t.correct, n), fill(t.erroneous, n), fill(t.description, n)});
    }
  }
  return cases;
}

}  // namespace promptscape
