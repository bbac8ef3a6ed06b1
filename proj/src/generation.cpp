#include "promptscape/generation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <sstream>

#include "promptscape/embedding_space.hpp"
#include "promptscape/error.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

namespace {

constexpr std::array<std::string_view, kNumCategories> kDisplayNames = {
    "word choice",      "grammatical", "logic",       "spelling", "content omission",
    "content addition", "mathematical", "programming", "physics",  "factual",
};

struct SynonymGroup {
  std::string_view words[4];
};

// Words within a group are interchangeable; empty slots end a group.
constexpr SynonymGroup kSynonyms[] = {
    {{"check", "verify", "examine", "inspect"}},
    {{"statement", "claim", "sentence", "text"}},
    {{"errors", "mistakes", "issues", "problems"}},
    {{"error", "mistake", "issue", "flaw"}},
    {{"helpful", "useful", "careful", "diligent"}},
    {{"assistant", "helper", "reviewer", "proofreader"}},
    {{"next", "following", "given", "provided"}},
    {{"identify", "find", "detect", "spot"}},
    {{"carefully", "thoroughly", "closely", "attentively"}},
    {{"pay", "give", "devote", ""}},
    {{"attention", "focus", "care", ""}},
};

constexpr std::string_view kInsertions[] = {
    "carefully", "please",   "thoroughly", "precisely", "always", "critically",
    "closely",   "any",      "subtle",     "possible",  "every",  "explicitly",
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Splits a word into its alphabetic core and trailing punctuation.
std::pair<std::string, std::string> split_core(const std::string& word) {
  std::size_t end = word.size();
  while (end > 0 && !std::isalnum(static_cast<unsigned char>(word[end - 1]))) --end;
  return {word.substr(0, end), word.substr(end)};
}

const SynonymGroup* synonym_group(const std::string& core) {
  const std::string key = lower(core);
  for (const auto& g : kSynonyms) {
    for (auto w : g.words) {
      if (!w.empty() && w == key) return &g;
    }
  }
  return nullptr;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

enum class Edit { kSynonym, kInsert, kDelete, kSwap };

bool try_edit(Edit edit, std::vector<std::string>& words, Rng& rng) {
  switch (edit) {
    case Edit::kSynonym: {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (synonym_group(split_core(words[i]).first)) candidates.push_back(i);
      }
      if (candidates.empty()) return false;
      const std::size_t at = candidates[uniform_index(rng, candidates.size())];
      auto [core, suffix] = split_core(words[at]);
      const SynonymGroup& g = *synonym_group(core);
      std::vector<std::string_view> options;
      for (auto w : g.words) {
        if (!w.empty() && w != lower(core)) options.push_back(w);
      }
      std::string replacement(options[uniform_index(rng, options.size())]);
      if (!core.empty() && std::isupper(static_cast<unsigned char>(core[0]))) {
        replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
      }
      words[at] = replacement + suffix;
      return true;
    }
    case Edit::kInsert: {
      const std::size_t at = uniform_index(rng, words.size() + 1);
      const auto word = kInsertions[uniform_index(rng, std::size(kInsertions))];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), std::string(word));
      return true;
    }
    case Edit::kDelete: {
      if (words.size() < 2) return false;
      words.erase(words.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, words.size())));
      return true;
    }
    case Edit::kSwap: {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        if (words[i] != words[i + 1]) candidates.push_back(i);
      }
      if (candidates.empty()) return false;
      const std::size_t at = candidates[uniform_index(rng, candidates.size())];
      std::swap(words[at], words[at + 1]);
      return true;
    }
  }
  return false;
}

std::string padded_id(std::string_view prefix, std::size_t index, std::size_t width) {
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(prefix) + digits;
}

template <typename F>
auto with_retries(F&& call, std::string_view what) -> decltype(call(0)) {
  std::string last;
  for (int attempt = 0; attempt <= kPortRetries; ++attempt) {
    try {
      return call(attempt);
    } catch (const std::exception& e) {
      last = e.what();
    }
  }
  throw BackendError(std::string(what) + " failed after " + std::to_string(kPortRetries) +
                     " retries: " + last);
}

}  // namespace

std::string_view category_display_name(Category c) {
  return kDisplayNames.at(static_cast<std::size_t>(c));
}

std::string render_systematic_prompt(std::uint16_t mask) {
  mask &= kFullCategoryMask;
  if (mask == 0) return std::string(kSystematicBase) + ".";
  std::vector<std::string_view> names;
  for (Category c : all_categories()) {
    if (mask & (1u << static_cast<unsigned>(c))) names.push_back(category_display_name(c));
  }
  std::string clause;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) clause += (i + 1 == names.size()) ? " and " : ", ";
    clause += names[i];
  }
  return std::string(kSystematicBase) + ", pay attention to " + clause + " errors";
}

std::vector<Prompt> enumerate_systematic() {
  std::vector<Prompt> prompts;
  prompts.reserve(kFullCategoryMask + 1);
  for (std::uint16_t mask = 0; mask <= kFullCategoryMask; ++mask) {
    prompts.push_back({padded_id("sys-", mask, 4), render_systematic_prompt(mask),
                       Strategy::kSystematic, mask});
  }
  return prompts;
}

double novelty_score(std::span<const double> candidate,
                     std::span<const std::vector<double>> reservoir, std::size_t k) {
  if (reservoir.empty()) throw ValidationError("novelty_score: empty reservoir");
  if (k == 0) throw ValidationError("novelty_score: k must be positive");
  std::vector<double> d;
  d.reserve(reservoir.size());
  for (const auto& member : reservoir) d.push_back(cosine_distance(candidate, member));
  const std::size_t take = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += d[i];
  return sum / static_cast<double>(take);
}

void validate(const NoveltyConfig& config) {
  if (config.rounds == 0) throw ValidationError("novelty: rounds must be positive");
  if (config.reservoir_cap == 0) throw ValidationError("novelty: reservoir cap must be positive");
  if (config.k == 0) throw ValidationError("novelty: k must be positive");
  if (config.k >= config.reservoir_cap) {
    throw ValidationError("novelty: k must be smaller than the reservoir cap");
  }
}

NoveltyOutcome novelty_search(const Prompt& seed_prompt, const NoveltyConfig& config,
                              const VariationPort& vary, const EmbeddingPort& embed,
                              const NoveltyObserver& observer) {
  validate(config);
  NoveltyOutcome outcome;
  NoveltyArchive& archive = outcome.archive;
  // Mirror of reservoir embeddings for novelty_score.
  std::vector<std::vector<double>> vectors;

  try {
    auto seed_vec = with_retries([&](int) { return embed(seed_prompt.text); }, "embedding");
    vectors.push_back(seed_vec);
    archive.reservoir.push_back({seed_prompt, std::move(seed_vec), 0.0});
  } catch (const Error& e) {
    outcome.error = e.what();
    return outcome;
  }

  Rng rng(derive_seed({config.seed, 0x6e6f76656c7479ULL}));
  const std::size_t width = std::max<std::size_t>(4, std::to_string(config.rounds - 1).size());
  archive.all_generated.reserve(config.rounds);

  for (std::size_t round = 0; round < config.rounds; ++round) {
    const auto& parent = archive.reservoir[uniform_index(rng, archive.reservoir.size())];
    const std::uint64_t variation_seed = rng();

    Prompt candidate;
    std::vector<double> vec;
    try {
      candidate.text = with_retries(
          [&](int attempt) {
            auto text = vary(parent.prompt.text, variation_seed + static_cast<std::uint64_t>(attempt));
            if (text.empty()) throw BackendError("variation returned empty text");
            return text;
          },
          "variation");
      vec = with_retries([&](int) { return embed(candidate.text); }, "embedding");
    } catch (const Error& e) {
      outcome.error = "round " + std::to_string(round) + ": " + e.what();
      return outcome;
    }
    candidate.id = padded_id("nov-", round, width);
    candidate.strategy = Strategy::kNovelty;

    const double novelty = novelty_score(vec, vectors, config.k);
    archive.all_generated.push_back(candidate);

    if (archive.reservoir.size() < config.reservoir_cap) {
      vectors.push_back(vec);
      archive.reservoir.push_back({std::move(candidate), std::move(vec), novelty});
    } else {
      std::size_t least = 0;
      for (std::size_t i = 1; i < archive.reservoir.size(); ++i) {
        const auto& a = archive.reservoir[i];
        const auto& b = archive.reservoir[least];
        if (a.novelty < b.novelty || (a.novelty == b.novelty && a.prompt.id < b.prompt.id)) {
          least = i;
        }
      }
      if (novelty > archive.reservoir[least].novelty) {
        vectors[least] = vec;
        archive.reservoir[least] = {std::move(candidate), std::move(vec), novelty};
        ++outcome.replacements;
      }
    }
    outcome.rounds_completed = round + 1;
    if (observer) observer(round, archive);
  }
  return outcome;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(std::move(w));
  return words;
}

std::string rule_based_variation(std::string_view parent, std::uint64_t seed) {
  auto words = split_words(parent);
  if (words.empty()) throw ValidationError("rule_based_variation: empty parent");
  Rng rng(derive_seed({seed, 0x76617279ULL}));
  const auto first = static_cast<int>(uniform_index(rng, 4));
  for (int offset = 0; offset < 4; ++offset) {
    const auto edit = static_cast<Edit>((first + offset) % 4);
    if (try_edit(edit, words, rng)) break;
  }
  return join(words);
}

}  // namespace promptscape
