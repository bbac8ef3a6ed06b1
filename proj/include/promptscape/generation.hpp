#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptscape/core_model.hpp"

namespace promptscape {

inline constexpr std::string_view kSystematicBase = "You are a helpful assistant, check the next statement";

// Human-readable name used inside the systematic template.
std::string_view category_display_name(Category c);

std::string render_systematic_prompt(std::uint16_t mask);

// All 1024 masks in ascending order, ids "sys-0000" .. "sys-1023".
std::vector<Prompt> enumerate_systematic();

// Mean cosine distance from `candidate` to its min(k, |reservoir|) nearest
// reservoir vectors.
double novelty_score(std::span<const double> candidate,
                     std::span<const std::vector<double>> reservoir, std::size_t k);

struct NoveltyConfig {
  std::size_t rounds = 1000;
  std::size_t reservoir_cap = 256;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

void validate(const NoveltyConfig& config);

// Produces a variation of `parent`; `seed` is drawn per call from the search
// RNG. Failures are reported by throwing.
using VariationPort = std::function<std::string(std::string_view parent, std::uint64_t seed)>;
using EmbeddingPort = std::function<std::vector<double>(std::string_view text)>;

struct ReservoirMember {
  Prompt prompt;
  std::vector<double> embedding;
  double novelty = 0.0;  // score at insertion time
};

struct NoveltyArchive {
  std::vector<ReservoirMember> reservoir;
  std::vector<Prompt> all_generated;  // every candidate, in generation order
};

// Hook invoked after each round with the round index (0-based) and the
// current archive. Lets tests observe the reservoir between iterations.
using NoveltyObserver = std::function<void(std::size_t round, const NoveltyArchive&)>;

struct NoveltyOutcome {
  NoveltyArchive archive;
  std::size_t rounds_completed = 0;
  std::size_t replacements = 0;
  std::optional<std::string> error;  // set when a port failed after retries

  bool ok() const noexcept { return !error.has_value(); }
};

inline constexpr int kPortRetries = 3;

// Reservoir-based novelty search. Candidate ids are "nov-0000", "nov-0001",
// ... in generation order; the seed prompt keeps its own id and enters the
// reservoir with novelty 0.
NoveltyOutcome novelty_search(const Prompt& seed_prompt, const NoveltyConfig& config,
                              const VariationPort& vary, const EmbeddingPort& embed,
                              const NoveltyObserver& observer = {});

// Offline single-edit mutation: synonym swap, insertion, deletion, or
// adjacent swap, chosen by a seeded RNG.
std::string rule_based_variation(std::string_view parent, std::uint64_t seed);

// Whitespace-separated words.
std::vector<std::string> split_words(std::string_view text);

}  // namespace promptscape
