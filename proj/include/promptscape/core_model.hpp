#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptscape {

// The ten error categories, in canonical order. Bit i of a category mask
// refers to the category with underlying value i.
enum class Category : std::uint8_t {
  kLexical = 0,
  kGrammatical,
  kLogic,
  kOrthographic,
  kOmission,
  kAddition,
  kMathematical,
  kProgramming,
  kPhysics,
  kFactual,
};

inline constexpr std::size_t kNumCategories = 10;
inline constexpr std::uint16_t kFullCategoryMask = (1u << kNumCategories) - 1;

const std::array<Category, kNumCategories>& all_categories();
std::string_view category_name(Category c);
Category parse_category(std::string_view name);  // throws ValidationError

enum class Strategy : std::uint8_t { kSystematic, kNovelty, kExternal };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct Prompt {
  std::string id;
  std::string text;
  Strategy strategy = Strategy::kExternal;
  std::optional<std::uint16_t> category_mask;  // present iff strategy is systematic

  bool operator==(const Prompt&) const = default;
};

// Throws ValidationError if the mask/strategy pairing or mask range is wrong.
void validate(const Prompt& p);

struct TestCase {
  std::string id;
  Category category = Category::kLexical;
  std::string correct_statement;
  std::string erroneous_statement;
  std::string error_description;

  bool operator==(const TestCase&) const = default;
};

void validate(const TestCase& c);

// Fractional confusion tallies. A score-0 trial spreads its unit weight as
// 0.25 into every cell, so the fields are reals.
struct ConfusionCounts {
  double tp = 0.0;
  double tn = 0.0;
  double fp = 0.0;
  double fn = 0.0;

  double total() const noexcept { return tp + tn + fp + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) noexcept {
    return a += b;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct FitnessRecord {
  std::string prompt_id;
  ConfusionCounts overall;
  std::map<Category, ConfusionCounts> per_category;
  double accuracy = 0.0;
  std::map<Category, double> per_category_accuracy;

  bool operator==(const FitnessRecord&) const = default;
};

// A record for a landscape whose fitness is a bare value in [0, 1] rather
// than the outcome of scored trials (synthetic landscapes).
FitnessRecord scalar_fitness_record(std::string prompt_id, double fitness);

void validate(const FitnessRecord& r);

struct EmbeddingEntry {
  std::string prompt_id;
  std::vector<double> vector;
  std::string model_tag;

  bool operator==(const EmbeddingEntry&) const = default;
};

void validate(const EmbeddingEntry& e);

enum class AlignMode { kStrict, kIntersect };

// Prompts, embeddings and fitness keyed by one id set, each sorted by id so
// index i refers to the same prompt in all three sequences. Immutable once
// built.
class LandscapeDataset {
 public:
  LandscapeDataset() = default;

  // Sorts by id and validates every invariant; strict alignment only.
  static LandscapeDataset make(std::vector<Prompt> prompts, std::vector<EmbeddingEntry> embeddings,
                               std::vector<FitnessRecord> fitness);

  std::size_t size() const noexcept { return prompts_.size(); }
  bool empty() const noexcept { return prompts_.empty(); }

  const std::vector<Prompt>& prompts() const noexcept { return prompts_; }
  const std::vector<EmbeddingEntry>& embeddings() const noexcept { return embeddings_; }
  const std::vector<FitnessRecord>& fitness() const noexcept { return fitness_; }

  const std::string& id(std::size_t i) const { return prompts_.at(i).id; }
  std::optional<std::size_t> index_of(std::string_view id) const;
  std::size_t dimension() const noexcept {
    return embeddings_.empty() ? 0 : embeddings_.front().vector.size();
  }

  // Overall accuracy per prompt, in dataset order.
  std::vector<double> accuracies() const;
  // Per-category accuracy; throws ValidationError if any record lacks it.
  std::vector<double> accuracies(Category c) const;

  bool operator==(const LandscapeDataset&) const = default;

 private:
  std::vector<Prompt> prompts_;
  std::vector<EmbeddingEntry> embeddings_;
  std::vector<FitnessRecord> fitness_;
};

struct LoadResult {
  LandscapeDataset dataset;
  std::vector<std::string> dropped_ids;  // intersect mode only, sorted
};

struct DatasetPaths {
  std::filesystem::path prompts;
  std::filesystem::path embeddings;
  std::filesystem::path fitness;

  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

LoadResult load_dataset(const DatasetPaths& paths, AlignMode mode = AlignMode::kStrict);

// Writes prompts.jsonl, embeddings.jsonl and fitness.jsonl sorted by id.
DatasetPaths save_dataset(const LandscapeDataset& dataset, const std::filesystem::path& directory);

// Per-file readers and writers. Readers report malformed lines as
// ParseError("path:line: reason") and reject duplicate ids.
std::vector<Prompt> read_prompts(const std::filesystem::path& path);
std::vector<EmbeddingEntry> read_embeddings(const std::filesystem::path& path);
std::vector<FitnessRecord> read_fitness(const std::filesystem::path& path);
std::vector<TestCase> read_testcases(const std::filesystem::path& path);

void write_prompts(const std::filesystem::path& path, const std::vector<Prompt>& prompts);
void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingEntry>& entries);
void write_fitness(const std::filesystem::path& path, const std::vector<FitnessRecord>& records);
void write_testcases(const std::filesystem::path& path, const std::vector<TestCase>& cases);

// Single-line JSON encodings, exposed for the resume ledger and tests.
std::string to_json_line(const Prompt& p);
std::string to_json_line(const EmbeddingEntry& e);
std::string to_json_line(const FitnessRecord& r);
std::string to_json_line(const TestCase& c);
FitnessRecord fitness_from_json_line(std::string_view line);

// Shortest decimal that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace promptscape
