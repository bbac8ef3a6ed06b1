#include "promptscape/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "promptscape/error.hpp"

namespace promptscape {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "lexical",  "grammatical", "logic",       "orthographic", "omission",
    "addition", "mathematical", "programming", "physics",      "factual",
};

// Field-wise tolerance when checking that per-category counts close.
constexpr double kClosureTolerance = 1e-9;

bool counts_valid(const ConfusionCounts& c) {
  for (double v : {c.tp, c.tn, c.fp, c.fn}) {
    if (!std::isfinite(v) || v < 0.0) return false;
  }
  return true;
}

ojson counts_json(const ConfusionCounts& c) {
  ojson j;
  j["tp"] = c.tp;
  j["tn"] = c.tn;
  j["fp"] = c.fp;
  j["fn"] = c.fn;
  return j;
}

ConfusionCounts counts_from_json(const ojson& j) {
  ConfusionCounts c;
  c.tp = j.at("tp").get<double>();
  c.tn = j.at("tn").get<double>();
  c.fp = j.at("fp").get<double>();
  c.fn = j.at("fn").get<double>();
  return c;
}

Prompt prompt_from_json(const ojson& j) {
  Prompt p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.strategy = parse_strategy(j.at("strategy").get<std::string>());
  if (auto it = j.find("category_mask"); it != j.end() && !it->is_null()) {
    const auto mask = it->get<std::int64_t>();
    if (mask < 0 || mask > kFullCategoryMask) {
      throw ValidationError("category_mask out of range: " + std::to_string(mask));
    }
    p.category_mask = static_cast<std::uint16_t>(mask);
  }
  return p;
}

EmbeddingEntry embedding_from_json(const ojson& j) {
  EmbeddingEntry e;
  e.prompt_id = j.at("prompt_id").get<std::string>();
  e.model_tag = j.at("model_tag").get<std::string>();
  e.vector = j.at("vector").get<std::vector<double>>();
  return e;
}

FitnessRecord fitness_from_json(const ojson& j) {
  FitnessRecord r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.overall = counts_from_json(j.at("confusion"));
  if (auto it = j.find("per_category"); it != j.end()) {
    for (const auto& [name, value] : it->items()) {
      const Category c = parse_category(name);
      r.per_category[c] = counts_from_json(value);
      r.per_category_accuracy[c] = value.at("accuracy").get<double>();
    }
  }
  return r;
}

TestCase testcase_from_json(const ojson& j) {
  TestCase c;
  c.id = j.at("id").get<std::string>();
  c.category = parse_category(j.at("category").get<std::string>());
  c.correct_statement = j.at("correct_statement").get<std::string>();
  c.erroneous_statement = j.at("erroneous_statement").get<std::string>();
  c.error_description = j.at("error_description").get<std::string>();
  return c;
}

// Parses one JSON object per non-blank line, validating each and rejecting
// duplicate keys.
template <typename T, typename Decode, typename Key>
std::vector<T> read_jsonl(const fs::path& path, Decode decode, Key key) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<T> out;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    T value;
    try {
      value = decode(ojson::parse(line));
      validate(value);
    } catch (const ojson::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
    const std::string& k = key(value);
    if (auto [it, inserted] = seen.emplace(k, lineno); !inserted) {
      throw ParseError(path.string(), lineno,
                       "duplicate id '" + k + "' (first seen on line " +
                           std::to_string(it->second) + ")");
    }
    out.push_back(std::move(value));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return out;
}

template <typename T>
void write_lines(const fs::path& path, const std::vector<T>& items) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& item : items) out << to_json_line(item) << '\n';
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

template <typename T, typename Key>
void sort_by(std::vector<T>& v, Key key) {
  std::sort(v.begin(), v.end(), [&](const T& a, const T& b) { return key(a) < key(b); });
}

const std::string& prompt_key(const Prompt& p) { return p.id; }
const std::string& embedding_key(const EmbeddingEntry& e) { return e.prompt_id; }
const std::string& fitness_key(const FitnessRecord& r) { return r.prompt_id; }

template <typename T, typename Key>
void require_unique(const std::vector<T>& v, Key key, std::string_view what) {
  std::unordered_set<std::string_view> seen;
  for (const auto& item : v) {
    if (!seen.insert(key(item)).second) {
      throw ValidationError("duplicate " + std::string(what) + " id '" + key(item) + "'");
    }
  }
}

}  // namespace

const std::array<Category, kNumCategories>& all_categories() {
  static const std::array<Category, kNumCategories> all = [] {
    std::array<Category, kNumCategories> a{};
    for (std::size_t i = 0; i < kNumCategories; ++i) a[i] = static_cast<Category>(i);
    return a;
  }();
  return all;
}

std::string_view category_name(Category c) {
  return kCategoryNames.at(static_cast<std::size_t>(c));
}

Category parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  throw ValidationError("unknown category '" + std::string(name) + "'");
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kSystematic: return "systematic";
    case Strategy::kNovelty: return "novelty";
    case Strategy::kExternal: return "external";
  }
  return "external";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "systematic") return Strategy::kSystematic;
  if (name == "novelty") return Strategy::kNovelty;
  if (name == "external") return Strategy::kExternal;
  throw ValidationError("unknown strategy '" + std::string(name) + "'");
}

void validate(const Prompt& p) {
  if (p.id.empty()) throw ValidationError("prompt id is empty");
  const bool systematic = p.strategy == Strategy::kSystematic;
  if (systematic != p.category_mask.has_value()) {
    throw ValidationError("prompt '" + p.id +
                          "': category_mask must be present exactly when strategy is systematic");
  }
  if (p.category_mask && *p.category_mask > kFullCategoryMask) {
    throw ValidationError("prompt '" + p.id + "': category_mask exceeds 10 bits");
  }
}

void validate(const TestCase& c) {
  if (c.id.empty()) throw ValidationError("test case id is empty");
  if (c.correct_statement == c.erroneous_statement) {
    throw ValidationError("test case '" + c.id + "': correct and erroneous statements are equal");
  }
  if (static_cast<std::size_t>(c.category) >= kNumCategories) {
    throw ValidationError("test case '" + c.id + "': invalid category");
  }
}

FitnessRecord scalar_fitness_record(std::string prompt_id, double fitness) {
  if (!(fitness >= 0.0 && fitness <= 1.0)) {
    throw ValidationError("fitness for '" + prompt_id + "' outside [0, 1]");
  }
  FitnessRecord r;
  r.prompt_id = std::move(prompt_id);
  r.overall.tp = fitness;
  r.overall.fp = 1.0 - fitness;
  r.accuracy = fitness;
  return r;
}

void validate(const FitnessRecord& r) {
  const std::string who = "fitness record '" + r.prompt_id + "'";
  if (r.prompt_id.empty()) throw ValidationError("fitness record prompt_id is empty");
  if (!counts_valid(r.overall)) throw ValidationError(who + ": negative or non-finite counts");
  if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) {
    throw ValidationError(who + ": accuracy outside [0, 1]");
  }
  const double total = r.overall.total();
  if (total > 0.0 && std::abs(r.accuracy - (r.overall.tp + r.overall.tn) / total) > 1e-12) {
    throw ValidationError(who + ": accuracy disagrees with confusion counts");
  }
  if (r.per_category.empty()) {
    if (!r.per_category_accuracy.empty()) {
      throw ValidationError(who + ": per-category accuracy without counts");
    }
    return;
  }
  ConfusionCounts sum;
  for (const auto& [cat, counts] : r.per_category) {
    if (!counts_valid(counts)) throw ValidationError(who + ": negative per-category counts");
    auto acc = r.per_category_accuracy.find(cat);
    if (acc == r.per_category_accuracy.end() || !(acc->second >= 0.0 && acc->second <= 1.0)) {
      throw ValidationError(who + ": missing or invalid accuracy for category " +
                            std::string(category_name(cat)));
    }
    sum += counts;
  }
  if (r.per_category_accuracy.size() != r.per_category.size()) {
    throw ValidationError(who + ": per-category accuracy keys differ from counts");
  }
  const auto close = [](double a, double b) { return std::abs(a - b) <= kClosureTolerance; };
  if (!close(sum.tp, r.overall.tp) || !close(sum.tn, r.overall.tn) ||
      !close(sum.fp, r.overall.fp) || !close(sum.fn, r.overall.fn)) {
    throw ValidationError(who + ": overall counts differ from the per-category sum");
  }
}

void validate(const EmbeddingEntry& e) {
  if (e.prompt_id.empty()) throw ValidationError("embedding prompt_id is empty");
  if (e.vector.empty()) throw ValidationError("embedding '" + e.prompt_id + "' is empty");
  bool nonzero = false;
  for (double v : e.vector) {
    if (!std::isfinite(v)) {
      throw ValidationError("embedding '" + e.prompt_id + "' has a non-finite entry");
    }
    nonzero = nonzero || v != 0.0;
  }
  if (!nonzero) throw ValidationError("embedding '" + e.prompt_id + "' is the zero vector");
}

LandscapeDataset LandscapeDataset::make(std::vector<Prompt> prompts,
                                        std::vector<EmbeddingEntry> embeddings,
                                        std::vector<FitnessRecord> fitness) {
  for (const auto& p : prompts) validate(p);
  for (const auto& e : embeddings) validate(e);
  for (const auto& r : fitness) validate(r);
  require_unique(prompts, prompt_key, "prompt");
  require_unique(embeddings, embedding_key, "embedding");
  require_unique(fitness, fitness_key, "fitness");

  sort_by(prompts, prompt_key);
  sort_by(embeddings, embedding_key);
  sort_by(fitness, fitness_key);

  if (prompts.size() != embeddings.size() || prompts.size() != fitness.size()) {
    throw ValidationError("alignment error: " + std::to_string(prompts.size()) + " prompts, " +
                          std::to_string(embeddings.size()) + " embeddings, " +
                          std::to_string(fitness.size()) + " fitness records");
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].id != embeddings[i].prompt_id || prompts[i].id != fitness[i].prompt_id) {
      throw ValidationError("alignment error near id '" + prompts[i].id +
                            "': id sets of prompts, embeddings and fitness differ");
    }
  }
  if (!embeddings.empty()) {
    const auto& first = embeddings.front();
    for (const auto& e : embeddings) {
      if (e.vector.size() != first.vector.size()) {
        throw ValidationError("vector length mismatch: '" + e.prompt_id + "' has " +
                              std::to_string(e.vector.size()) + ", expected " +
                              std::to_string(first.vector.size()));
      }
      if (e.model_tag != first.model_tag) {
        throw ValidationError("model_tag mismatch: '" + e.prompt_id + "' has '" + e.model_tag +
                              "', expected '" + first.model_tag + "'");
      }
    }
  }

  LandscapeDataset d;
  d.prompts_ = std::move(prompts);
  d.embeddings_ = std::move(embeddings);
  d.fitness_ = std::move(fitness);
  return d;
}

std::optional<std::size_t> LandscapeDataset::index_of(std::string_view id) const {
  auto it = std::lower_bound(prompts_.begin(), prompts_.end(), id,
                             [](const Prompt& p, std::string_view key) { return p.id < key; });
  if (it == prompts_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - prompts_.begin());
}

std::vector<double> LandscapeDataset::accuracies() const {
  std::vector<double> out;
  out.reserve(fitness_.size());
  for (const auto& r : fitness_) out.push_back(r.accuracy);
  return out;
}

std::vector<double> LandscapeDataset::accuracies(Category c) const {
  std::vector<double> out;
  out.reserve(fitness_.size());
  for (const auto& r : fitness_) {
    auto it = r.per_category_accuracy.find(c);
    if (it == r.per_category_accuracy.end()) {
      throw ValidationError("fitness record '" + r.prompt_id + "' has no accuracy for category " +
                            std::string(category_name(c)));
    }
    out.push_back(it->second);
  }
  return out;
}

DatasetPaths DatasetPaths::in_directory(const fs::path& dir) {
  return {dir / "prompts.jsonl", dir / "embeddings.jsonl", dir / "fitness.jsonl"};
}

LoadResult load_dataset(const DatasetPaths& paths, AlignMode mode) {
  auto prompts = read_prompts(paths.prompts);
  auto embeddings = read_embeddings(paths.embeddings);
  auto fitness = read_fitness(paths.fitness);

  LoadResult result;
  if (mode == AlignMode::kIntersect) {
    std::set<std::string> common;
    for (const auto& p : prompts) common.insert(p.id);
    std::set<std::string> in_embeddings, in_fitness;
    for (const auto& e : embeddings) in_embeddings.insert(e.prompt_id);
    for (const auto& r : fitness) in_fitness.insert(r.prompt_id);

    std::set<std::string> all = common;
    all.insert(in_embeddings.begin(), in_embeddings.end());
    all.insert(in_fitness.begin(), in_fitness.end());
    std::erase_if(common, [&](const std::string& id) {
      return !in_embeddings.contains(id) || !in_fitness.contains(id);
    });
    if (common.empty()) throw ValidationError("alignment error: empty id intersection");
    for (const auto& id : all) {
      if (!common.contains(id)) result.dropped_ids.push_back(id);
    }
    std::erase_if(prompts, [&](const Prompt& p) { return !common.contains(p.id); });
    std::erase_if(embeddings, [&](const EmbeddingEntry& e) { return !common.contains(e.prompt_id); });
    std::erase_if(fitness, [&](const FitnessRecord& r) { return !common.contains(r.prompt_id); });
  }
  result.dataset = LandscapeDataset::make(std::move(prompts), std::move(embeddings), std::move(fitness));
  return result;
}

DatasetPaths save_dataset(const LandscapeDataset& dataset, const fs::path& directory) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  const auto paths = DatasetPaths::in_directory(directory);
  write_prompts(paths.prompts, dataset.prompts());
  write_embeddings(paths.embeddings, dataset.embeddings());
  write_fitness(paths.fitness, dataset.fitness());
  return paths;
}

std::vector<Prompt> read_prompts(const fs::path& path) {
  return read_jsonl<Prompt>(path, prompt_from_json, prompt_key);
}

std::vector<EmbeddingEntry> read_embeddings(const fs::path& path) {
  auto entries = read_jsonl<EmbeddingEntry>(path, embedding_from_json, embedding_key);
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].vector.size() != entries[0].vector.size()) {
      throw ValidationError(path.string() + ": vector length mismatch for '" +
                            entries[i].prompt_id + "' (" + std::to_string(entries[i].vector.size()) +
                            " vs " + std::to_string(entries[0].vector.size()) + ")");
    }
  }
  return entries;
}

std::vector<FitnessRecord> read_fitness(const fs::path& path) {
  return read_jsonl<FitnessRecord>(path, fitness_from_json, fitness_key);
}

std::vector<TestCase> read_testcases(const fs::path& path) {
  return read_jsonl<TestCase>(path, testcase_from_json, [](const TestCase& c) -> const std::string& {
    return c.id;
  });
}

void write_prompts(const fs::path& path, const std::vector<Prompt>& prompts) {
  auto sorted = prompts;
  sort_by(sorted, prompt_key);
  write_lines(path, sorted);
}

void write_embeddings(const fs::path& path, const std::vector<EmbeddingEntry>& entries) {
  auto sorted = entries;
  sort_by(sorted, embedding_key);
  write_lines(path, sorted);
}

void write_fitness(const fs::path& path, const std::vector<FitnessRecord>& records) {
  auto sorted = records;
  sort_by(sorted, fitness_key);
  write_lines(path, sorted);
}

void write_testcases(const fs::path& path, const std::vector<TestCase>& cases) {
  auto sorted = cases;
  sort_by(sorted, [](const TestCase& c) -> const std::string& { return c.id; });
  write_lines(path, sorted);
}

std::string to_json_line(const Prompt& p) {
  ojson j;
  j["id"] = p.id;
  j["text"] = p.text;
  j["strategy"] = strategy_name(p.strategy);
  j["category_mask"] = p.category_mask ? ojson(*p.category_mask) : ojson(nullptr);
  return j.dump();
}

std::string to_json_line(const EmbeddingEntry& e) {
  ojson j;
  j["prompt_id"] = e.prompt_id;
  j["model_tag"] = e.model_tag;
  j["vector"] = e.vector;
  return j.dump();
}

std::string to_json_line(const FitnessRecord& r) {
  ojson j;
  j["prompt_id"] = r.prompt_id;
  j["accuracy"] = r.accuracy;
  j["confusion"] = counts_json(r.overall);
  ojson per = ojson::object();
  for (const auto& [cat, counts] : r.per_category) {
    ojson c = counts_json(counts);
    c["accuracy"] = r.per_category_accuracy.at(cat);
    per[std::string(category_name(cat))] = std::move(c);
  }
  j["per_category"] = std::move(per);
  return j.dump();
}

std::string to_json_line(const TestCase& c) {
  ojson j;
  j["id"] = c.id;
  j["category"] = category_name(c.category);
  j["correct_statement"] = c.correct_statement;
  j["erroneous_statement"] = c.erroneous_statement;
  j["error_description"] = c.error_description;
  return j.dump();
}

FitnessRecord fitness_from_json_line(std::string_view line) {
  try {
    auto r = fitness_from_json(ojson::parse(line));
    validate(r);
    return r;
  } catch (const ojson::exception& e) {
    throw ParseError(e.what());
  }
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw ValidationError("cannot format number");
  return std::string(buf, end);
}

}  // namespace promptscape
