#include "promptscape/evaluation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "promptscape/error.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

using ojson = nlohmann::ordered_json;

namespace {

bool strippable(unsigned char c, bool leading) {
  if (!std::ispunct(c)) return false;
  return !(leading && (c == '+' || c == '-'));
}

std::string normalize_minus(std::string_view token) {
  // U+2212 MINUS SIGN counts as '-'.
  std::string out;
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (token.compare(i, 3, "\xE2\x88\x92") == 0) {
      out += '-';
      i += 2;
    } else {
      out += token[i];
    }
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

const std::string& statement(const TestCase& c, StatementKind kind) {
  return kind == StatementKind::kCorrect ? c.correct_statement : c.erroneous_statement;
}

}  // namespace

std::string_view statement_kind_name(StatementKind kind) {
  return kind == StatementKind::kCorrect ? "correct" : "erroneous";
}

void validate(const EvalConfig& config) {
  if (!(config.generator_temperature >= 0.0) || !(config.evaluator_temperature >= 0.0)) {
    throw ValidationError("temperatures must be >= 0");
  }
  if (config.max_concurrent == 0) throw ValidationError("max_concurrent must be positive");
  if (config.retries < 0) throw ValidationError("retries must be >= 0");
}

ChatRequest build_generator_request(const Prompt& prompt, std::string_view statement,
                                    const EvalConfig& config) {
  if (prompt.text.empty()) throw ValidationError("generator request: empty prompt text");
  if (statement.empty()) throw ValidationError("generator request: empty statement");
  ChatRequest r;
  r.model = config.generator_model;
  r.messages = {{"system", prompt.text}, {"user", std::string(statement)}};
  r.temperature = config.generator_temperature;
  r.seed = config.seed;
  r.metadata[std::string(kMetaPersona)] = std::string(kPersonaGenerator);
  return r;
}

ChatRequest build_generator_request(const Prompt& prompt, const TestCase& test_case,
                                    StatementKind kind, const EvalConfig& config) {
  auto r = build_generator_request(prompt, statement(test_case, kind), config);
  r.metadata[std::string(kMetaStatementKind)] = std::string(statement_kind_name(kind));
  r.metadata["case_id"] = test_case.id;
  return r;
}

ChatRequest build_evaluator_request(std::string_view generator_response, const TestCase& test_case,
                                    StatementKind kind, const EvalConfig& config) {
  if (generator_response.empty()) throw ValidationError("evaluator request: empty response");
  const std::string truth = kind == StatementKind::kCorrect
                                ? "The statement contains no error."
                                : "The statement contains an error: " + test_case.error_description;
  std::string user = "Statement: " + statement(test_case, kind) + "\nGround truth: " + truth +
                     "\nAnswer to grade:\n" + std::string(generator_response);
  ChatRequest r;
  r.model = config.evaluator_model;
  r.messages = {{"system", config.evaluator_instruction}, {"user", std::move(user)}};
  r.temperature = config.evaluator_temperature;
  r.seed = config.seed;
  r.metadata[std::string(kMetaPersona)] = std::string(kPersonaEvaluator);
  r.metadata[std::string(kMetaStatementKind)] = std::string(statement_kind_name(kind));
  r.metadata["case_id"] = test_case.id;
  return r;
}

Score parse_score(std::string_view evaluator_text) {
  std::istringstream in{normalize_minus(evaluator_text)};
  std::string token;
  while (in >> token) {
    std::size_t b = 0, e = token.size();
    while (b < e && strippable(static_cast<unsigned char>(token[b]), true)) ++b;
    while (e > b && strippable(static_cast<unsigned char>(token[e - 1]), false)) --e;
    const std::string_view core(token.data() + b, e - b);
    if (core == "+1" || core == "1") return Score::kAligned;
    if (core == "0") return Score::kPartial;
    if (core == "-1") return Score::kContradicts;
  }
  throw ParseError("no score token in evaluator output: " + std::string(evaluator_text.substr(0, 120)));
}

ConfusionCounts score_to_confusion(Score score, StatementKind kind) {
  ConfusionCounts c;
  switch (score) {
    case Score::kPartial:
      c.tp = c.tn = c.fp = c.fn = 0.25;
      break;
    case Score::kAligned:
      (kind == StatementKind::kErroneous ? c.tp : c.tn) = 1.0;
      break;
    case Score::kContradicts:
      (kind == StatementKind::kErroneous ? c.fn : c.fp) = 1.0;
      break;
  }
  return c;
}

double accuracy(const ConfusionCounts& counts) {
  const double total = counts.total();
  if (!(total > 0.0)) throw ValidationError("accuracy: total weight is zero");
  return (counts.tp + counts.tn) / total;
}

PromptEvaluation evaluate_prompt(const Prompt& prompt, const std::vector<TestCase>& cases,
                                 const EvalBackends& backends, const EvalConfig& config) {
  validate(config);
  if (cases.empty()) throw ValidationError("evaluate_prompt: no test cases");
  if (!backends.generator || !backends.evaluator) {
    throw ValidationError("evaluate_prompt: both backends are required");
  }

  PromptEvaluation out;
  ConfusionCounts overall;
  std::map<Category, ConfusionCounts> per_category;

  for (const auto& test_case : cases) {
    for (StatementKind kind : {StatementKind::kCorrect, StatementKind::kErroneous}) {
      StatementTrial trial{test_case.id, kind, {}, Score::kPartial, false};
      const auto gen_request = build_generator_request(prompt, test_case, kind, config);

      std::optional<std::string> response;
      std::string last_error;
      for (int attempt = 0; attempt <= config.retries && !response; ++attempt) {
        try {
          auto text = backends.generator(gen_request);
          if (text.empty()) throw BackendError("generator returned an empty response");
          response = std::move(text);
        } catch (const std::exception& e) {
          last_error = e.what();
        }
      }
      if (!response) {
        ++out.failed_trials;
        out.errors.push_back(prompt.id + "/" + test_case.id + "/" +
                             std::string(statement_kind_name(kind)) + ": generator: " + last_error);
        continue;
      }
      trial.generator_response = *response;

      const auto eval_request = build_evaluator_request(*response, test_case, kind, config);
      std::optional<Score> score;
      bool backend_ok = false;
      for (int attempt = 0; attempt <= config.retries && !score; ++attempt) {
        try {
          const auto text = backends.evaluator(eval_request);
          backend_ok = true;
          score = parse_score(text);
        } catch (const std::exception& e) {
          last_error = e.what();
        }
      }
      if (!score && !backend_ok) {
        ++out.failed_trials;
        out.errors.push_back(prompt.id + "/" + test_case.id + "/" +
                             std::string(statement_kind_name(kind)) + ": evaluator: " + last_error);
        continue;
      }
      if (!score) {
        score = Score::kPartial;
        trial.fallback = true;
        ++out.warnings;
      }
      trial.score = *score;

      const auto delta = score_to_confusion(*score, kind);
      overall += delta;
      per_category[test_case.category] += delta;
      out.trials.push_back(std::move(trial));
    }
  }

  if (out.failed_trials == 0) {
    FitnessRecord record;
    record.prompt_id = prompt.id;
    record.overall = overall;
    record.accuracy = accuracy(overall);
    for (const auto& [cat, counts] : per_category) {
      record.per_category[cat] = counts;
      record.per_category_accuracy[cat] = accuracy(counts);
    }
    out.record = std::move(record);
  }
  return out;
}

std::string evaluation_fingerprint(const std::vector<TestCase>& cases, const EvalConfig& config) {
  std::uint64_t h = kFnvOffset;
  for (const auto& c : cases) h = fnv1a(to_json_line(c) + "\n", h);
  ojson j;
  j["generator_model"] = config.generator_model;
  j["evaluator_model"] = config.evaluator_model;
  j["generator_temperature"] = config.generator_temperature;
  j["evaluator_temperature"] = config.evaluator_temperature;
  j["seed"] = config.seed ? ojson(*config.seed) : ojson(nullptr);
  j["evaluator_instruction"] = config.evaluator_instruction;
  h = fnv1a(j.dump(), h);
  return hex64(h);
}

PopulationResult evaluate_population(const std::vector<Prompt>& prompts,
                                     const std::vector<TestCase>& cases,
                                     const EvalBackends& backends, const EvalConfig& config,
                                     const std::optional<std::filesystem::path>& resume_ledger) {
  validate(config);
  if (cases.empty()) throw ValidationError("evaluate_population: no test cases");
  {
    std::unordered_set<std::string_view> ids;
    for (const auto& p : prompts) {
      if (!ids.insert(p.id).second) throw ValidationError("duplicate prompt id '" + p.id + "'");
    }
  }

  const std::string fingerprint = evaluation_fingerprint(cases, config);
  // Ledger entries also cover the prompt text so an edited prompt is re-run.
  const auto entry_hash = [&](const Prompt& p) { return hex64(fnv1a(p.text, fnv1a(fingerprint))); };
  std::unordered_map<std::string, std::pair<std::string, FitnessRecord>> done;
  if (resume_ledger && std::filesystem::exists(*resume_ledger)) {
    std::ifstream in(*resume_ledger);
    if (!in) throw IoError("cannot open resume ledger " + resume_ledger->string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      try {
        const auto j = ojson::parse(lines[i]);
        auto record = fitness_from_json_line(j.at("record").dump());
        auto id = record.prompt_id;
        done.insert_or_assign(std::move(id), std::make_pair(j.at("hash").get<std::string>(), std::move(record)));
      } catch (const std::exception& e) {
        // A torn final line is what an interrupted append leaves behind.
        if (i + 1 == lines.size()) break;
        throw ParseError(resume_ledger->string(), i + 1, e.what());
      }
    }
  }

  PopulationResult result;
  std::vector<std::optional<PromptEvaluation>> slots(prompts.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (auto it = done.find(prompts[i].id); it != done.end() && it->second.first == entry_hash(prompts[i])) {
      PromptEvaluation cached;
      cached.record = it->second.second;
      slots[i] = std::move(cached);
      ++result.resumed;
    } else {
      pending.push_back(i);
    }
  }

  std::ofstream ledger;
  if (resume_ledger) {
    ledger.open(*resume_ledger, std::ios::app | std::ios::binary);
    if (!ledger) throw IoError("cannot append to resume ledger " + resume_ledger->string());
  }
  std::mutex ledger_mutex;
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t n = next++; n < pending.size(); n = next++) {
      const std::size_t i = pending[n];
      PromptEvaluation eval;
      try {
        eval = evaluate_prompt(prompts[i], cases, backends, config);
      } catch (const std::exception& e) {
        eval.failed_trials = 1;
        eval.errors.push_back(prompts[i].id + ": " + e.what());
      }
      if (eval.record && ledger.is_open()) {
        ojson line;
        line["prompt_id"] = prompts[i].id;
        line["hash"] = entry_hash(prompts[i]);
        line["record"] = ojson::parse(to_json_line(*eval.record));
        std::lock_guard lock(ledger_mutex);
        ledger << line.dump() << '\n';
        ledger.flush();
      }
      slots[i] = std::move(eval);
    }
  };

  const std::size_t workers = std::min(config.max_concurrent, pending.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (ledger.is_open() && !ledger) throw IoError("write failure on resume ledger");

  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto& slot = *slots[i];
    result.warnings += slot.warnings;
    if (slot.record) {
      result.records.push_back(std::move(*slot.record));
    } else {
      result.failed_prompt_ids.push_back(prompts[i].id);
    }
    for (auto& e : slot.errors) result.errors.push_back(std::move(e));
  }
  return result;
}

}  // namespace promptscape
